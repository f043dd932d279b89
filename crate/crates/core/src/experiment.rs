//! Experiment driver behind the command-line tool.
//!
//! A run filters the stochastic volatility model `replicates` times and records,
//! at every step, each requested variance estimate of `eta_t^N(x)` (or of the
//! smoothed mean for `smoothing:l`) together with the diversity diagnostics
//! `D^BS_N(t)` and `D^GT_N(t)`.
//!
//! Configuration is a flat `key = value` text; see [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::backward::{identity_check, BackwardMatrix, BsStats, MASK_HORIZON};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, FilterState};
use crate::genealogy::{self, GtStats};
use crate::models::{read_observations, sv_simulate, StochasticVolatility, SvParams};
use crate::oracle::{replicate, replication_curve, replication_smoothing_variance, DiscreteHmm, Estimate, Target};
use crate::paris::ParisStats;
use crate::rng::RngStream;
use crate::smoothing::SmoothingStats;

/// One variance estimator selected by key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKey {
    /// `cle`
    Cle,
    /// `lag:<lambda>`
    Lag(usize),
    /// `bs`: disjoint backward estimator.
    Bs,
    /// `bs_tbt`: term-by-term backward estimator.
    BsTbt,
    /// `paris:<M>`
    Paris(usize),
    /// `gt_tbt`: genealogy-tracing term-by-term estimator.
    GtTbt,
    /// `smoothing:<l>`: marginal smoothing variance at time `l`.
    Smoothing(usize),
}

impl FromStr for EstimatorKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownEstimator(s.to_string());
        let arg = |rest: &str| rest.parse::<usize>().map_err(|_| unknown());
        match s.split_once(':') {
            None => match s {
                "cle" => Ok(Self::Cle),
                "bs" => Ok(Self::Bs),
                "bs_tbt" => Ok(Self::BsTbt),
                "gt_tbt" => Ok(Self::GtTbt),
                _ => Err(unknown()),
            },
            Some(("lag", rest)) => Ok(Self::Lag(arg(rest)?)),
            Some(("paris", rest)) => Ok(Self::Paris(arg(rest)?)),
            Some(("smoothing", rest)) => Ok(Self::Smoothing(arg(rest)?)),
            Some(_) => Err(unknown()),
        }
    }
}

impl fmt::Display for EstimatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cle => write!(f, "cle"),
            Self::Lag(l) => write!(f, "lag:{l}"),
            Self::Bs => write!(f, "bs"),
            Self::BsTbt => write!(f, "bs_tbt"),
            Self::Paris(m) => write!(f, "paris:{m}"),
            Self::GtTbt => write!(f, "gt_tbt"),
            Self::Smoothing(l) => write!(f, "smoothing:{l}"),
        }
    }
}

/// Experiment configuration.
///
/// | key | default | meaning |
/// |---|---|---|
/// | `model` | `sv` | only the stochastic volatility model is wired in |
/// | `phi`, `beta`, `sigma` | `0.975`, `0.641`, `0.165` | model parameters |
/// | `observations` | none | observation file; simulated from `obs_seed` when absent |
/// | `obs_seed` | `1` | seed of the simulated observation record |
/// | `particles` | `1000` | `N` |
/// | `horizon` | `100` | last time index `T` |
/// | `replicates` | `1` | independent filter runs |
/// | `seed` | `0` | base seed; replicate `r` uses stream `r` |
/// | `estimators` | `cle,bs` | comma-separated estimator keys |
/// | `lag_capacity` | largest requested lag | Enoch ring size |
/// | `timing` | `false` | fill the `step_seconds` column |
/// | `oracle_particles` | `4000` | `N` of the replication oracle |
/// | `oracle_replicates` | `500` | runs of the replication oracle |
/// | `reference` | none | oracle CSV used for the error metric in the summary |
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: SvParams,
    pub observations: Option<String>,
    pub obs_seed: u64,
    pub particles: usize,
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(serialize_with = "serialize_keys")]
    pub estimators: Vec<EstimatorKey>,
    pub lag_capacity: Option<usize>,
    pub timing: bool,
    pub oracle_particles: usize,
    pub oracle_replicates: usize,
    pub reference: Option<String>,
}

fn serialize_keys<S: serde::Serializer>(keys: &[EstimatorKey], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(keys.iter().map(ToString::to_string))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "sv".into(),
            params: SvParams::default(),
            observations: None,
            obs_seed: 1,
            particles: 1000,
            horizon: 100,
            replicates: 1,
            seed: 0,
            estimators: vec![EstimatorKey::Cle, EstimatorKey::Bs],
            lag_capacity: None,
            timing: false,
            oracle_particles: 4000,
            oracle_replicates: 500,
            reference: None,
        }
    }
}

/// Splits `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::InvalidParameter(format!("expected `key = value`, got `{l}`")))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Applies `key = value` pairs in order; later pairs override earlier ones.
    pub fn apply<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (key, value) in pairs {
            let none_if_empty = |v: &str| (!v.is_empty()).then(|| v.to_string());
            match key {
                "model" => self.model = value.to_string(),
                "phi" => self.params.phi = parse_value(key, value)?,
                "beta" => self.params.beta = parse_value(key, value)?,
                "sigma" => self.params.sigma = parse_value(key, value)?,
                "observations" => self.observations = none_if_empty(value),
                "obs_seed" => self.obs_seed = parse_value(key, value)?,
                "particles" => self.particles = parse_value(key, value)?,
                "horizon" => self.horizon = parse_value(key, value)?,
                "replicates" => self.replicates = parse_value(key, value)?,
                "seed" => self.seed = parse_value(key, value)?,
                "estimators" => {
                    self.estimators = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
                "lag_capacity" => self.lag_capacity = Some(parse_value(key, value)?),
                "timing" => self.timing = parse_value(key, value)?,
                "oracle_particles" => self.oracle_particles = parse_value(key, value)?,
                "oracle_replicates" => self.oracle_replicates = parse_value(key, value)?,
                "reference" => self.reference = none_if_empty(value),
                _ => return Err(Error::InvalidParameter(format!("unknown configuration key `{key}`"))),
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let pairs = parse_pairs(text)?;
        config.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(config)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        vec![
            ("model", self.model.clone()),
            ("phi", format!("{:?}", self.params.phi)),
            ("beta", format!("{:?}", self.params.beta)),
            ("sigma", format!("{:?}", self.params.sigma)),
            ("observations", opt(&self.observations)),
            ("obs_seed", self.obs_seed.to_string()),
            ("particles", self.particles.to_string()),
            ("horizon", self.horizon.to_string()),
            ("replicates", self.replicates.to_string()),
            ("seed", self.seed.to_string()),
            (
                "estimators",
                self.estimators.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            ),
            ("lag_capacity", self.effective_lag_capacity().to_string()),
            ("timing", self.timing.to_string()),
            ("oracle_particles", self.oracle_particles.to_string()),
            ("oracle_replicates", self.oracle_replicates.to_string()),
            ("reference", opt(&self.reference)),
        ]
    }

    fn effective_lag_capacity(&self) -> usize {
        self.lag_capacity.unwrap_or_else(|| {
            self.estimators
                .iter()
                .filter_map(|k| match k {
                    EstimatorKey::Lag(l) => Some(*l),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.model != "sv" {
            return Err(Error::InvalidParameter(format!("unknown model `{}`", self.model)));
        }
        self.params.validate()?;
        if self.particles < 2 {
            return Err(Error::TooFewParticles(self.particles));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        let capacity = self.effective_lag_capacity();
        for key in &self.estimators {
            match *key {
                EstimatorKey::Lag(l) if l > capacity => {
                    return Err(Error::RingCapacityExceeded { lag: l, capacity });
                }
                EstimatorKey::Paris(m) if m <= 1 => return Err(Error::ParisDrawCount(m)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Loads or simulates the observation record `y_0, .., y_T`.
    pub fn build_model(&self) -> Result<StochasticVolatility> {
        self.validate()?;
        let obs = match &self.observations {
            Some(path) => {
                let obs = read_observations(path)?;
                if obs.len() <= self.horizon {
                    return Err(Error::InvalidParameter(format!(
                        "observation file has {} values, horizon {} needs {}",
                        obs.len(),
                        self.horizon,
                        self.horizon + 1
                    )));
                }
                obs
            }
            None => sv_simulate(self.params, self.horizon + 1, &mut RngStream::new(self.obs_seed, 0))?.1,
        };
        StochasticVolatility::new(self.params, obs)
    }
}

/// One output line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub replicate: usize,
    pub t: usize,
    pub estimator: String,
    pub estimate: f64,
    pub d_bs: Option<f64>,
    pub d_gt: f64,
    pub step_seconds: Option<f64>,
}

/// Column order of the experiment CSV.
pub const CSV_COLUMNS: [&str; 7] = ["replicate", "t", "estimator", "estimate", "d_bs", "d_gt", "step_seconds"];

/// Everything a single filter run produces, keyed by estimator.
struct Trackers {
    bs: Option<BsStats>,
    gt: Option<GtStats>,
    paris: Vec<(usize, ParisStats)>,
    smoothing: Vec<(usize, Option<SmoothingStats>)>,
}

fn identity(x: &f64) -> f64 {
    *x
}

/// Runs one replicate and returns its rows in `(t, estimator)` order.
pub fn run_replicate(config: &ExperimentConfig, model: &StochasticVolatility, replicate: usize) -> Result<Vec<Row>> {
    let n = config.particles;
    let keys = &config.estimators;
    let needs_sum = keys.iter().any(|k| matches!(k, EstimatorKey::BsTbt | EstimatorKey::Smoothing(_)));
    let needs_bs = needs_sum || keys.contains(&EstimatorKey::Bs);
    let mut trackers = Trackers {
        bs: needs_bs.then(|| BsStats::new(n, needs_sum)),
        gt: keys.contains(&EstimatorKey::GtTbt).then(|| GtStats::new(n)),
        paris: keys
            .iter()
            .filter_map(|k| match k {
                EstimatorKey::Paris(m) => Some(ParisStats::new(n, *m).map(|p| (*m, p))),
                _ => None,
            })
            .collect::<Result<_>>()?,
        smoothing: keys
            .iter()
            .filter_map(|k| match k {
                EstimatorKey::Smoothing(l) => Some((*l, None)),
                _ => None,
            })
            .collect(),
    };
    let needs_beta = needs_bs || !trackers.paris.is_empty();
    let mut rng = RngStream::new(config.seed, replicate as u64);
    let mut draw_rng = rng.fork(u64::MAX);
    let filter = FilterConfig::new(n).with_lag_capacity(config.effective_lag_capacity());
    let mut state = FilterState::initialize(model, filter, &mut rng)?;
    let mut rows = Vec::new();
    start_smoothing(&mut trackers, &state)?;
    emit(config, &trackers, &state, replicate, None, &mut rows)?;
    for _ in 0..config.horizon {
        let clock = Instant::now();
        let next = state.step(model, &mut rng)?;
        let beta = if needs_beta {
            Some(BackwardMatrix::compute(model, &state, next.particles())?)
        } else {
            None
        };
        if let (Some(bs), Some(beta)) = (trackers.bs.as_mut(), beta.as_ref()) {
            bs.update(beta, state.norm_weights())?;
        }
        for (_, paris) in trackers.paris.iter_mut() {
            paris.sample_and_update(beta.as_ref().expect("beta computed"), &mut draw_rng)?;
        }
        if let Some(gt) = trackers.gt.as_mut() {
            gt.update(&next, state.norm_weights())?;
        }
        for (_, stats) in trackers.smoothing.iter_mut() {
            if let Some(stats) = stats.as_mut() {
                let bs = trackers.bs.as_ref().expect("smoothing keeps backward statistics");
                stats.update(beta.as_ref().expect("beta computed"), &next, bs)?;
            }
        }
        state = next;
        start_smoothing(&mut trackers, &state)?;
        let seconds = clock.elapsed().as_secs_f64();
        emit(config, &trackers, &state, replicate, Some(seconds), &mut rows)?;
    }
    Ok(rows)
}

fn start_smoothing(trackers: &mut Trackers, state: &FilterState<f64>) -> Result<()> {
    for (ell, stats) in trackers.smoothing.iter_mut() {
        if *ell == state.t() {
            let bs = trackers.bs.as_ref().expect("smoothing keeps backward statistics");
            *stats = Some(SmoothingStats::start(state, bs, &state.map(identity))?);
        }
    }
    Ok(())
}

fn emit(
    config: &ExperimentConfig,
    trackers: &Trackers,
    state: &FilterState<f64>,
    replicate: usize,
    seconds: Option<f64>,
    rows: &mut Vec<Row>,
) -> Result<()> {
    let h = state.map(identity);
    let d_bs = trackers.bs.as_ref().map(BsStats::diversity);
    let d_gt = genealogy::diversity(state);
    let step_seconds = if config.timing { Some(seconds.unwrap_or(0.0)) } else { None };
    for key in &config.estimators {
        let estimate = match *key {
            EstimatorKey::Cle => genealogy::cle_variance(state, &h)?,
            EstimatorKey::Lag(l) => genealogy::lag_variance(state, &h, l)?,
            EstimatorKey::Bs => trackers.bs.as_ref().expect("tracked").var_eta(state, &h)?,
            EstimatorKey::BsTbt => trackers.bs.as_ref().expect("tracked").tbt_var_eta(state, &h)?,
            EstimatorKey::Paris(m) => {
                let (_, p) = trackers.paris.iter().find(|(pm, _)| *pm == m).expect("tracked");
                p.var_eta(state, &h)?
            }
            EstimatorKey::GtTbt => trackers.gt.as_ref().expect("tracked").var_eta(state, &h)?,
            EstimatorKey::Smoothing(l) => {
                let (_, stats) = trackers.smoothing.iter().find(|(sl, _)| *sl == l).expect("tracked");
                match stats {
                    Some(stats) => stats.variance(state, trackers.bs.as_ref().expect("tracked"))?,
                    None => continue,
                }
            }
        };
        rows.push(Row {
            replicate,
            t: state.t(),
            estimator: key.to_string(),
            estimate,
            d_bs,
            d_gt,
            step_seconds,
        });
    }
    Ok(())
}

/// Runs every replicate (in parallel) and concatenates rows by replicate id.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<Row>> {
    let model = config.build_model()?;
    let per_replicate = replicate(config.replicates, config.seed, |r, _| run_replicate(config, &model, r))?;
    Ok(per_replicate.into_iter().flatten().collect())
}

fn write_header<W: Write>(out: &mut W, config: &ExperimentConfig) -> Result<()> {
    for (k, v) in config.to_pairs() {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes the `#`-prefixed configuration followed by the rows.
pub fn write_rows<W: Write>(mut out: W, config: &ExperimentConfig, rows: &[Row]) -> Result<()> {
    write_header(&mut out, config)?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_COLUMNS)?;
    for row in rows {
        writer.write_record([
            row.replicate.to_string(),
            row.t.to_string(),
            row.estimator.clone(),
            format!("{:?}", row.estimate),
            fmt_opt(row.d_bs),
            format!("{:?}", row.d_gt),
            fmt_opt(row.step_seconds),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Median and quartiles across replicates at one time step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quartiles {
    pub t: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn quartiles(by_t: BTreeMap<usize, Vec<f64>>) -> Vec<Quartiles> {
    by_t.into_iter()
        .map(|(t, v)| Quartiles {
            t,
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub estimators: BTreeMap<String, Vec<Quartiles>>,
    /// Quartiles of `|estimate / reference - 1|`, when a reference curve is given.
    pub errors: BTreeMap<String, Vec<Quartiles>>,
    pub d_bs: Vec<Quartiles>,
    pub d_gt: Vec<Quartiles>,
}

/// Summarizes rows across replicates; `reference[t]` enables the error metric.
pub fn summarize(config: &ExperimentConfig, rows: &[Row], reference: Option<&[f64]>) -> Result<Summary> {
    let mut est: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut err: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut d_bs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut d_gt: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let first = rows.first().map(|r| r.estimator.clone());
    for row in rows {
        est.entry(row.estimator.clone()).or_default().entry(row.t).or_default().push(row.estimate);
        if let Some(reference) = reference.and_then(|r| r.get(row.t)) {
            let e = compute_error_metric(row.estimate, *reference)?;
            err.entry(row.estimator.clone()).or_default().entry(row.t).or_default().push(e);
        }
        if Some(&row.estimator) == first.as_ref() {
            if let Some(d) = row.d_bs {
                d_bs.entry(row.t).or_default().push(d);
            }
            d_gt.entry(row.t).or_default().push(row.d_gt);
        }
    }
    Ok(Summary {
        config: config.clone(),
        estimators: est.into_iter().map(|(k, v)| (k, quartiles(v))).collect(),
        errors: err.into_iter().map(|(k, v)| (k, quartiles(v))).collect(),
        d_bs: quartiles(d_bs),
        d_gt: quartiles(d_gt),
    })
}

/// `|estimate / reference - 1|`.
pub fn compute_error_metric(estimate: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::NonPositiveReference(reference));
    }
    Ok((estimate / reference - 1.0).abs())
}

/// Replication reference for the configured model: `sigma^2_{eta,t}(x)` for
/// every `t`, or the smoothing variance for `t >= ell` when `ell` is given.
pub fn reference_curve(config: &ExperimentConfig, ell: Option<usize>) -> Result<Vec<(usize, Estimate)>> {
    let model = config.build_model()?;
    let seed = config.seed ^ 0x5eed_0f_0_7ac1e;
    match ell {
        None => Ok(replication_curve(
            &model,
            &identity,
            config.horizon,
            config.oracle_particles,
            config.oracle_replicates,
            Target::Eta,
            seed,
        )?
        .into_iter()
        .enumerate()
        .collect()),
        Some(ell) => Ok(replication_smoothing_variance(
            &model,
            &identity,
            ell,
            config.horizon,
            config.oracle_particles,
            config.oracle_replicates,
            seed,
        )?
        .into_iter()
        .enumerate()
        .map(|(i, e)| (ell + i, e))
        .collect()),
    }
}

pub fn write_reference<W: Write>(mut out: W, config: &ExperimentConfig, curve: &[(usize, Estimate)]) -> Result<()> {
    write_header(&mut out, config)?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["t", "reference", "stderr"])?;
    for (t, e) in curve {
        writer.write_record([t.to_string(), format!("{:?}", e.value), format!("{:?}", e.stderr)])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a reference CSV written by [`write_reference`] into a dense vector
/// indexed by `t` (NaN where absent).
pub fn read_reference(path: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut out: Vec<f64> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let t: usize = parse_value("t", rec.get(0).unwrap_or(""))?;
        let v: f64 = parse_value("reference", rec.get(1).unwrap_or(""))?;
        if out.len() <= t {
            out.resize(t + 1, f64::NAN);
        }
        out[t] = v;
    }
    Ok(out)
}

/// Result of the algebraic identity suite.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub runs: usize,
    /// Largest relative deviation of the weighted mask sum from `gamma_t^N(h)^2`.
    pub max_identity_deviation: f64,
    /// Largest `|sum_b T^b - 1|` over all entries.
    pub max_mask_sum_deviation: f64,
}

/// Runs the exhaustive mask recursion on `runs` random discrete models with
/// `N` in `2..=4` up to `t = 3`.
pub fn identity_suite(runs: usize, seed: u64) -> Result<IdentityReport> {
    let results = replicate(runs, seed, |r, rng| {
        let hmm = DiscreteHmm::random(2 + r % 3, MASK_HORIZON + 1, rng);
        let n = 2 + r % 3;
        let values: Vec<f64> = (0..hmm.states()).map(|x| x as f64 * 1.7 - 0.9).collect();
        identity_check(&hmm, n, MASK_HORIZON, |&x| values[x], rng)
    })?;
    Ok(IdentityReport {
        runs,
        max_identity_deviation: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_mask_sum_deviation: results.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}
