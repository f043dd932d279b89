//! Ground truth for the estimators.
//!
//! On a finite state space every Feynman-Kac quantity is a finite sum, so the
//! marginals, the asymptotic variances and the doubled-chain measures `mu_{b,t}`
//! are computed exactly by vector recursions. For other models the asymptotic
//! variance is estimated by brute force: `N` times the sample variance of
//! independent filter outputs.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{run, FilterConfig, FilterState};
use crate::model::Model;
use crate::resample::categorical;
use crate::rng::RngStream;
use crate::smoothing::backward_average;

/// Hidden Markov model on `{0, .., K-1}` with potentials given per step.
///
/// Step `t` uses `potentials[t % len]`, so a short table can drive a long run.
#[derive(Clone, Debug)]
pub struct DiscreteHmm {
    init: Vec<f64>,
    trans: Vec<Vec<f64>>,
    potentials: Vec<Vec<f64>>,
    init_table: WeightedIndex<f64>,
    trans_tables: Vec<WeightedIndex<f64>>,
    bound: f64,
}

const SIMPLEX_TOLERANCE: f64 = 1e-9;

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidParameter(format!("{what} is not a probability vector")));
    }
    Ok(())
}

impl DiscreteHmm {
    pub fn new(init: Vec<f64>, trans: Vec<Vec<f64>>, potentials: Vec<Vec<f64>>) -> Result<Self> {
        let k = init.len();
        check_simplex(&init, "initial law")?;
        if trans.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: trans.len(),
            });
        }
        for row in &trans {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            check_simplex(row, "transition row")?;
        }
        if potentials.is_empty() {
            return Err(Error::InvalidParameter("at least one potential vector is required".into()));
        }
        let mut bound = 0.0f64;
        for g in &potentials {
            if g.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: g.len(),
                });
            }
            if g.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter("potentials must be positive and finite".into()));
            }
            bound = g.iter().fold(bound, |m, x| m.max(*x));
        }
        let init_table = categorical(&init)?;
        let trans_tables = trans.iter().map(|r| categorical(r)).collect::<Result<_>>()?;
        Ok(Self {
            init,
            trans,
            potentials,
            init_table,
            trans_tables,
            bound,
        })
    }

    /// Random instance with `k` states and `steps` potential vectors.
    ///
    /// Transition entries are bounded away from zero and potentials lie in
    /// `[0.2, 1.2]`.
    pub fn random<R: Rng + ?Sized>(k: usize, steps: usize, rng: &mut R) -> Self {
        let simplex = |rng: &mut R| {
            let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let init = simplex(rng);
        let trans = (0..k).map(|_| simplex(rng)).collect();
        let potentials = (0..steps.max(1))
            .map(|_| (0..k).map(|_| 0.2 + rng.gen::<f64>()).collect())
            .collect();
        Self::new(init, trans, potentials).expect("valid random instance")
    }

    pub fn states(&self) -> usize {
        self.init.len()
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn trans(&self) -> &[Vec<f64>] {
        &self.trans
    }

    pub fn g(&self, t: usize) -> &[f64] {
        &self.potentials[t % self.potentials.len()]
    }

    /// `(P f)(x) = sum_z P(x, z) f(z)`.
    fn apply_kernel(&self, f: &[f64]) -> Vec<f64> {
        self.trans.iter().map(|row| row.iter().zip(f).map(|(p, x)| p * x).sum()).collect()
    }

    /// `(mu P)(z) = sum_x mu(x) P(x, z)`.
    fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let k = self.states();
        let mut out = vec![0.0; k];
        for (m, row) in mu.iter().zip(&self.trans) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        out
    }

    /// The unnormalized marginals `gamma_0, .., gamma_t` as vectors.
    pub fn gammas(&self, t: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.init.clone()];
        for s in 0..t {
            let weighted: Vec<f64> = out[s].iter().zip(self.g(s)).map(|(m, g)| m * g).collect();
            out.push(self.push_forward(&weighted));
        }
        out
    }

    /// `Qbar_{s+1:t}[f] = Q_{s+1} .. Q_t f` with `Q_u f = g_{u-1} P f`.
    pub fn qbar(&self, s: usize, t: usize, f: &[f64]) -> Vec<f64> {
        let mut v = f.to_vec();
        for u in (s + 1..=t).rev() {
            v = self.apply_kernel(&v).iter().zip(self.g(u - 1)).map(|(x, g)| x * g).collect();
        }
        v
    }
}

impl Model for DiscreteHmm {
    type State = usize;

    fn state_dim(&self) -> usize {
        1
    }

    fn init_sample(&self, rng: &mut dyn RngCore) -> usize {
        self.init_table.sample(rng)
    }

    fn init_log_density(&self, x: &usize) -> Option<f64> {
        Some(self.init[*x].ln())
    }

    fn trans_sample(&self, rng: &mut dyn RngCore, prev: &usize, _t: usize) -> usize {
        self.trans_tables[*prev].sample(rng)
    }

    fn trans_density(&self, prev: &usize, next: &usize, _t: usize) -> f64 {
        self.trans[*prev][*next]
    }

    fn potential(&self, x: &usize, t: usize) -> f64 {
        self.g(t)[*x]
    }

    fn potential_bound(&self) -> f64 {
        self.bound
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `gamma_t(h)`.
pub fn exact_gamma(hmm: &DiscreteHmm, t: usize, h: &[f64]) -> f64 {
    dot(&hmm.gammas(t)[t], h)
}

/// `eta_t(h) = gamma_t(h) / gamma_t(1)`.
pub fn exact_eta(hmm: &DiscreteHmm, t: usize, h: &[f64]) -> f64 {
    let g = &hmm.gammas(t)[t];
    dot(g, h) / g.iter().sum::<f64>()
}

/// `phi_t(h) = gamma_t(g_t h) / gamma_t(g_t)`.
pub fn exact_phi(hmm: &DiscreteHmm, t: usize, h: &[f64]) -> f64 {
    let g = &hmm.gammas(t)[t];
    let w: Vec<f64> = g.iter().zip(hmm.g(t)).map(|(m, p)| m * p).collect();
    dot(&w, h) / w.iter().sum::<f64>()
}

/// Which particle output an asymptotic variance refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// `gamma_t^N(h)`.
    Gamma,
    /// `eta_t^N(h)`.
    Eta,
    /// `phi_t^N(h)`.
    Phi,
}

/// Exact asymptotic variance of `gamma_t^N(h)`, `eta_t^N(h)` or `phi_t^N(h)`.
pub fn exact_asym_var(hmm: &DiscreteHmm, t: usize, h: &[f64], target: Target) -> f64 {
    let gammas = hmm.gammas(t);
    let gt = &gammas[t];
    let mass = |s: usize| gammas[s].iter().sum::<f64>();
    let second_moment = |s: usize, f: &[f64]| {
        let q = hmm.qbar(s, t, f);
        mass(s) * gammas[s].iter().zip(&q).map(|(m, x)| m * x * x).sum::<f64>()
    };
    match target {
        Target::Gamma => {
            let total = dot(gt, h);
            (0..=t).map(|s| second_moment(s, h) - total * total).sum()
        }
        Target::Eta => {
            let eta = dot(gt, h) / mass(t);
            let c: Vec<f64> = h.iter().map(|x| x - eta).collect();
            (0..=t).map(|s| second_moment(s, &c)).sum::<f64>() / mass(t).powi(2)
        }
        Target::Phi => {
            let phi = exact_phi(hmm, t, h);
            let c: Vec<f64> = h.iter().zip(hmm.g(t)).map(|(x, g)| g * (x - phi)).collect();
            let next_mass = dot(gt, hmm.g(t));
            (0..=t).map(|s| second_moment(s, &c)).sum::<f64>() / next_mass.powi(2)
        }
    }
}

/// `mu_{b,t}(h (x) f)` through the doubled chain on `K^2` states.
///
/// `mask` has length `t + 1`; a set bit couples the two coordinates at that step.
pub fn exact_mu(hmm: &DiscreteHmm, mask: &[bool], h: &[f64], f: &[f64]) -> f64 {
    let k = hmm.states();
    let t = mask.len() - 1;
    let pi = hmm.init();
    let mut mu = vec![0.0; k * k];
    for x in 0..k {
        if mask[0] {
            mu[x * k + x] = pi[x];
        } else {
            for y in 0..k {
                mu[x * k + y] = pi[x] * pi[y];
            }
        }
    }
    for s in 1..=t {
        let g = hmm.g(s - 1);
        let p = hmm.trans();
        let mut next = vec![0.0; k * k];
        for x in 0..k {
            for y in 0..k {
                let m = mu[x * k + y] * g[x] * g[y];
                if m == 0.0 {
                    continue;
                }
                for z in 0..k {
                    if mask[s] {
                        next[z * k + z] += m * p[x][z];
                    } else {
                        for w in 0..k {
                            next[z * k + w] += m * p[x][z] * p[y][w];
                        }
                    }
                }
            }
        }
        mu = next;
    }
    (0..k)
        .flat_map(|x| (0..k).map(move |y| (x, y)))
        .map(|(x, y)| mu[x * k + y] * h[x] * f[y])
        .sum()
}

/// Estimate and standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Sample mean with its standard error.
pub fn mean_estimate(values: &[f64]) -> Result<Estimate> {
    let r = values.len();
    if r < 2 {
        return Err(Error::TooFewReplicates(r));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0);
    Ok(Estimate {
        value: mean,
        stderr: (var / r as f64).sqrt(),
    })
}

/// Unbiased sample variance with its jackknife standard error.
pub fn variance_estimate(values: &[f64]) -> Result<Estimate> {
    let r = values.len();
    if r < 2 {
        return Err(Error::TooFewReplicates(r));
    }
    let rf = r as f64;
    let mean = values.iter().sum::<f64>() / rf;
    let dev: Vec<f64> = values.iter().map(|x| x - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let var = ss / (rf - 1.0);
    if r == 2 {
        return Ok(Estimate {
            value: var,
            stderr: f64::NAN,
        });
    }
    // leave-one-out: removing x_i lowers the centred sum of squares by d_i^2 R / (R - 1)
    let loo: Vec<f64> = dev.iter().map(|d| (ss - d * d * rf / (rf - 1.0)) / (rf - 2.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / rf;
    let spread: f64 = loo.iter().map(|v| (v - loo_mean).powi(2)).sum();
    Ok(Estimate {
        value: var,
        stderr: ((rf - 1.0) / rf * spread).sqrt(),
    })
}

/// Runs `replicate` for `0..count` in parallel, each with stream `r` of `seed`.
///
/// The output order is the replicate order whatever the thread schedule.
pub fn replicate<T, F>(count: usize, seed: u64, replicate: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|r| replicate(r, &mut RngStream::new(seed, r as u64)))
        .collect()
}

/// `N` times the sample variance of `count` independent filter outputs at time `t`.
pub fn replication_variance<M: Model>(
    model: &M,
    t: usize,
    h: &(dyn Fn(&M::State) -> f64 + Sync),
    particles: usize,
    count: usize,
    target: Target,
    seed: u64,
) -> Result<Estimate> {
    if count < 2 {
        return Err(Error::TooFewReplicates(count));
    }
    let values = replicate(count, seed, |_, rng| {
        let state = run(model, FilterConfig::new(particles), t, rng, |_, _| Ok(()))?;
        Ok(filter_output(&state, &state.map(h), target))
    })?;
    let v = variance_estimate(&values)?;
    let n = particles as f64;
    Ok(Estimate {
        value: n * v.value,
        stderr: n * v.stderr,
    })
}

/// `N` times the sample variance of the FFBS marginal smoothing estimate
/// `Q_{l|t}(h)`, for every `t` in `ell..=horizon`.
pub fn replication_smoothing_variance<M: Model>(
    model: &M,
    h: &(dyn Fn(&M::State) -> f64 + Sync),
    ell: usize,
    horizon: usize,
    particles: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if count < 2 {
        return Err(Error::TooFewReplicates(count));
    }
    if ell > horizon {
        return Err(Error::InvalidParameter(format!("smoothing time {ell} exceeds horizon {horizon}")));
    }
    let runs = replicate(count, seed, |_, rng| {
        let mut stat: Vec<f64> = Vec::new();
        let mut out = Vec::with_capacity(horizon - ell + 1);
        run(model, FilterConfig::new(particles), horizon, rng, |prev, curr| {
            if curr.t() == ell {
                stat = curr.map(h);
            } else if curr.t() > ell {
                stat = backward_average(model, prev.expect("t > 0"), curr.particles(), &stat)?;
            }
            if curr.t() >= ell {
                out.push(curr.filter_estimate(&stat));
            }
            Ok(())
        })?;
        Ok(out)
    })?;
    let n = particles as f64;
    (0..=horizon - ell)
        .map(|i| {
            let column: Vec<f64> = runs.iter().map(|r| r[i]).collect();
            let v = variance_estimate(&column)?;
            Ok(Estimate {
                value: n * v.value,
                stderr: n * v.stderr,
            })
        })
        .collect()
}

/// `N` times the sample variance of `eta_t^N(h)` for every `t` in `0..=horizon`,
/// from one set of runs.
pub fn replication_curve<M: Model>(
    model: &M,
    h: &(dyn Fn(&M::State) -> f64 + Sync),
    horizon: usize,
    particles: usize,
    count: usize,
    target: Target,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if count < 2 {
        return Err(Error::TooFewReplicates(count));
    }
    let runs = replicate(count, seed, |_, rng| {
        let mut out = Vec::with_capacity(horizon + 1);
        run(model, FilterConfig::new(particles), horizon, rng, |_, curr| {
            out.push(filter_output(curr, &curr.map(h), target));
            Ok(())
        })?;
        Ok(out)
    })?;
    let n = particles as f64;
    (0..=horizon)
        .map(|t| {
            let column: Vec<f64> = runs.iter().map(|r| r[t]).collect();
            let v = variance_estimate(&column)?;
            Ok(Estimate {
                value: n * v.value,
                stderr: n * v.stderr,
            })
        })
        .collect()
}

fn filter_output<S>(state: &FilterState<S>, h: &[f64], target: Target) -> f64 {
    match target {
        Target::Gamma => state.gamma_estimate(h),
        Target::Eta => state.predictor_estimate(h),
        Target::Phi => state.filter_estimate(h),
    }
}
