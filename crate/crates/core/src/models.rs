//! Concrete models: stochastic volatility and linear Gaussian.

use std::f64::consts::{E, PI};
use std::io::{Read, Write};
use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    /// Autoregressive coefficient of the log-volatility.
    pub phi: f64,
    /// Observation scale.
    pub beta: f64,
    /// Log-volatility innovation scale.
    pub sigma: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        Self {
            phi: 0.975,
            beta: 0.641,
            sigma: 0.165,
        }
    }
}

impl SvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|phi| must be < 1 (got {})", self.phi)));
        }
        if !(self.beta > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter("beta must be positive and sigma non-negative".into()));
        }
        Ok(())
    }

    /// Variance of the stationary law, `sigma^2 / (1 - phi^2)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// Simulates `len` steps of the log-volatility `x_t` and observations `y_t`.
pub fn sv_simulate<R: RngCore>(params: SvParams, len: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    if len == 0 {
        return Err(Error::InvalidParameter("simulation length must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(len);
    let mut obs = Vec::with_capacity(len);
    let mut x = params.stationary_variance().sqrt() * normal(rng);
    for t in 0..len {
        if t > 0 {
            x = params.phi * x + params.sigma * normal(rng);
        }
        states.push(x);
        obs.push(params.beta * (0.5 * x).exp() * normal(rng));
    }
    Ok((states, obs))
}

/// `X_t = phi X_{t-1} + sigma U_t`, `Y_t = beta exp(X_t / 2) V_t`, with the
/// potential at `t` the density of the recorded `y_t`.
#[derive(Clone, Debug)]
pub struct StochasticVolatility {
    params: SvParams,
    obs: Vec<f64>,
    bound: f64,
}

impl StochasticVolatility {
    pub fn new(params: SvParams, obs: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if !(params.sigma > 0.0) {
            return Err(Error::InvalidParameter("the filter needs sigma > 0".into()));
        }
        let bound = obs
            .iter()
            .map(|y| 1.0 / (y.abs() * (2.0 * PI * E).sqrt()))
            .fold(0.0, f64::max);
        Ok(Self { params, obs, bound })
    }

    pub fn params(&self) -> SvParams {
        self.params
    }

    pub fn observations(&self) -> &[f64] {
        &self.obs
    }
}

impl Model for StochasticVolatility {
    type State = f64;

    fn state_dim(&self) -> usize {
        1
    }

    fn init_sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.params.stationary_variance().sqrt() * normal(rng)
    }

    fn init_log_density(&self, x: &f64) -> Option<f64> {
        Some(normal_density(*x, 0.0, self.params.stationary_variance().sqrt()).ln())
    }

    fn trans_sample(&self, rng: &mut dyn RngCore, prev: &f64, _t: usize) -> f64 {
        self.params.phi * prev + self.params.sigma * normal(rng)
    }

    fn trans_density(&self, prev: &f64, next: &f64, _t: usize) -> f64 {
        normal_density(*next, self.params.phi * prev, self.params.sigma)
    }

    fn trans_density_row(&self, prevs: &[f64], next: &f64, _t: usize, out: &mut [f64]) {
        let inv = 1.0 / self.params.sigma;
        let norm = inv / (2.0 * PI).sqrt();
        for (o, p) in out.iter_mut().zip(prevs) {
            let z = (next - self.params.phi * p) * inv;
            *o = norm * (-0.5 * z * z).exp();
        }
    }

    /// Density of `y_t` under `N(0, beta^2 e^x)`; NaN past the observation record.
    fn potential(&self, x: &f64, t: usize) -> f64 {
        match self.obs.get(t) {
            Some(&y) => normal_density(y, 0.0, self.params.beta * (0.5 * x).exp()),
            None => f64::NAN,
        }
    }

    fn potential_bound(&self) -> f64 {
        self.bound
    }
}

/// Scalar linear Gaussian state space model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianModel {
    pub init_mean: f64,
    pub init_sd: f64,
    /// `X_t = a X_{t-1} + q U_t`.
    pub a: f64,
    pub q: f64,
    /// `Y_t = c X_t + r V_t`.
    pub c: f64,
    pub r: f64,
    pub obs: Vec<f64>,
}

impl Model for LinearGaussianModel {
    type State = f64;

    fn state_dim(&self) -> usize {
        1
    }

    fn init_sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.init_mean + self.init_sd * normal(rng)
    }

    fn init_log_density(&self, x: &f64) -> Option<f64> {
        Some(normal_density(*x, self.init_mean, self.init_sd).ln())
    }

    fn trans_sample(&self, rng: &mut dyn RngCore, prev: &f64, _t: usize) -> f64 {
        self.a * prev + self.q * normal(rng)
    }

    fn trans_density(&self, prev: &f64, next: &f64, _t: usize) -> f64 {
        normal_density(*next, self.a * prev, self.q)
    }

    fn potential(&self, x: &f64, t: usize) -> f64 {
        match self.obs.get(t) {
            Some(&y) => normal_density(y, self.c * x, self.r),
            None => f64::NAN,
        }
    }

    fn potential_bound(&self) -> f64 {
        1.0 / (self.r * (2.0 * PI).sqrt())
    }
}

/// Filtering means and variances of `X_t | Y_{0:t}` for every observation.
pub fn kalman_filter(model: &LinearGaussianModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut means = Vec::with_capacity(model.obs.len());
    let mut vars = Vec::with_capacity(model.obs.len());
    let (mut m, mut p) = (model.init_mean, model.init_sd * model.init_sd);
    for (t, &y) in model.obs.iter().enumerate() {
        if t > 0 {
            m *= model.a;
            p = model.a * model.a * p + model.q * model.q;
        }
        let s = model.c * model.c * p + model.r * model.r;
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("innovation variance {s} is not positive at t = {t}")));
        }
        let gain = p * model.c / s;
        m += gain * (y - model.c * m);
        p *= 1.0 - gain * model.c;
        if !(p >= 0.0) {
            return Err(Error::InvalidParameter(format!("posterior variance {p} is negative at t = {t}")));
        }
        means.push(m);
        vars.push(p);
    }
    Ok((means, vars))
}

/// Reads observations: one number per line, or a CSV file with a `y` column.
///
/// Blank lines and lines starting with `#` are skipped in both layouts.
pub fn read_observations(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_observations(&text)
}

pub fn parse_observations(text: &str) -> Result<Vec<f64>> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let Some(first) = lines.first() else {
        return Ok(Vec::new());
    };
    if first.trim().parse::<f64>().is_ok() {
        return lines
            .iter()
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad observation `{l}`: {e}")))
            })
            .collect();
    }
    let body = lines.join("\n");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::InvalidParameter("observation CSV has no `y` column".into()))?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let field = rec.get(col).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad observation `{field}`: {e}")))
        })
        .collect()
}

/// Writes one observation per line with full round-trip precision.
pub fn write_observations(path: impl AsRef<Path>, obs: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for y in obs {
        writeln!(out, "{y:?}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{run, FilterConfig};
    use crate::rng::RngStream;

    #[test]
    fn default_parameters() {
        let p = SvParams::default();
        assert_eq!((p.phi, p.beta, p.sigma), (0.975, 0.641, 0.165));
    }

    #[test]
    fn invalid_phi_is_rejected() {
        let mut rng = RngStream::new(0, 0);
        let bad = SvParams {
            phi: 1.0,
            ..SvParams::default()
        };
        assert!(sv_simulate(bad, 10, &mut rng).is_err());
        assert!(StochasticVolatility::new(bad, vec![0.1]).is_err());
    }

    #[test]
    fn zero_noise_is_geometric_decay() {
        let mut rng = RngStream::new(1, 0);
        let p = SvParams {
            sigma: 0.0,
            ..SvParams::default()
        };
        let (x, _) = sv_simulate(p, 20, &mut rng).unwrap();
        for t in 0..20 {
            assert_eq!(x[t], x[0] * p.phi.powi(t as i32));
        }
    }

    #[test]
    fn white_noise_has_no_autocorrelation() {
        let mut rng = RngStream::new(2, 0);
        let p = SvParams {
            phi: 0.0,
            sigma: 1.0,
            ..SvParams::default()
        };
        let len = 100_000;
        let (x, _) = sv_simulate(p, len, &mut rng).unwrap();
        let lag1: f64 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (len - 1) as f64;
        assert!(lag1.abs() < 3.0 / (len as f64).sqrt());
    }

    #[test]
    fn stationary_variance_is_matched() {
        let mut rng = RngStream::new(3, 0);
        let p = SvParams::default();
        let len = 100_000;
        let (x, _) = sv_simulate(p, len, &mut rng).unwrap();
        let mean = x.iter().sum::<f64>() / len as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1) as f64;
        let target = p.stationary_variance();
        // large-sample standard deviation of the variance estimator of an AR(1) chain
        let sd = target * (2.0 * (1.0 + p.phi * p.phi) / (1.0 - p.phi * p.phi) / len as f64).sqrt();
        assert!((var - target).abs() < 3.0 * sd, "{var} vs {target}");
    }

    #[test]
    fn potential_never_exceeds_bound() {
        let mut rng = RngStream::new(4, 0);
        let (_, y) = sv_simulate(SvParams::default(), 50, &mut rng).unwrap();
        let model = StochasticVolatility::new(SvParams::default(), y).unwrap();
        for t in 0..50 {
            for i in 0..200 {
                let x = -8.0 + 16.0 * i as f64 / 199.0;
                assert!(model.potential(&x, t) <= model.potential_bound() * (1.0 + 1e-12));
            }
        }
        assert!(model.potential(&0.0, 50).is_nan());
    }

    #[test]
    fn row_density_matches_scalar_density() {
        let model = StochasticVolatility::new(SvParams::default(), vec![0.3]).unwrap();
        let prevs = [-1.0, 0.0, 0.4, 2.0];
        let mut out = [0.0; 4];
        model.trans_density_row(&prevs, &0.1, 1, &mut out);
        for (o, p) in out.iter().zip(&prevs) {
            assert!((o - model.trans_density(p, &0.1, 1)).abs() < 1e-15);
        }
    }

    fn lg_model(obs: Vec<f64>) -> LinearGaussianModel {
        LinearGaussianModel {
            init_mean: 0.5,
            init_sd: 1.3,
            a: 0.8,
            q: 0.6,
            c: 1.2,
            r: 0.7,
            obs,
        }
    }

    /// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
        (0..n).map(|i| b[i] / a[i][i]).collect()
    }

    #[test]
    fn kalman_matches_dense_conditioning() {
        let obs = vec![0.3, -0.8, 1.1, 0.2, -0.4];
        let model = lg_model(obs.clone());
        let (means, vars) = kalman_filter(&model).unwrap();
        let len = obs.len();
        // Cov(X_s, X_u) for s <= u is a^{u-s} Var(X_s)
        let mut var_x = vec![model.init_sd.powi(2)];
        for t in 1..len {
            var_x.push(model.a.powi(2) * var_x[t - 1] + model.q.powi(2));
        }
        let cov_x = |s: usize, u: usize| {
            let (lo, hi) = (s.min(u), s.max(u));
            model.a.powi((hi - lo) as i32) * var_x[lo]
        };
        let mean_x = |s: usize| model.init_mean * model.a.powi(s as i32);
        for t in 0..len {
            let k = t + 1;
            let syy: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| model.c * model.c * cov_x(i, j) + if i == j { model.r * model.r } else { 0.0 })
                        .collect()
                })
                .collect();
            let sxy: Vec<f64> = (0..k).map(|j| model.c * cov_x(t, j)).collect();
            let resid: Vec<f64> = (0..k).map(|j| obs[j] - model.c * mean_x(j)).collect();
            let w = solve(syy.clone(), resid);
            let m = mean_x(t) + sxy.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let u = solve(syy, sxy.clone());
            let v = cov_x(t, t) - sxy.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            assert!((means[t] - m).abs() < 1e-10);
            assert!((vars[t] - v).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_observation_pins_the_state() {
        let mut model = lg_model(vec![2.4, -1.2]);
        model.r = 0.0;
        let (means, vars) = kalman_filter(&model).unwrap();
        assert!((means[0] - 2.0).abs() < 1e-12 && (means[1] + 1.0).abs() < 1e-12);
        assert!(vars.iter().all(|v| v.abs() < 1e-12));
        model.c = 0.0;
        model.init_sd = 0.0;
        assert!(kalman_filter(&model).is_err());
    }

    #[test]
    fn particle_filter_mean_tracks_kalman() {
        let obs = vec![0.3, -0.8, 1.1, 0.2];
        let model = lg_model(obs);
        let (means, vars) = kalman_filter(&model).unwrap();
        let n = 10_000;
        let mut rng = RngStream::new(5, 0);
        let state = run(&model, FilterConfig::new(n), 3, &mut rng, |_, _| Ok(())).unwrap();
        let est = state.filter_estimate(&state.map(|x| *x));
        // generous band: the asymptotic variance of the filter mean is a few posterior variances
        let band = 3.0 * (4.0 * vars[3] / n as f64).sqrt();
        assert!((est - means[3]).abs() < band, "{est} vs {}", means[3]);
    }

    #[test]
    fn observation_formats() {
        assert_eq!(parse_observations("1.5\n# c\n\n-2\n").unwrap(), vec![1.5, -2.0]);
        assert_eq!(parse_observations("t,y\n0,0.25\n1,-1\n").unwrap(), vec![0.25, -1.0]);
        assert!(parse_observations("t,x\n0,1\n").is_err());
        let dir = std::env::temp_dir().join(format!("obs-{}", std::process::id()));
        write_observations(&dir, &[0.1, 1.0 / 3.0]).unwrap();
        assert_eq!(read_observations(&dir).unwrap(), vec![0.1, 1.0 / 3.0]);
        std::fs::remove_file(dir).unwrap();
    }
}
