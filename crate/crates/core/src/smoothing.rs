//! Forward-only FFBS and the online variance estimator for marginal smoothing.
//!
//! The FFBS estimate of an additive functional is computed by propagating the
//! per-particle statistics `T_t[h](xi_t^k)`, the backward-weighted averages of
//! the functional along all paths ending in `xi_t^k`. For a marginal
//! functional `h_l(x_l)` the statistics `S1`, `S2` extend `S_t` so that the
//! asymptotic variance of the smoothed estimate is available at every `t >= l`.

use crate::backward::{ensure_pair, ensure_step, BackwardMatrix, BsStats};
use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::linalg::quad_form;
use crate::model::Model;
use crate::Matrix;

/// FFBS estimate of `E[sum_s htilde_s(X_{s-1}, X_s) | Y_{0:t}]`, computed forward.
#[derive(Clone, Debug)]
pub struct AdditiveSmoother {
    t: usize,
    stat: Vec<f64>,
}

impl AdditiveSmoother {
    /// Starts at `t = 0` with the values of the first term at the particles.
    pub fn new(first: Vec<f64>) -> Self {
        Self { t: 0, stat: first }
    }

    /// `T_t(k) = sum_i beta_t(k, i) { T_{t-1}(i) + increment(i, k) }`.
    pub fn update<F: Fn(usize, usize) -> f64>(&mut self, beta: &BackwardMatrix, increment: F) -> Result<()> {
        if beta.width() != self.stat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.stat.len(),
                found: beta.width(),
            });
        }
        self.stat = (0..beta.len())
            .map(|k| {
                beta.row(k)
                    .iter()
                    .enumerate()
                    .map(|(i, b)| b * (self.stat[i] + increment(i, k)))
                    .sum()
            })
            .collect();
        self.t += 1;
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn statistics(&self) -> &[f64] {
        &self.stat
    }

    /// `sum_k W_t^k T_t(k)`.
    pub fn estimate<S>(&self, state: &FilterState<S>) -> Result<f64> {
        ensure_step(self.t, state)?;
        Ok(state.filter_estimate(&self.stat))
    }
}

/// One forward FFBS step `T_t(k) = sum_i beta_t(k, i) T_{t-1}(i)` with the rows
/// of `beta_t` evaluated on the fly and never stored.
pub fn backward_average<M: Model>(model: &M, prev: &FilterState<M::State>, curr: &[M::State], stat: &[f64]) -> Result<Vec<f64>> {
    let t = prev.t() + 1;
    let mut buf = vec![0.0; prev.len()];
    curr.iter()
        .enumerate()
        .map(|(k, x)| {
            model.trans_density_row(prev.particles(), x, t, &mut buf);
            let (mut num, mut den) = (0.0, 0.0);
            for ((m, w), s) in buf.iter().zip(prev.weights()).zip(stat) {
                den += m * w;
                num += m * w * s;
            }
            if !(den > 0.0 && den.is_finite()) {
                return Err(Error::BackwardKernelUndefined { row: k });
            }
            Ok(num / den)
        })
        .collect()
}

/// Statistics for the marginal smoothing estimate `Q_{l|t}(h_l)` and its variance.
#[derive(Clone, Debug)]
pub struct SmoothingStats {
    ell: usize,
    t: usize,
    stat: Vec<f64>,
    s1: Matrix,
    s2: Matrix,
    smoothed: f64,
}

impl SmoothingStats {
    /// Initializes at `t = l` from `h_l` at the particles and the tracked `S_l`.
    pub fn start<S>(state: &FilterState<S>, bs: &BsStats, h: &[f64]) -> Result<Self> {
        ensure_step(bs.t(), state)?;
        let sum = require_sum(bs)?;
        let n = state.len();
        if h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: h.len(),
            });
        }
        Ok(Self {
            ell: state.t(),
            t: state.t(),
            stat: h.to_vec(),
            s1: Matrix::from_fn(n, n, |i, j| sum[(i, j)] * h[i] * h[j]),
            s2: Matrix::from_fn(n, n, |i, j| sum[(i, j)] * (h[i] + h[j])),
            smoothed: state.filter_estimate(h),
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `T_t[h_l]` at the particles.
    pub fn statistics(&self) -> &[f64] {
        &self.stat
    }

    pub fn s1(&self) -> &Matrix {
        &self.s1
    }

    pub fn s2(&self) -> &Matrix {
        &self.s2
    }

    /// Current FFBS estimate `Q_{l|t}(h_l)`.
    pub fn smoothed(&self) -> f64 {
        self.smoothed
    }

    /// Forward FFBS step only: `T_{t+1}(k) = sum_i beta(k, i) T_t(i)`.
    pub fn forward_update<S>(&mut self, beta: &BackwardMatrix, state: &FilterState<S>) -> Result<()> {
        if state.t() != self.t + 1 {
            return Err(Error::StepMismatch {
                stats: self.t,
                input: state.t(),
            });
        }
        self.stat = beta.apply(&self.stat);
        self.smoothed = state.filter_estimate(&self.stat);
        self.t += 1;
        Ok(())
    }

    /// Full step from `t` to `t + 1`. `bs` must already hold the statistics
    /// at `t + 1` computed from the same `beta`.
    pub fn update<S>(&mut self, beta: &BackwardMatrix, state: &FilterState<S>, bs: &BsStats) -> Result<()> {
        if bs.t() != self.t + 1 {
            return Err(Error::StepMismatch {
                stats: self.t,
                input: bs.t(),
            });
        }
        self.forward_update(beta, state)?;
        let tes = bs.tes_diag();
        let d1: Vec<f64> = tes.iter().zip(&self.stat).map(|(e, x)| e * x * x).collect();
        let d2: Vec<f64> = tes.iter().zip(&self.stat).map(|(e, x)| 2.0 * e * x).collect();
        self.s1 = beta.sandwich_offdiag(&self.s1, Some(&d1));
        self.s2 = beta.sandwich_offdiag(&self.s2, Some(&d2));
        Ok(())
    }

    /// `N^{t+1} / (N-1)^t sum_{i,j} W^i W^j { S1 - Q S2 + Q^2 S }(i, j)`.
    pub fn variance<S>(&self, state: &FilterState<S>, bs: &BsStats) -> Result<f64> {
        ensure_step(self.t, state)?;
        ensure_step(bs.t(), state)?;
        let n = state.len();
        ensure_pair(n)?;
        let sum = require_sum(bs)?;
        let w = state.norm_weights();
        let q = self.smoothed;
        let bracket = quad_form(&self.s1, w, w) - q * quad_form(&self.s2, w, w) + q * q * quad_form(sum, w, w);
        let nf = n as f64;
        let t = self.t as f64;
        Ok(((t + 1.0) * nf.ln() - t * (nf - 1.0).ln()).exp() * bracket)
    }
}

fn require_sum(bs: &BsStats) -> Result<&Matrix> {
    bs.sum()
        .ok_or_else(|| Error::InvalidParameter("smoothing variance needs statistics created with S_t".into()))
}
