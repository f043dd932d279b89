//! Estimators built from the ancestral lineages of the particles.

use std::collections::BTreeMap;

use crate::backward::{ensure_pair, ensure_step, term_by_term_var_eta, term_by_term_var_gamma};
use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::linalg::ones_minus_identity;
use crate::Matrix;

/// `N^{-1} sum_classes (sum_{i in class} (h_i - mean))^2` over the classes of `labels`.
fn class_sum_variance(labels: &[usize], h: &[f64]) -> Result<f64> {
    let n = h.len();
    ensure_pair(n)?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let mean = h.iter().sum::<f64>() / n as f64;
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for (&e, &x) in labels.iter().zip(h) {
        *sums.entry(e).or_insert(0.0) += x - mean;
    }
    Ok(sums.values().map(|s| s * s).sum::<f64>() / n as f64)
}

/// Chan-Lai estimator of the asymptotic variance of `eta_t^N(h)`, from the Eve indices.
pub fn cle_variance<S>(state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    class_sum_variance(state.eve(), h)
}

/// Fixed-lag variant of [`cle_variance`] using the ancestors at lag `lambda`.
pub fn lag_variance<S>(state: &FilterState<S>, h: &[f64], lambda: usize) -> Result<f64> {
    class_sum_variance(&state.enoch(lambda)?, h)
}

/// `D^GT_N(t)`: fraction of ordered pairs `i != j` with distinct Eve indices.
pub fn diversity<S>(state: &FilterState<S>) -> f64 {
    let n = state.len() as f64;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &e in state.eve() {
        *counts.entry(e).or_insert(0) += 1;
    }
    let same: f64 = counts.values().map(|&c| (c * c) as f64).sum();
    (n * n - same) / (n * (n - 1.0))
}

/// Genealogy-tracing counterparts of `T0_t` and `S_t`, updated from ancestor indices.
#[derive(Clone, Debug)]
pub struct GtStats {
    t: usize,
    t0: Matrix,
    sum: Matrix,
}

impl GtStats {
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            t0: ones_minus_identity(n),
            sum: Matrix::identity(n, n),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t0(&self) -> &Matrix {
        &self.t0
    }

    pub fn sum(&self) -> &Matrix {
        &self.sum
    }

    /// Advances to the time of `state` using its ancestors and the normalized
    /// weights of the previous step.
    pub fn update<S>(&mut self, state: &FilterState<S>, prev_norm_weights: &[f64]) -> Result<()> {
        let mismatch = Error::StepMismatch {
            stats: self.t,
            input: state.t(),
        };
        match state.ancestors() {
            Some(ancestors) if self.t + 1 == state.t() => self.advance(ancestors, prev_norm_weights),
            _ => Err(mismatch),
        }
    }

    /// Advances one step given the ancestor indices `A_{t-1}^{1:N}`.
    pub fn advance(&mut self, ancestors: &[usize], prev_norm_weights: &[f64]) -> Result<()> {
        let n = self.t0.nrows();
        for found in [ancestors.len(), prev_norm_weights.len()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        let coupled: Vec<f64> = ancestors
            .iter()
            .map(|&a| {
                let col = self.t0.col_as_slice(a);
                col.iter().zip(prev_norm_weights).map(|(x, w)| x * w).sum()
            })
            .collect();
        let gather = |m: &Matrix, diag: Option<&[f64]>| {
            Matrix::from_fn(n, n, |k, l| {
                if k == l {
                    diag.map_or(0.0, |d| d[k])
                } else {
                    m[(ancestors[k], ancestors[l])]
                }
            })
        };
        let t0 = gather(&self.t0, None);
        self.sum = gather(&self.sum, Some(&coupled));
        self.t0 = t0;
        self.t += 1;
        Ok(())
    }

    /// Term-by-term estimator of the asymptotic variance of `gamma_t^N(h)`.
    pub fn var_gamma<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        term_by_term_var_gamma(&self.sum, &self.t0, state, h)
    }

    /// Term-by-term estimator of the asymptotic variance of `eta_t^N(h)`.
    pub fn var_eta<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        term_by_term_var_eta(&self.sum, &self.t0, state, h)
    }
}
