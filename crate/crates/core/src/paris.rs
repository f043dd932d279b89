//! Backward statistics estimated from `M` sampled backward indices per particle.
//!
//! The exact recursion for `T0_t` costs two dense products per step. Replacing
//! each backward average by the mean over `M` indices drawn from the row of
//! `beta_t` gives a conditionally unbiased estimate at `O(M N^2)` cost.

use rand::distributions::Distribution;
use rand::RngCore;
use rayon::prelude::*;

use crate::backward::{disjoint_var_eta, disjoint_var_gamma, disjoint_var_phi, ensure_step, BackwardMatrix};
use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::linalg::{mat_vec, ones_minus_identity};
use crate::resample::categorical;
use crate::rng::RngStream;
use crate::Matrix;

/// Draws `M` i.i.d. indices from every row of `beta`; `draws[k][i]` is `J^i_k`.
///
/// Each row uses its own substream forked from one word of `rng`, so the
/// result does not depend on how rows are scheduled across threads.
pub fn sample_indices(beta: &BackwardMatrix, m: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if m <= 1 {
        return Err(Error::ParisDrawCount(m));
    }
    let base = RngStream::new(rng.next_u64(), rng.stream());
    let tables = (0..beta.classes())
        .map(|c| categorical(beta.class_row(c)))
        .collect::<Result<Vec<_>>>()?;
    let classes = beta.class_of();
    Ok((0..beta.len())
        .into_par_iter()
        .map(|k| {
            let mut sub = base.fork(k as u64);
            let table = &tables[classes[k]];
            (0..m).map(|_| table.sample(&mut sub)).collect()
        })
        .collect())
}

fn draw_count(draws: &[Vec<usize>]) -> usize {
    draws.first().map_or(0, Vec::len)
}

/// `T'(k, l) = 1{k != l} M^{-1} sum_i T(J^i_k, J^i_l)`.
pub(crate) fn sampled_disjoint_step(t_prev: &Matrix, draws: &[Vec<usize>]) -> Matrix {
    let n = draws.len();
    let m = draw_count(draws);
    let mut out = Matrix::zeros(n, n);
    for i in 0..m {
        let column: Vec<usize> = draws.iter().map(|d| d[i]).collect();
        for (l, &jl) in column.iter().enumerate() {
            let src = t_prev.col_as_slice(jl);
            let dst = out.col_as_slice_mut(l);
            for (o, &jk) in dst.iter_mut().zip(&column) {
                *o += src[jk];
            }
        }
    }
    let scale = 1.0 / m as f64;
    for l in 0..n {
        let dst = out.col_as_slice_mut(l);
        dst.iter_mut().for_each(|x| *x *= scale);
        dst[l] = 0.0;
    }
    out
}

/// `T'(k, k) = M^{-1} sum_i sum_j W_j T(J^i_k, j)`, zero off the diagonal.
pub(crate) fn sampled_coupled_step(t_prev: &Matrix, draws: &[Vec<usize>], prev_norm_weights: &[f64]) -> Matrix {
    let v = mat_vec(t_prev, prev_norm_weights);
    let n = draws.len();
    let mut out = Matrix::zeros(n, n);
    for (k, d) in draws.iter().enumerate() {
        out[(k, k)] = d.iter().map(|&j| v[j]).sum::<f64>() / d.len() as f64;
    }
    out
}

/// Sampled coalescence statistic `T~0_t`.
#[derive(Clone, Debug)]
pub struct ParisStats {
    t: usize,
    draws: usize,
    t0: Matrix,
}

impl ParisStats {
    pub fn new(n: usize, draws: usize) -> Result<Self> {
        if draws <= 1 {
            return Err(Error::ParisDrawCount(draws));
        }
        Ok(Self {
            t: 0,
            draws,
            t0: ones_minus_identity(n),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn t0(&self) -> &Matrix {
        &self.t0
    }

    /// Advances one step with indices produced by [`sample_indices`].
    pub fn update(&mut self, draws: &[Vec<usize>]) -> Result<()> {
        let n = self.t0.nrows();
        if draws.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: draws.len(),
            });
        }
        if let Some(bad) = draws.iter().find(|d| d.len() != self.draws) {
            return Err(Error::DimensionMismatch {
                expected: self.draws,
                found: bad.len(),
            });
        }
        self.t0 = sampled_disjoint_step(&self.t0, draws);
        self.t += 1;
        Ok(())
    }

    /// Samples the indices from `beta` and advances one step; returns the draws
    /// so other statistics of the same step can share them.
    pub fn sample_and_update(&mut self, beta: &BackwardMatrix, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
        let draws = sample_indices(beta, self.draws, rng)?;
        self.update(&draws)?;
        Ok(draws)
    }

    pub fn var_gamma<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        disjoint_var_gamma(&self.t0, state, h)
    }

    pub fn var_eta<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        disjoint_var_eta(&self.t0, state, h)
    }

    pub fn var_phi<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        disjoint_var_phi(&self.t0, state, h)
    }
}
