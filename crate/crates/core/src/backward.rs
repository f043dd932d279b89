//! Backward-weight coalescence statistics and the variance estimators built on them.
//!
//! The central object is `T0_t(k, l)`, the conditional probability that two
//! backward trajectories started from particles `k != l` at time `t` never
//! meet. Together with `S_t = sum_s T^{e_s}_t` it yields the disjoint and
//! term-by-term estimators of the asymptotic variance of `gamma_t^N(h)`,
//! `eta_t^N(h)` and `phi_t^N(h)`.
//!
//! Every prefactor of the form `N^t / (N-1)^{t+1} gamma_t^N(1)^2` is assembled
//! in log space and exponentiated once per output.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::linalg::{mat_vec, ones_minus_identity, quad_form, sandwich_symmetric, total};
use crate::model::Model;
use crate::Matrix;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Row-stochastic `N x N` matrix of backward weights `beta_t(k, l)`.
///
/// Rows that are bitwise identical (particles sharing a state, or genealogy
/// kernels) are stored once; `class_of[k]` points to the stored row of `k`.
#[derive(Clone, Debug)]
pub struct BackwardMatrix {
    class_of: Vec<usize>,
    /// `prev_len x classes`; column `c` holds distinct row `c`.
    rows_t: Matrix,
}

impl BackwardMatrix {
    /// `beta_t(k, l) = omega_{t-1}^l m_t(xi_{t-1}^l, xi_t^k) / sum_j omega_{t-1}^j m_t(xi_{t-1}^j, xi_t^k)`.
    pub fn compute<M: Model>(model: &M, prev: &FilterState<M::State>, curr: &[M::State]) -> Result<Self> {
        let t = prev.t() + 1;
        let width = prev.len();
        let mut interner = RowInterner::default();
        let mut buf = vec![0.0; width];
        for (k, x) in curr.iter().enumerate() {
            model.trans_density_row(prev.particles(), x, t, &mut buf);
            let mut sum = 0.0;
            for (b, w) in buf.iter_mut().zip(prev.weights()) {
                *b *= w;
                sum += *b;
            }
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::BackwardKernelUndefined { row: k });
            }
            buf.iter_mut().for_each(|b| *b /= sum);
            interner.push(&buf);
        }
        Ok(interner.finish(width))
    }

    /// Builds a backward matrix from explicit rows, checking they are distributions.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut interner = RowInterner::default();
        for (k, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    found: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::BackwardKernelUndefined { row: k });
            }
            interner.push(row);
        }
        Ok(interner.finish(width))
    }

    /// The genealogy kernel `beta(k, l) = 1{l = A^k}`.
    pub fn genealogy(ancestors: &[usize], prev_len: usize) -> Self {
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut class_of = Vec::with_capacity(ancestors.len());
        let mut hot = Vec::new();
        for &a in ancestors {
            let next = hot.len();
            let c = *slot.entry(a).or_insert_with(|| {
                hot.push(a);
                next
            });
            class_of.push(c);
        }
        let rows_t = Matrix::from_fn(prev_len, hot.len(), |l, c| if hot[c] == l { 1.0 } else { 0.0 });
        Self { class_of, rows_t }
    }

    /// Number of rows (particles at time `t`).
    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    /// Number of columns (particles at time `t - 1`).
    pub fn width(&self) -> usize {
        self.rows_t.nrows()
    }

    /// Number of distinct rows.
    pub fn classes(&self) -> usize {
        self.rows_t.ncols()
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.rows_t.col_as_slice(self.class_of[k])
    }

    pub(crate) fn class_row(&self, c: usize) -> &[f64] {
        self.rows_t.col_as_slice(c)
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.rows_t[(l, self.class_of[k])]
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.width(), |k, l| self.get(k, l))
    }

    fn is_identity_map(&self) -> bool {
        self.classes() == self.len() && self.class_of.iter().enumerate().all(|(i, &c)| i == c)
    }

    /// `beta M beta^T` for symmetric `M`, with the diagonal replaced by `diag`
    /// (zero when `None`).
    pub(crate) fn sandwich_offdiag(&self, m: &Matrix, diag: Option<&[f64]>) -> Matrix {
        let y = sandwich_symmetric(&self.rows_t, m);
        let mut out = if self.is_identity_map() {
            y
        } else {
            let n = self.len();
            let cls = &self.class_of;
            Matrix::from_fn(n, n, |k, l| y[(cls[k], cls[l])])
        };
        for k in 0..out.nrows() {
            out[(k, k)] = diag.map_or(0.0, |d| d[k]);
        }
        out
    }

    /// `(beta v)_k` for every row `k`.
    pub(crate) fn apply(&self, v: &[f64]) -> Vec<f64> {
        let per_class: Vec<f64> = (0..self.classes())
            .map(|c| self.class_row(c).iter().zip(v).map(|(b, x)| b * x).sum())
            .collect();
        self.class_of.iter().map(|&c| per_class[c]).collect()
    }
}

#[derive(Default)]
struct RowInterner {
    index: HashMap<u64, Vec<usize>>,
    rows: Vec<Vec<f64>>,
    class_of: Vec<usize>,
}

impl RowInterner {
    fn push(&mut self, row: &[f64]) {
        let key = row.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
            (h.rotate_left(5) ^ x.to_bits()).wrapping_mul(0x5851_f42d_4c95_7f2d)
        });
        let bucket = self.index.entry(key).or_default();
        let found = bucket.iter().copied().find(|&c| self.rows[c] == row);
        let class = match found {
            Some(c) => c,
            None => {
                self.rows.push(row.to_vec());
                bucket.push(self.rows.len() - 1);
                self.rows.len() - 1
            }
        };
        self.class_of.push(class);
    }

    fn finish(self, width: usize) -> BackwardMatrix {
        let rows = self.rows;
        let rows_t = Matrix::from_fn(width, rows.len(), |l, c| rows[c][l]);
        BackwardMatrix {
            class_of: self.class_of,
            rows_t,
        }
    }
}

pub(crate) fn ensure_pair(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::TooFewParticles(n))
    } else {
        Ok(())
    }
}

pub(crate) fn ensure_step<S>(stats_t: usize, state: &FilterState<S>) -> Result<()> {
    if stats_t != state.t() {
        Err(Error::StepMismatch {
            stats: stats_t,
            input: state.t(),
        })
    } else {
        Ok(())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// `log( N^t / (N-1)^{t+1} )`.
fn log_disjoint_factor(n: usize, t: usize) -> f64 {
    let n = n as f64;
    t as f64 * (n / (n - 1.0)).ln() - (n - 1.0).ln()
}

/// `log( N^{t-1} / (N-1)^t )`.
fn log_tbt_factor(n: usize, t: usize) -> f64 {
    let n = n as f64;
    t as f64 * (n / (n - 1.0)).ln() - n.ln()
}

fn centered(h: &[f64], center: f64) -> Vec<f64> {
    h.iter().map(|x| x - center).collect()
}

/// Disjoint estimator of the asymptotic variance of `gamma_t^N(h)` from a
/// coalescence matrix `T0_t` (exact or sampled).
pub fn disjoint_var_gamma<S>(t0: &Matrix, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, h.len())?;
    let lg2 = 2.0 * state.log_gamma1();
    let eta = state.predictor_estimate(h);
    let q = quad_form(t0, h, h);
    Ok((lg2 + (n as f64).ln()).exp() * eta * eta - (lg2 + log_disjoint_factor(n, state.t())).exp() * q)
}

/// Disjoint estimator of the asymptotic variance of `eta_t^N(h)`.
pub fn disjoint_var_eta<S>(t0: &Matrix, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, h.len())?;
    let c = centered(h, state.predictor_estimate(h));
    Ok(-log_disjoint_factor(n, state.t()).exp() * quad_form(t0, &c, &c))
}

/// Disjoint estimator of the asymptotic variance of `phi_t^N(h)`.
pub fn disjoint_var_phi<S>(t0: &Matrix, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, h.len())?;
    let phi = state.filter_estimate(h);
    let c: Vec<f64> = h.iter().zip(state.norm_weights()).map(|(x, w)| w * (x - phi)).collect();
    let log_factor = log_disjoint_factor(n, state.t()) + 2.0 * (n as f64).ln();
    Ok(-log_factor.exp() * quad_form(t0, &c, &c))
}

/// Term-by-term estimator of the asymptotic variance of `gamma_t^N(h)` from
/// `S_t` and `T0_t`.
pub fn term_by_term_var_gamma<S>(sum: &Matrix, t0: &Matrix, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, h.len())?;
    let t = state.t();
    let bracket = quad_form(sum, h, h) - (t as f64 + 1.0) / (n as f64 - 1.0) * quad_form(t0, h, h);
    Ok((2.0 * state.log_gamma1() + log_tbt_factor(n, t)).exp() * bracket)
}

/// Term-by-term estimator for `eta_t^N(h)`: the gamma estimator applied to
/// `h - eta_t^N(h)`, divided by `gamma_t^N(1)^2`.
pub fn term_by_term_var_eta<S>(sum: &Matrix, t0: &Matrix, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, h.len())?;
    let t = state.t();
    let c = centered(h, state.predictor_estimate(h));
    let bracket = quad_form(sum, &c, &c) - (t as f64 + 1.0) / (n as f64 - 1.0) * quad_form(t0, &c, &c);
    Ok(log_tbt_factor(n, t).exp() * bracket)
}

/// `sum_{s=0}^t mu_hat_{e_s,t}(f (x) f)` for values `f` at the particles.
pub fn intersection_sum<S>(sum: &Matrix, state: &FilterState<S>, f: &[f64]) -> Result<f64> {
    let n = state.len();
    ensure_pair(n)?;
    check_len(n, f.len())?;
    Ok((2.0 * state.log_gamma1() + log_tbt_factor(n, state.t())).exp() * quad_form(sum, f, f))
}

/// Exact backward statistics `T0_t`, `diag T^{e_t}_t` and (optionally) `S_t`.
#[derive(Clone, Debug)]
pub struct BsStats {
    t: usize,
    t0: Matrix,
    tes_diag: Vec<f64>,
    sum: Option<Matrix>,
}

impl BsStats {
    /// Statistics at `t = 0`. `S` is only propagated when `track_sum` is set;
    /// the disjoint estimators do not need it and it doubles the cost.
    pub fn new(n: usize, track_sum: bool) -> Self {
        Self {
            t: 0,
            t0: ones_minus_identity(n),
            tes_diag: vec![1.0; n],
            sum: track_sum.then(|| Matrix::identity(n, n)),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.tes_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tes_diag.is_empty()
    }

    pub fn t0(&self) -> &Matrix {
        &self.t0
    }

    /// Diagonal of `T^{e_t}_t` (its off-diagonal entries vanish).
    pub fn tes_diag(&self) -> &[f64] {
        &self.tes_diag
    }

    /// `S_t`, when tracked.
    pub fn sum(&self) -> Option<&Matrix> {
        self.sum.as_ref()
    }

    /// Advances from `t - 1` to `t` given `beta_t` and the normalized weights at `t - 1`.
    pub fn update(&mut self, beta: &BackwardMatrix, prev_norm_weights: &[f64]) -> Result<()> {
        let n = self.len();
        check_len(n, beta.width())?;
        check_len(n, beta.len())?;
        check_len(n, prev_norm_weights.len())?;
        let tes_diag = beta.apply(&mat_vec(&self.t0, prev_norm_weights));
        let t0 = beta.sandwich_offdiag(&self.t0, None);
        if let Some(sum) = self.sum.as_mut() {
            *sum = beta.sandwich_offdiag(sum, Some(&tes_diag));
        }
        self.t0 = t0;
        self.tes_diag = tes_diag;
        self.t += 1;
        Ok(())
    }

    /// `D^BS_N(t) = sum T0 / (N (N-1))`.
    pub fn diversity(&self) -> f64 {
        let n = self.len() as f64;
        total(&self.t0) / (n * (n - 1.0))
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

    pub fn tbt_var_gamma<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        term_by_term_var_gamma(self.require_sum()?, &self.t0, state, h)
    }

    pub fn tbt_var_eta<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        term_by_term_var_eta(self.require_sum()?, &self.t0, state, h)
    }

    pub fn intersection_sum<S>(&self, state: &FilterState<S>, f: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        intersection_sum(self.require_sum()?, state, f)
    }

    fn require_sum(&self) -> Result<&Matrix> {
        self.sum
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("statistics were created without S_t".into()))
    }
}

/// Largest horizon for which every mask in `{0,1}^{t+1}` is propagated.
pub const MASK_HORIZON: usize = 3;

/// `T^b_t` for every mask `b in {0,1}^{t+1}`, for small `t`.
///
/// Exponential in `t`; used to check identities that involve all masks.
#[derive(Clone, Debug)]
pub struct MaskStats {
    t: usize,
    masks: Vec<(Vec<bool>, Matrix)>,
}

impl MaskStats {
    pub fn new(n: usize) -> Self {
        Self {
            t: 0,
            masks: vec![(vec![false], ones_minus_identity(n)), (vec![true], Matrix::identity(n, n))],
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn masks(&self) -> impl Iterator<Item = (&[bool], &Matrix)> {
        self.masks.iter().map(|(b, m)| (b.as_slice(), m))
    }

    pub fn coalescence(&self, mask: &[bool]) -> Option<&Matrix> {
        self.masks.iter().find(|(b, _)| b == mask).map(|(_, m)| m)
    }

    /// Exact update with backward weights `beta_t`.
    pub fn update(&mut self, beta: &BackwardMatrix, prev_norm_weights: &[f64]) -> Result<()> {
        self.advance(|m, coupled| {
            if coupled {
                let d = beta.apply(&mat_vec(m, prev_norm_weights));
                Matrix::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 })
            } else {
                beta.sandwich_offdiag(m, None)
            }
        })
    }

    /// Update with sampled backward indices `J[k][i]`, as in the PaRIS recursion.
    pub fn update_sampled(&mut self, draws: &[Vec<usize>], prev_norm_weights: &[f64]) -> Result<()> {
        self.advance(|m, coupled| {
            if coupled {
                crate::paris::sampled_coupled_step(m, draws, prev_norm_weights)
            } else {
                crate::paris::sampled_disjoint_step(m, draws)
            }
        })
    }

    fn advance<F: Fn(&Matrix, bool) -> Matrix>(&mut self, step: F) -> Result<()> {
        if self.t + 1 > MASK_HORIZON {
            return Err(Error::MaskHorizon {
                t: self.t + 1,
                limit: MASK_HORIZON,
            });
        }
        let mut next = Vec::with_capacity(2 * self.masks.len());
        for (b, m) in &self.masks {
            for coupled in [false, true] {
                let mut child = b.clone();
                child.push(coupled);
                next.push((child, step(m, coupled)));
            }
        }
        self.masks = next;
        self.t += 1;
        Ok(())
    }

    /// `mu_hat_{b,t}(h (x) f)` for values `h`, `f` at the particles.
    pub fn mu_hat<S>(&self, mask: &[bool], state: &FilterState<S>, h: &[f64], f: &[f64]) -> Result<f64> {
        ensure_step(self.t, state)?;
        let n = state.len();
        ensure_pair(n)?;
        let m = self.coalescence(mask).ok_or(Error::DimensionMismatch {
            expected: self.t + 1,
            found: mask.len(),
        })?;
        Ok((log_mask_factor(mask, n) + 2.0 * state.log_gamma1() - 2.0 * (n as f64).ln()).exp() * quad_form(m, h, f))
    }

    /// `sum_b T^b_t`, entrywise; identically one.
    pub fn mask_sum(&self) -> Matrix {
        let n = self.masks[0].1.nrows();
        let mut acc = Matrix::zeros(n, n);
        for (_, m) in &self.masks {
            acc += m;
        }
        acc
    }

    /// Deviation of `sum_b prod_s N^{-b_s} ((N-1)/N)^{1-b_s} mu_hat_{b,t}(h (x) h)`
    /// from `gamma_t^N(h)^2`, relative to `gamma_t^N(1)^2 eta_t^N(|h|)^2`.
    pub fn identity_deviation<S>(&self, state: &FilterState<S>, h: &[f64]) -> Result<f64> {
        let n = state.len() as f64;
        let mut lhs = 0.0;
        for (b, _) in &self.masks {
            let log_w: f64 = b
                .iter()
                .map(|&bit| if bit { -n.ln() } else { ((n - 1.0) / n).ln() })
                .sum();
            lhs += log_w.exp() * self.mu_hat(b, state, h, h)?;
        }
        let rhs = state.gamma_estimate(h).powi(2);
        let abs: Vec<f64> = h.iter().map(|x| x.abs()).collect();
        let scale = state.gamma_estimate(&abs).powi(2);
        Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
    }
}

/// `log prod_s N^{b_s} (N/(N-1))^{1-b_s}`.
fn log_mask_factor(mask: &[bool], n: usize) -> f64 {
    let n = n as f64;
    mask.iter()
        .map(|&bit| if bit { n.ln() } else { (n / (n - 1.0)).ln() })
        .sum()
}

/// Runs the exhaustive mask recursion along a fresh filter run and returns the
/// largest identity deviation and the largest `|sum_b T^b - 1|` seen.
pub fn identity_check<M: Model>(
    model: &M,
    n: usize,
    horizon: usize,
    h: impl Fn(&M::State) -> f64,
    rng: &mut crate::rng::RngStream,
) -> Result<(f64, f64)> {
    if horizon > MASK_HORIZON {
        return Err(Error::MaskHorizon {
            t: horizon,
            limit: MASK_HORIZON,
        });
    }
    let mut masks = MaskStats::new(n);
    let mut worst = (0.0f64, 0.0f64);
    crate::filter::run(model, crate::filter::FilterConfig::new(n), horizon, rng, |prev, curr| {
        if let Some(prev) = prev {
            let beta = BackwardMatrix::compute(model, prev, curr.particles())?;
            masks.update(&beta, prev.norm_weights())?;
        }
        let dev = masks.identity_deviation(curr, &curr.map(&h))?;
        let sum = masks.mask_sum();
        let mut off = 0.0f64;
        for j in 0..n {
            for x in sum.col_as_slice(j) {
                off = off.max((x - 1.0).abs());
            }
        }
        worst = (worst.0.max(dev), worst.1.max(off));
        Ok(())
    })?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{run, FilterConfig};
    use crate::oracle::DiscreteHmm;
    use crate::rng::RngStream;
    use rand::Rng;

    fn random_beta(n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }

    fn random_simplex(n: usize, rng: &mut RngStream) -> Vec<f64> {
        let r: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
        let s: f64 = r.iter().sum();
        r.into_iter().map(|x| x / s).collect()
    }

    /// Scalar double sums for `T0_t` and `diag T^{e_t}_t`.
    fn scalar_update(beta: &[Vec<f64>], t0: &Matrix, w: &[f64]) -> (Matrix, Vec<f64>) {
        let n = beta.len();
        let mut next = Matrix::zeros(n, n);
        let mut diag = vec![0.0; n];
        for k in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                let mut acc1 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += beta[k][i] * beta[l][j] * t0[(i, j)];
                        acc1 += beta[k][i] * w[j] * t0[(i, j)];
                    }
                }
                if k != l {
                    next[(k, l)] = acc;
                } else {
                    diag[k] = acc1;
                }
            }
        }
        (next, diag)
    }

    #[test]
    fn constant_density_rows_equal_previous_weights() {
        let hmm = DiscreteHmm::new(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![0.3, 0.9]; 3]).unwrap();
        let mut rng = RngStream::new(1, 0);
        let s0 = FilterState::initialize(&hmm, FilterConfig::new(5), &mut rng).unwrap();
        let s1 = s0.step(&hmm, &mut rng).unwrap();
        let beta = BackwardMatrix::compute(&hmm, &s0, s1.particles()).unwrap();
        assert_eq!(beta.classes(), 1);
        for k in 0..5 {
            for l in 0..5 {
                assert!((beta.get(k, l) - s0.norm_weights()[l]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_evaluated_row() {
        // omega = (1, 3), m(xi^1, .) = 2, m(xi^2, .) = 1: row = (2/5, 3/5)
        let row = [1.0 * 2.0, 3.0 * 1.0];
        let s: f64 = row.iter().sum();
        let beta = BackwardMatrix::from_rows(&[vec![row[0] / s, row[1] / s]]).unwrap();
        assert!((beta.get(0, 0) - 0.4).abs() < 1e-15);
        assert!((beta.get(0, 1) - 0.6).abs() < 1e-15);
        let one = BackwardMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(one.to_dense()[(0, 0)], 1.0);
    }

    #[test]
    fn invalid_rows_rejected() {
        assert!(BackwardMatrix::from_rows(&[vec![0.5, 0.4]]).is_err());
        assert!(BackwardMatrix::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(BackwardMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn identity_beta_update() {
        let n = 4;
        let w = [0.1, 0.2, 0.3, 0.4];
        let rows: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|l| if k == l { 1.0 } else { 0.0 }).collect()).collect();
        let beta = BackwardMatrix::from_rows(&rows).unwrap();
        let mut stats = BsStats::new(n, true);
        stats.update(&beta, &w).unwrap();
        for k in 0..n {
            assert!((stats.tes_diag()[k] - (1.0 - w[k])).abs() < 1e-15);
            for l in 0..n {
                let expected = if k == l { 0.0 } else { 1.0 };
                assert_eq!(stats.t0()[(k, l)], expected);
            }
        }
    }

    #[test]
    fn uniform_beta_update() {
        let n = 5;
        let w = vec![1.0 / n as f64; n];
        let beta = BackwardMatrix::from_rows(&vec![w.clone(); n]).unwrap();
        let mut stats = BsStats::new(n, false);
        stats.update(&beta, &w).unwrap();
        let expected = (n as f64 - 1.0) / n as f64;
        let (scalar, diag) = scalar_update(&vec![w.clone(); n], &ones_minus_identity(n), &w);
        for k in 0..n {
            assert!((stats.tes_diag()[k] - expected).abs() < 1e-15);
            assert!((diag[k] - expected).abs() < 1e-15);
            for l in 0..n {
                let e = if k == l { 0.0 } else { expected };
                assert!((stats.t0()[(k, l)] - e).abs() < 1e-15);
                assert!((scalar[(k, l)] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matrix_update_matches_scalar_sums() {
        let mut rng = RngStream::new(17, 0);
        let n = 3;
        let mut stats = BsStats::new(n, true);
        let mut t0 = ones_minus_identity(n);
        let mut sum = Matrix::identity(n, n);
        for _ in 0..4 {
            let rows = random_beta(n, &mut rng);
            let w = random_simplex(n, &mut rng);
            let beta = BackwardMatrix::from_rows(&rows).unwrap();
            stats.update(&beta, &w).unwrap();
            let (next, diag) = scalar_update(&rows, &t0, &w);
            let (mut next_s, _) = scalar_update(&rows, &sum, &w);
            for k in 0..n {
                next_s[(k, k)] = diag[k];
            }
            for k in 0..n {
                assert!((stats.tes_diag()[k] - diag[k]).abs() < 1e-12);
                for l in 0..n {
                    assert!((stats.t0()[(k, l)] - next[(k, l)]).abs() < 1e-12);
                    assert!((stats.sum().unwrap()[(k, l)] - next_s[(k, l)]).abs() < 1e-12);
                }
            }
            t0 = next;
            sum = next_s;
        }
    }

    #[test]
    fn duplicate_rows_share_storage() {
        let rows = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.2, 0.8]];
        let beta = BackwardMatrix::from_rows(&rows).unwrap();
        assert_eq!(beta.classes(), 2);
        assert_eq!(beta.class_of(), &[0, 1, 0]);
        let dense = beta.to_dense();
        // compressed sandwich equals the dense one
        let m = Matrix::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 });
        let out = beta.sandwich_offdiag(&m, None);
        for k in 0..3 {
            for l in 0..3 {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += dense[(k, i)] * dense[(l, j)] * m[(i, j)];
                    }
                }
                let e = if k == l { 0.0 } else { s };
                assert!((out[(k, l)] - e).abs() < 1e-15);
            }
        }
    }

    fn t0_state(h: &[f64]) -> FilterState<usize> {
        let n = h.len();
        let hmm = DiscreteHmm::new(vec![1.0], vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        let mut rng = RngStream::new(0, 0);
        FilterState::initialize(&hmm, FilterConfig::new(n), &mut rng).unwrap()
    }

    #[test]
    fn estimators_at_time_zero() {
        let h = [1.0, -1.0];
        let state = t0_state(&h);
        let stats = BsStats::new(2, true);
        assert!((stats.var_gamma(&state, &h).unwrap() - 2.0).abs() < 1e-14);
        assert!((stats.var_eta(&state, &h).unwrap() - 2.0).abs() < 1e-14);
        assert!((stats.tbt_var_gamma(&state, &h).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(stats.var_eta(&state, &[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(stats.tbt_var_gamma(&state, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_h_at_time_zero_is_zero() {
        // t = 0: N c^2 (1 - N/(N-1) * N(N-1)/N^2) = 0
        let h = [2.5; 4];
        let state = t0_state(&h);
        let stats = BsStats::new(4, true);
        assert!(stats.var_gamma(&state, &h).unwrap().abs() < 1e-12);
        assert!(stats.tbt_var_gamma(&state, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_particle_is_rejected() {
        let state = t0_state(&[1.0]);
        let stats = BsStats::new(1, true);
        assert!(matches!(stats.var_eta(&state, &[1.0]), Err(Error::TooFewParticles(1))));
        assert!(matches!(stats.var_gamma(&state, &[1.0]), Err(Error::TooFewParticles(1))));
        assert!(matches!(stats.tbt_var_gamma(&state, &[1.0]), Err(Error::TooFewParticles(1))));
    }

    #[test]
    fn mask_horizon_is_enforced() {
        let hmm = DiscreteHmm::random(2, 5, &mut RngStream::new(3, 0));
        let mut rng = RngStream::new(3, 1);
        assert!(matches!(
            identity_check(&hmm, 3, 4, |&x| x as f64, &mut rng),
            Err(Error::MaskHorizon { .. })
        ));
        let (dev, off) = identity_check(&hmm, 3, 0, |&x| x as f64 + 1.0, &mut rng).unwrap();
        assert!(dev < 1e-12 && off < 1e-12);
    }

    #[test]
    fn invariants_hold_along_a_run() {
        let mut rng = RngStream::new(5, 0);
        let hmm = DiscreteHmm::random(3, 8, &mut rng);
        let n = 12;
        let mut stats = BsStats::new(n, true);
        let mut last_diversity = stats.diversity();
        run(&hmm, FilterConfig::new(n), 7, &mut rng, |prev, curr| {
            if let Some(prev) = prev {
                let beta = BackwardMatrix::compute(&hmm, prev, curr.particles())?;
                for k in 0..n {
                    let s: f64 = beta.row(k).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
                stats.update(&beta, prev.norm_weights())?;
            }
            for k in 0..n {
                assert_eq!(stats.t0()[(k, k)], 0.0);
                assert!((0.0..=1.0 + 1e-12).contains(&stats.tes_diag()[k]));
                for l in 0..n {
                    let x = stats.t0()[(k, l)];
                    assert!((-1e-15..=1.0 + 1e-12).contains(&x));
                    assert!((x - stats.t0()[(l, k)]).abs() < 1e-14);
                }
            }
            assert!(stats.diversity() <= 1.0 + 1e-12);
            last_diversity = stats.diversity();
            Ok(())
        })
        .unwrap();
        assert!(last_diversity > 0.0);
    }
}
