//! The Feynman-Kac model abstraction consumed by the filter and estimators.
//!
//! Time indexing: the initial law produces `x_0`, `trans_sample(_, x, t)` draws
//! `x_t` given `x_{t-1}` for `t >= 1`, and `potential(x, t)` is `g_t(x)`.

use rand::RngCore;

pub trait Model: Sync {
    type State: Clone + Send + Sync;

    fn state_dim(&self) -> usize;

    fn init_sample(&self, rng: &mut dyn RngCore) -> Self::State;

    /// Log density of the initial law, when the model exposes it.
    fn init_log_density(&self, _x: &Self::State) -> Option<f64> {
        None
    }

    fn trans_sample(&self, rng: &mut dyn RngCore, prev: &Self::State, t: usize) -> Self::State;

    /// Transition density `m_t(prev, next)`.
    fn trans_density(&self, prev: &Self::State, next: &Self::State, t: usize) -> f64;

    /// `out[l] = m_t(prevs[l], next)` for every `l`.
    ///
    /// Override when the densities of one row can be evaluated faster together.
    fn trans_density_row(&self, prevs: &[Self::State], next: &Self::State, t: usize, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(prevs) {
            *o = self.trans_density(p, next, t);
        }
    }

    /// Potential `g_t(x)`, positive and at most [`Model::potential_bound`].
    fn potential(&self, x: &Self::State, t: usize) -> f64;

    /// Declared upper bound on every potential.
    fn potential_bound(&self) -> f64;
}
