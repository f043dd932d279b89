//! Bootstrap particle filter with multinomial resampling.
//!
//! Besides particles and weights, a [`FilterState`] carries the running log of
//! the normalizing-constant estimate `gamma_t^N(1) = prod_{s<t} Omega_s / N`,
//! the Eve indices (time-0 ancestor of every particle) and a bounded ring of
//! Enoch indices (ancestor at lag `lambda`) for the fixed-lag estimators.

use std::borrow::Cow;
use std::collections::VecDeque;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::resample::multinomial_resample;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    /// Largest lag kept in the Enoch ring.
    pub lag_capacity: usize,
}

impl FilterConfig {
    pub fn new(particles: usize) -> Self {
        Self {
            particles,
            lag_capacity: 0,
        }
    }

    pub fn with_lag_capacity(mut self, lag_capacity: usize) -> Self {
        self.lag_capacity = lag_capacity;
        self
    }
}

/// Enoch indices `E^i_{t,t-lambda}` for `lambda = 1..=min(t, capacity)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnochRing {
    capacity: usize,
    lags: VecDeque<Vec<usize>>,
}

impl EnochRing {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            lags: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn advance(&mut self, ancestors: &[usize]) {
        if self.capacity == 0 {
            return;
        }
        for lag in self.lags.iter_mut() {
            *lag = ancestors.iter().map(|&a| lag[a]).collect();
        }
        self.lags.push_front(ancestors.to_vec());
        self.lags.truncate(self.capacity);
    }

    fn get(&self, lambda: usize) -> Option<&[usize]> {
        lambda.checked_sub(1).and_then(|i| self.lags.get(i)).map(Vec::as_slice)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterState<S> {
    t: usize,
    particles: Vec<S>,
    weights: Vec<f64>,
    norm_weights: Vec<f64>,
    omega_sum: f64,
    log_gamma1: f64,
    ancestors: Option<Vec<usize>>,
    eve: Vec<usize>,
    enoch: EnochRing,
}

impl<S: Clone> FilterState<S> {
    /// Samples `x_0^{1:N}` from the initial law and weights them with `g_0`.
    pub fn initialize<M>(model: &M, config: FilterConfig, rng: &mut RngStream) -> Result<Self>
    where
        M: Model<State = S>,
    {
        if config.particles == 0 {
            return Err(Error::InvalidParameter("particle count must be positive".into()));
        }
        let particles: Vec<S> = (0..config.particles).map(|_| model.init_sample(rng)).collect();
        Self::from_particles(model, particles, 0, None, (0..config.particles).collect(), EnochRing::new(config.lag_capacity), 0.0)
    }

    /// Advances the filter from `t` to `t + 1`: resample, propagate, reweight.
    pub fn step<M>(&self, model: &M, rng: &mut RngStream) -> Result<Self>
    where
        M: Model<State = S>,
    {
        let ancestors = multinomial_resample(rng, &self.norm_weights)?;
        let t = self.t + 1;
        let particles: Vec<S> = ancestors
            .iter()
            .map(|&a| model.trans_sample(rng, &self.particles[a], t))
            .collect();
        let eve = ancestors.iter().map(|&a| self.eve[a]).collect();
        let mut enoch = self.enoch.clone();
        enoch.advance(&ancestors);
        let log_gamma1 = self.log_gamma1 + (self.omega_sum / self.len() as f64).ln();
        Self::from_particles(model, particles, t, Some(ancestors), eve, enoch, log_gamma1)
    }

    fn from_particles<M>(
        model: &M,
        particles: Vec<S>,
        t: usize,
        ancestors: Option<Vec<usize>>,
        eve: Vec<usize>,
        enoch: EnochRing,
        log_gamma1: f64,
    ) -> Result<Self>
    where
        M: Model<State = S>,
    {
        let weights = particles
            .iter()
            .map(|x| {
                let g = model.potential(x, t);
                if g.is_finite() && g > 0.0 {
                    Ok(g)
                } else {
                    Err(Error::InvalidPotential { t, value: g })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let omega_sum: f64 = weights.iter().sum();
        let norm_weights = weights.iter().map(|w| w / omega_sum).collect();
        Ok(Self {
            t,
            particles,
            weights,
            norm_weights,
            omega_sum,
            log_gamma1,
            ancestors,
            eve,
            enoch,
        })
    }
}

impl<S> FilterState<S> {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    /// Unnormalized weights `omega_t^i = g_t(xi_t^i)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    pub fn omega_sum(&self) -> f64 {
        self.omega_sum
    }

    /// `log gamma_t^N(1)`; zero at `t = 0`.
    pub fn log_gamma1(&self) -> f64 {
        self.log_gamma1
    }

    /// `log gamma_{t+1}^N(1)`, available once the weights at `t` are known.
    pub fn log_gamma1_next(&self) -> f64 {
        self.log_gamma1 + (self.omega_sum / self.len() as f64).ln()
    }

    /// Ancestor indices `A_{t-1}^{1:N}`; `None` at `t = 0`.
    pub fn ancestors(&self) -> Option<&[usize]> {
        self.ancestors.as_deref()
    }

    pub fn eve(&self) -> &[usize] {
        &self.eve
    }

    pub fn lag_capacity(&self) -> usize {
        self.enoch.capacity()
    }

    /// Ancestor indices at lag `lambda`, `E^i_{t,t-lambda}`.
    ///
    /// Lags at or beyond `t` resolve to the Eve indices. Lags above the ring
    /// capacity are an error even when they would resolve to the Eve indices.
    pub fn enoch(&self, lambda: usize) -> Result<Cow<'_, [usize]>> {
        if lambda == 0 {
            return Ok(Cow::Owned((0..self.len()).collect()));
        }
        if lambda > self.enoch.capacity() {
            return Err(Error::RingCapacityExceeded {
                lag: lambda,
                capacity: self.enoch.capacity(),
            });
        }
        if lambda >= self.t {
            return Ok(Cow::Borrowed(&self.eve));
        }
        Ok(Cow::Borrowed(self.enoch.get(lambda).expect("lag within ring")))
    }

    /// Evaluates `h` at every particle.
    pub fn map<F: Fn(&S) -> f64>(&self, h: F) -> Vec<f64> {
        self.particles.iter().map(h).collect()
    }

    /// `eta_t^N(h)`, the unweighted particle mean.
    pub fn predictor_estimate(&self, h: &[f64]) -> f64 {
        h.iter().sum::<f64>() / h.len() as f64
    }

    /// `phi_t^N(h)`, the self-normalized weighted mean.
    pub fn filter_estimate(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.norm_weights).map(|(h, w)| h * w).sum()
    }

    /// `gamma_t^N(h) = gamma_t^N(1) eta_t^N(h)`.
    pub fn gamma_estimate(&self, h: &[f64]) -> f64 {
        self.log_gamma1.exp() * self.predictor_estimate(h)
    }
}

impl<S: Serialize> FilterState<S> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }
}

impl<S: DeserializeOwned> FilterState<S> {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

/// Runs the filter from time 0 and calls `visit` on every state up to `horizon`.
pub fn run<M, F>(model: &M, config: FilterConfig, horizon: usize, rng: &mut RngStream, mut visit: F) -> Result<FilterState<M::State>>
where
    M: Model,
    F: FnMut(Option<&FilterState<M::State>>, &FilterState<M::State>) -> Result<()>,
{
    let mut state = FilterState::initialize(model, config, rng)?;
    visit(None, &state)?;
    for _ in 0..horizon {
        let next = state.step(model, rng)?;
        visit(Some(&state), &next)?;
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    /// Deterministic shift with constant potential `c`.
    struct Shift {
        c: f64,
    }

    impl Model for Shift {
        type State = f64;
        fn state_dim(&self) -> usize {
            1
        }
        fn init_sample(&self, rng: &mut dyn RngCore) -> f64 {
            (rng.next_u32() % 10) as f64
        }
        fn trans_sample(&self, _rng: &mut dyn RngCore, prev: &f64, _t: usize) -> f64 {
            prev + 1.0
        }
        fn trans_density(&self, prev: &f64, next: &f64, _t: usize) -> f64 {
            if *next == prev + 1.0 {
                1.0
            } else {
                0.0
            }
        }
        fn potential(&self, _x: &f64, _t: usize) -> f64 {
            self.c
        }
        fn potential_bound(&self) -> f64 {
            self.c
        }
    }

    struct ZeroPotential;

    impl Model for ZeroPotential {
        type State = f64;
        fn state_dim(&self) -> usize {
            1
        }
        fn init_sample(&self, _rng: &mut dyn RngCore) -> f64 {
            0.0
        }
        fn trans_sample(&self, _rng: &mut dyn RngCore, prev: &f64, _t: usize) -> f64 {
            *prev
        }
        fn trans_density(&self, _prev: &f64, _next: &f64, _t: usize) -> f64 {
            1.0
        }
        fn potential(&self, _x: &f64, t: usize) -> f64 {
            if t == 2 {
                0.0
            } else {
                1.0
            }
        }
        fn potential_bound(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn identity_shift_keeps_unit_normalizer() {
        let model = Shift { c: 1.0 };
        let mut rng = RngStream::new(3, 0);
        let s0 = FilterState::initialize(&model, FilterConfig::new(3), &mut rng).unwrap();
        let s1 = s0.step(&model, &mut rng).unwrap();
        for (i, x) in s1.particles().iter().enumerate() {
            let a = s1.ancestors().unwrap()[i];
            assert_eq!(*x, s0.particles()[a] + 1.0);
        }
        assert_eq!(s1.log_gamma1(), 0.0);
    }

    #[test]
    fn constant_potential_normalizer() {
        let c = 1.7;
        let model = Shift { c };
        let mut rng = RngStream::new(3, 0);
        let last = run(&model, FilterConfig::new(5), 6, &mut rng, |_, _| Ok(())).unwrap();
        let expected = c.powi(6);
        assert!((last.log_gamma1().exp() / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_is_an_error() {
        let mut rng = RngStream::new(0, 0);
        let err = run(&ZeroPotential, FilterConfig::new(4), 3, &mut rng, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::InvalidPotential { t: 2, .. }));
    }

    #[test]
    fn single_particle_runs() {
        let model = Shift { c: 2.0 };
        let mut rng = RngStream::new(1, 0);
        let last = run(&model, FilterConfig::new(1), 4, &mut rng, |_, s| {
            assert_eq!(s.norm_weights(), &[1.0]);
            assert_eq!(s.eve(), &[0]);
            Ok(())
        })
        .unwrap();
        assert_eq!(last.t(), 4);
    }

    #[test]
    fn eve_and_enoch_follow_ancestors() {
        let model = Shift { c: 1.0 };
        let mut rng = RngStream::new(9, 2);
        let n = 6;
        let mut history: Vec<Vec<usize>> = Vec::new();
        let last = run(&model, FilterConfig::new(n).with_lag_capacity(3), 5, &mut rng, |_, s| {
            if let Some(a) = s.ancestors() {
                history.push(a.to_vec());
            }
            Ok(())
        })
        .unwrap();
        // explicit ancestor tracing
        for lambda in 0..=3usize {
            let traced: Vec<usize> = (0..n)
                .map(|mut i| {
                    for a in history.iter().rev().take(lambda) {
                        i = a[i];
                    }
                    i
                })
                .collect();
            assert_eq!(last.enoch(lambda).unwrap().as_ref(), traced.as_slice());
        }
        let eve: Vec<usize> = (0..n)
            .map(|mut i| {
                for a in history.iter().rev() {
                    i = a[i];
                }
                i
            })
            .collect();
        assert_eq!(last.eve(), eve.as_slice());
        assert!(matches!(last.enoch(4), Err(Error::RingCapacityExceeded { lag: 4, capacity: 3 })));
    }

    #[test]
    fn snapshot_roundtrip() {
        let model = Shift { c: 1.3 };
        let mut rng = RngStream::new(5, 5);
        let last = run(&model, FilterConfig::new(4).with_lag_capacity(2), 3, &mut rng, |_, _| Ok(())).unwrap();
        let back: FilterState<f64> = FilterState::from_json(&last.to_json().unwrap()).unwrap();
        assert_eq!(back.particles(), last.particles());
        assert_eq!(back.eve(), last.eve());
        assert_eq!(back.log_gamma1(), last.log_gamma1());
        assert_eq!(back.enoch(2).unwrap(), last.enoch(2).unwrap());
    }
}
