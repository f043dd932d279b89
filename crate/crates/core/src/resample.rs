//! Multinomial resampling.

use rand::distributions::{Distribution, WeightedError, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// Draws `weights.len()` i.i.d. indices from the categorical law `weights`.
pub fn multinomial_resample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<Vec<usize>> {
    categorical_draws(rng, weights, weights.len())
}

/// Draws `count` i.i.d. indices from the categorical law with the given
/// (not necessarily normalized) weights.
pub fn categorical_draws<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], count: usize) -> Result<Vec<usize>> {
    let dist = categorical(weights)?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

pub(crate) fn categorical(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::DegenerateWeights("non-finite weight".into()));
    }
    WeightedIndex::new(weights).map_err(|e| {
        Error::DegenerateWeights(match e {
            WeightedError::NoItem => "empty weight vector".into(),
            WeightedError::InvalidWeight => "negative or NaN weight".into(),
            WeightedError::AllWeightsZero => "all weights are zero".into(),
            WeightedError::TooMany => "too many weights".into(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn single_atom() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(multinomial_resample(&mut rng, &[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0; 4]);
        assert_eq!(multinomial_resample(&mut rng, &[1.0]).unwrap(), vec![0]);
    }

    #[test]
    fn degenerate_weights_rejected() {
        let mut rng = RngStream::new(0, 0);
        for w in [vec![0.0, 0.0], vec![f64::NAN, 1.0], vec![-0.1, 1.1], vec![]] {
            assert!(matches!(
                multinomial_resample(&mut rng, &w),
                Err(Error::DegenerateWeights(_))
            ));
        }
    }

    #[test]
    fn frequencies_pass_chi_square() {
        let p = [0.5, 0.3, 0.2];
        let draws = 100_000;
        let mut rng = RngStream::new(42, 1);
        let idx = categorical_draws(&mut rng, &p, draws).unwrap();
        let mut counts = [0usize; 3];
        for i in idx {
            counts[i] += 1;
        }
        let mut chi2 = 0.0;
        for (c, p) in counts.iter().zip(p) {
            let expected = p * draws as f64;
            chi2 += (*c as f64 - expected).powi(2) / expected;
            // 3 sigma binomial band per cell
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - expected).abs() < 3.0 * sd);
        }
        // chi-square(2) upper 0.999 quantile
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }
}
