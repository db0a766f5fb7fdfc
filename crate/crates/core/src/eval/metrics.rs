//! Regression metrics: root-mean-squared error, explained variance, and
//! relative improvement between two RMSE values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predicted vs {1} observed")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least {0} samples")]
    TooFewSamples(usize),
    #[error("observed values have zero variance; EVA is undefined")]
    ZeroVariance,
    #[error("baseline RMSE must be positive")]
    NonPositiveBaseline,
}

/// Aggregate report over one evaluation run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub eva: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn from_pairs(predicted: &[f64], observed: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            rmse: rmse(predicted, observed)?,
            eva: eva(predicted, observed)?,
            n: predicted.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn check_lengths(predicted: &[f64], observed: &[f64]) -> Result<(), MetricError> {
    if predicted.len() != observed.len() {
        return Err(MetricError::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Root of the mean squared residual, in degrees.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, observed)?;
    let sum_sq: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    Ok((sum_sq / predicted.len() as f64).sqrt())
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Explained variance: `1 - Var(predicted - observed) / Var(observed)`,
/// with population variances. 1 is a perfect fit; values at or below 0 mean
/// the predictions explain nothing beyond the observed mean.
pub fn eva(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predicted, observed)?;
    if predicted.len() < 2 {
        return Err(MetricError::TooFewSamples(2));
    }
    let var_obs = population_variance(observed.iter().copied());
    if var_obs == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let residuals = predicted.iter().zip(observed).map(|(p, o)| p - o);
    Ok(1.0 - population_variance(residuals) / var_obs)
}

/// Relative RMSE change in percent: `(new - baseline) / baseline * 100`.
/// Negative values mean the new model's RMSE is lower (an improvement).
pub fn improvement(baseline_rmse: f64, new_rmse: f64) -> Result<f64, MetricError> {
    if !(baseline_rmse > 0.0) {
        return Err(MetricError::NonPositiveBaseline);
    }
    Ok((new_rmse - baseline_rmse) / baseline_rmse * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_trivial_cases() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 2.0).collect();
        assert!((rmse(&shifted, &x).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_hand_computation() {
        // residuals 1, 0, 2 -> sqrt(5/3)
        let got = rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap();
        assert!((got - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_rejects_bad_shapes() {
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch(1, 2))
        ));
        assert!(matches!(rmse(&[], &[]), Err(MetricError::Empty)));
    }

    #[test]
    fn eva_trivial_cases() {
        let obs = vec![1.0, 3.0, -2.0, 0.5];
        assert!((eva(&obs, &obs).unwrap() - 1.0).abs() < 1e-15);
        // Constant prediction at the observed mean: residual variance equals
        // observed variance, EVA = 0.
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let constant = vec![mean; obs.len()];
        assert!(eva(&constant, &obs).unwrap().abs() < 1e-15);
    }

    #[test]
    fn eva_undefined_on_constant_observed() {
        let obs = vec![2.0, 2.0, 2.0];
        assert!(matches!(
            eva(&[1.0, 2.0, 3.0], &obs),
            Err(MetricError::ZeroVariance)
        ));
        assert!(matches!(eva(&[1.0], &[1.0]), Err(MetricError::TooFewSamples(2))));
    }

    #[test]
    fn eva_matches_two_pass_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let observed: Vec<f64> = (0..20).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let predicted: Vec<f64> = observed
            .iter()
            .map(|o| o + rng.gen_range(-2.0..2.0))
            .collect();

        // Independent two-pass variance computation.
        let var = |xs: &[f64]| {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
        };
        let resid: Vec<f64> = predicted.iter().zip(&observed).map(|(p, o)| p - o).collect();
        let expected = 1.0 - var(&resid) / var(&observed);
        assert!((eva(&predicted, &observed).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn improvement_algebra() {
        assert_eq!(improvement(4.0, 4.0).unwrap(), 0.0);
        assert!((improvement(4.0, 3.0).unwrap() + 25.0).abs() < 1e-12);
        assert!(matches!(
            improvement(0.0, 1.0),
            Err(MetricError::NonPositiveBaseline)
        ));
    }

    #[test]
    fn report_json_roundtrip() {
        let report = MetricReport {
            rmse: 2.1700000000000004,
            eva: 0.812,
            n: 129,
        };
        let json = report.to_json();
        assert!(json.starts_with("{\"rmse\":"));
        let back = MetricReport::from_json(&json).unwrap();
        assert_eq!(back, report);
    }
}
