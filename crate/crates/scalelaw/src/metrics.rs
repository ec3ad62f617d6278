//! Loss and evaluation metrics over paired actual/predicted values.
//!
//! Three distinct epsilon conventions coexist and are never shared: the
//! training loss offset [`TRAIN_EPSILON`], the reported-metric offset
//! [`REPORT_EPSILON`], and the normalization offset [`NORM_EPSILON`] used
//! when centering log targets before fitting.

use crate::error::{Error, Result};

/// ε inside the logs of the training objective.
pub const TRAIN_EPSILON: f64 = 1e-16;
/// ε inside the logs of reported RMSLE / dispersion values.
pub const REPORT_EPSILON: f64 = 1e-36;
/// ε added to y before taking the log used to center targets.
pub const NORM_EPSILON: f64 = 1e-20;

/// Paired vectors for one metric evaluation.
#[derive(Debug, Clone)]
pub struct MetricInputs<'a> {
    pub actual: &'a [f64],
    pub predicted: &'a [f64],
    pub epsilon: f64,
}

impl<'a> MetricInputs<'a> {
    pub fn new(actual: &'a [f64], predicted: &'a [f64], epsilon: f64) -> Result<Self> {
        if actual.is_empty() {
            return Err(Error::Argument("metric inputs must be nonempty".into()));
        }
        if actual.len() != predicted.len() {
            return Err(Error::Argument(format!(
                "{} actual vs {} predicted values",
                actual.len(),
                predicted.len()
            )));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Argument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self {
            actual,
            predicted,
            epsilon,
        })
    }

    fn sq_log_errors(&self) -> impl Iterator<Item = f64> + '_ {
        let eps = self.epsilon;
        self.actual
            .iter()
            .zip(self.predicted)
            .map(move |(&y, &yh)| {
                let d = (y + eps).ln() - (yh + eps).ln();
                d * d
            })
    }
}

/// Mean squared log error: (1/N) Σ (log(y+ε) − log(ŷ+ε))².
pub fn msle(inp: &MetricInputs) -> f64 {
    inp.sq_log_errors().sum::<f64>() / inp.actual.len() as f64
}

/// √msle with the caller's ε.
pub fn rmsle(inp: &MetricInputs) -> f64 {
    msle(inp).sqrt()
}

/// Dispersion companion to RMSLE: with μ the mean and σ the sample
/// standard deviation (N−1) of the squared log errors, returns
/// √(μ + σ/√N) − √μ. Needs at least two points.
pub fn root_standard_log_error(inp: &MetricInputs) -> Result<f64> {
    let n = inp.actual.len();
    if n < 2 {
        return Err(Error::Argument(
            "dispersion needs at least 2 points (sample std divides by N-1)".into(),
        ));
    }
    let errs: Vec<f64> = inp.sq_log_errors().collect();
    let mu = errs.iter().sum::<f64>() / n as f64;
    let var = errs.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / (n as f64 - 1.0);
    let sigma = var.sqrt();
    Ok((mu + sigma / (n as f64).sqrt()).sqrt() - mu.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero() {
        let y = [0.5, 2.0, 7.0];
        let inp = MetricInputs::new(&y, &y, TRAIN_EPSILON).unwrap();
        assert_eq!(msle(&inp), 0.0);
        assert_eq!(rmsle(&inp), 0.0);
    }

    #[test]
    fn unit_log_error() {
        let eps = 1e-16;
        let y = [1.0];
        let yh = [std::f64::consts::E - eps];
        let inp = MetricInputs::new(&y, &yh, eps).unwrap();
        assert!((msle(&inp) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_two_point_case() {
        let y = [1.0, 1.0];
        let yh = [std::f64::consts::E.powi(2), 1.0];
        let inp = MetricInputs::new(&y, &yh, 0.0).unwrap();
        assert!((msle(&inp) - 2.0).abs() < 1e-12);
        assert!((rmsle(&inp) - 2.0f64.sqrt()).abs() < 1e-12);
        // μ = 2, σ = √8: dispersion = √(2 + √8/√2) − √2 = 2 − √2.
        let rsle = root_standard_log_error(&inp).unwrap();
        assert!((rsle - (2.0 - 2.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn rmsle_squares_back_to_msle() {
        let y = [0.2, 3.0, 9.0, 0.01];
        let yh = [0.25, 2.0, 9.5, 0.02];
        let inp = MetricInputs::new(&y, &yh, REPORT_EPSILON).unwrap();
        assert!((rmsle(&inp).powi(2) - msle(&inp)).abs() < 1e-15);
    }

    #[test]
    fn equal_errors_have_zero_dispersion() {
        let y = [1.0, 2.0, 4.0];
        let yh = [2.0, 4.0, 8.0];
        let inp = MetricInputs::new(&y, &yh, 0.0).unwrap();
        let rsle = root_standard_log_error(&inp).unwrap();
        assert!(rsle.abs() < 1e-12);
    }

    #[test]
    fn single_point_dispersion_errors_out() {
        let inp = MetricInputs::new(&[1.0], &[2.0], 0.0).unwrap();
        assert!(root_standard_log_error(&inp).is_err());
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        assert!(MetricInputs::new(&[], &[], 0.0).is_err());
        assert!(MetricInputs::new(&[1.0], &[1.0, 2.0], 0.0).is_err());
        assert!(MetricInputs::new(&[1.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn scale_invariance_at_zero_epsilon() {
        let y = [0.3, 1.7, 4.0];
        let yh = [0.4, 1.5, 5.0];
        let base = msle(&MetricInputs::new(&y, &yh, 0.0).unwrap());
        for lam in [1e-3, 7.0, 1e6] {
            let ys: Vec<f64> = y.iter().map(|v| v * lam).collect();
            let yhs: Vec<f64> = yh.iter().map(|v| v * lam).collect();
            let scaled = msle(&MetricInputs::new(&ys, &yhs, 0.0).unwrap());
            assert!((scaled - base).abs() < 1e-12);
        }
        // With a tiny epsilon and values >= 1e-6 the drift stays negligible.
        let scaled = msle(&MetricInputs::new(&y, &yh, 1e-16).unwrap());
        assert!((scaled - base).abs() < 1e-12);
    }

    #[test]
    fn dispersion_shrinks_with_sample_size() {
        // Fixed alternating per-element log errors; dispersion must fall
        // roughly as 1/√N.
        let mut prev = f64::INFINITY;
        for n in [10usize, 100, 10000] {
            let y: Vec<f64> = (0..n).map(|_| 1.0).collect();
            let yh: Vec<f64> = (0..n)
                .map(|i| if i % 2 == 0 { 1.5 } else { 0.8 })
                .collect();
            let inp = MetricInputs::new(&y, &yh, 0.0).unwrap();
            let rsle = root_standard_log_error(&inp).unwrap();
            assert!(rsle >= 0.0 && rsle < prev);
            prev = rsle;
        }
        assert!(prev < 1e-2);
    }
}
