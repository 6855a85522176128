//! Two-parameter Weibull fitting over cycle counts.
//!
//! Maximum likelihood via Newton iteration on the profile shape
//! equation, initialized by the method of moments. The shape is capped
//! at [`MAX_SHAPE`] so degenerate (identical-sample) inputs stay finite.

use thiserror::Error;

/// Upper cap on the fitted shape parameter.
pub const MAX_SHAPE: f64 = 200.0;

const NEWTON_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum WeibullError {
    #[error("Weibull fit needs at least 2 samples (got {0})")]
    TooFewSamples(usize),
    #[error("Weibull samples must be positive and finite (sample {0})")]
    BadSample(usize),
    #[error("Weibull shape iteration did not converge")]
    DidNotConverge,
}

/// Fitted shape/scale pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullFit {
    /// Quantile t_q = scale * (-ln(1 - q))^(1/shape).
    pub fn quantile(&self, q: f64) -> f64 {
        assert!(q > 0.0 && q < 1.0, "quantile must be in (0, 1)");
        self.scale * (-(1.0 - q).ln()).powf(1.0 / self.shape)
    }
}

// Profile sums S0 = sum(t^k), S1 = sum(t^k ln t), S2 = sum(t^k ln^2 t),
// computed against exp(k*lt - m) so large shapes do not overflow. The
// shared factor cancels in every ratio used below.
fn profile_sums(log_t: &[f64], shape: f64) -> (f64, f64, f64) {
    let m = log_t
        .iter()
        .map(|&lt| shape * lt)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &lt in log_t {
        let w = (shape * lt - m).exp();
        s0 += w;
        s1 += w * lt;
        s2 += w * lt * lt;
    }
    (s0, s1, s2)
}

// Scale MLE for a given shape: (sum(t^k)/n)^(1/k), in log space.
fn scale_for_shape(log_t: &[f64], shape: f64) -> f64 {
    let m = log_t
        .iter()
        .map(|&lt| shape * lt)
        .fold(f64::NEG_INFINITY, f64::max);
    let s0: f64 = log_t.iter().map(|&lt| (shape * lt - m).exp()).sum();
    ((m + (s0 / log_t.len() as f64).ln()) / shape).exp()
}

/// Fit shape and scale to positive samples by maximum likelihood.
pub fn weibull_mle(samples: &[f64]) -> Result<WeibullFit, WeibullError> {
    if samples.len() < 2 {
        return Err(WeibullError::TooFewSamples(samples.len()));
    }
    if let Some(i) = samples.iter().position(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(WeibullError::BadSample(i));
    }
    let n = samples.len() as f64;
    let log_t: Vec<f64> = samples.iter().map(|t| t.ln()).collect();
    let sum_log_t: f64 = log_t.iter().sum();

    // Method-of-moments start: k ~ cv^-1.086.
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let cv = var.sqrt() / mean;
    if cv < 1e-9 {
        // Identical samples within noise: pinned at the cap.
        let shape = MAX_SHAPE;
        return Ok(WeibullFit {
            shape,
            scale: scale_for_shape(&log_t, shape),
        });
    }
    let mut shape = cv.powf(-1.086).clamp(0.05, MAX_SHAPE);

    for _ in 0..MAX_ITER {
        let (s0, s1, s2) = profile_sums(&log_t, shape);
        let g = n / shape + sum_log_t - n * s1 / s0;
        let dg = -n / (shape * shape) - n * (s2 * s0 - s1 * s1) / (s0 * s0);
        if dg.abs() < 1e-300 {
            return Err(WeibullError::DidNotConverge);
        }
        let step = g / dg;
        shape = (shape - step).clamp(1e-3, MAX_SHAPE);
        if step.abs() < NEWTON_TOL * shape.max(1.0) {
            return Ok(WeibullFit {
                shape,
                scale: scale_for_shape(&log_t, shape),
            });
        }
        if shape >= MAX_SHAPE && g > 0.0 {
            // Likelihood still rising at the cap.
            return Ok(WeibullFit {
                shape: MAX_SHAPE,
                scale: scale_for_shape(&log_t, MAX_SHAPE),
            });
        }
    }
    Err(WeibullError::DidNotConverge)
}

/// Inverse-CDF draw, used by sampling tests and noise recovery checks.
pub fn weibull_sample(fit: &WeibullFit, uniform: f64) -> f64 {
    fit.quantile(uniform.clamp(1e-12, 1.0 - 1e-12))
}
