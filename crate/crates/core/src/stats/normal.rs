//! Standard normal tail probabilities and quantiles.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

/// `2 * Phi(-|z|)`, evaluated through `erfc` so that deep tails (down to
/// about 1e-300) keep full relative precision.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Lower-tail probability `Phi(z)`.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided critical value for a confidence level, rounded to six
/// decimals (1.959964 at 95%).
pub fn two_sided_quantile(confidence: f64) -> f64 {
    let q = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    (q * 1e6).round() / 1e6
}
