//! pass@k and relative degradation.

use super::StatsError;

/// Unbiased pass@k estimator `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as a running product `prod_{i=n-c+1}^{n} (1 - k/i)`, which
/// avoids large binomials entirely.
pub fn pass_at_k(n_samples: u64, n_correct: u64, k: u64) -> Result<f64, StatsError> {
    if n_correct > n_samples {
        return Err(StatsError::InvalidInput(format!("n_correct {n_correct} exceeds n_samples {n_samples}")));
    }
    if k == 0 || k > n_samples {
        return Err(StatsError::InvalidInput(format!("k = {k} not in 1..={n_samples}")));
    }
    if n_samples - n_correct < k {
        return Ok(1.0);
    }
    let mut fail = 1.0f64;
    for i in (n_samples - n_correct + 1)..=n_samples {
        fail *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - fail)
}

/// Pass rates of one model on a clean and a perturbed test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdInput {
    pub pass_original: f64,
    pub pass_perturbed: f64,
}

/// `(original - perturbed) / original`; negative when the perturbed set
/// scores higher. Inputs may be fractions or percentages, as long as both
/// use the same scale.
pub fn relative_degradation(input: RdInput) -> Result<f64, StatsError> {
    if !(input.pass_original > 0.0) || !input.pass_perturbed.is_finite() {
        return Err(StatsError::RdUndefined);
    }
    Ok((input.pass_original - input.pass_perturbed) / input.pass_original)
}
