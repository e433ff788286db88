//! Wilcoxon signed-rank test.
//!
//! Zero differences are dropped, absolute differences are ranked with
//! midranks on ties, and the statistic is `W = min(T+, T-)`.
//!
//! Modes:
//! - `Normal`: `z = (W - n(n+1)/4) / sqrt(n(n+1)(2n+1)/24)`, no continuity
//!   or tie correction, `p = 2 * Phi(z)`. This matches the figures usually
//!   reported alongside `r = |z| / sqrt(n)`.
//! - `NormalCorrected`: tie-corrected variance and a 0.5 continuity
//!   correction.
//! - `Exact`: `p` from the full distribution of `T+` over all `2^n` sign
//!   assignments, counted by dynamic programming over (doubled) rank sums.
//! - `Auto`: `Exact` up to the configured cutoff, `Normal` above it.

use serde::{Deserialize, Serialize};

use super::normal::two_sided_p;
use super::StatsError;

/// Largest `n` for which exact enumeration is offered.
pub const MAX_EXACT_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMode {
    Exact,
    Normal,
    NormalCorrected,
    Auto,
}

impl std::str::FromStr for WilcoxonMode {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "normal" => Ok(Self::Normal),
            "normal-corrected" => Ok(Self::NormalCorrected),
            "auto" => Ok(Self::Auto),
            other => Err(StatsError::InvalidInput(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub alpha: f64,
    /// `Auto` mode uses the exact distribution for `n <= exact_cutoff`.
    pub exact_cutoff: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { alpha: 0.05, exact_cutoff: MAX_EXACT_N }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidInput(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.exact_cutoff > MAX_EXACT_N {
            return Err(StatsError::InvalidInput(format!("exact cutoff {} exceeds {MAX_EXACT_N}", self.exact_cutoff)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub w: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    /// Normal deviate of `W` (uncorrected unless the mode is
    /// `NormalCorrected`); always `<= 0`.
    pub z: f64,
    pub p_two_sided: f64,
    /// The mode that produced `p_two_sided` (never `Auto`).
    pub mode: WilcoxonMode,
}

impl WilcoxonResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_two_sided < alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    /// `|z| / sqrt(n)`.
    pub r_z: f64,
    /// Matched-pairs rank-biserial correlation `(T+ - T-) / (T+ + T-)`.
    pub r_rb: f64,
}

/// Midranks of `values` (1-based), doubled so that they are integers.
pub fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; doubled midrank = first + last
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments whose doubled positive-rank sum is `<= limit`.
pub(crate) fn count_at_most(doubled_ranks: &[u64], limit: u64) -> u64 {
    let total: u64 = doubled_ranks.iter().sum();
    let cap = limit.min(total) as usize;
    let mut counts = vec![0u64; cap + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        let r = r as usize;
        if r > cap {
            continue;
        }
        for s in (r..=cap).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts.iter().sum()
}

/// Exact two-sided p for doubled ranks and doubled statistic `w2`.
pub(crate) fn exact_p(doubled_ranks: &[u64], w2: u64) -> f64 {
    let n = doubled_ranks.len() as u32;
    let all = 1u64 << n;
    let tail = count_at_most(doubled_ranks, w2);
    (2 * tail).min(all) as f64 / all as f64
}

fn normal_z(n: usize, w: f64, tie_term: f64, continuity: bool) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 0.0;
    }
    let mut dev = (w - mean).abs();
    if continuity {
        dev = (dev - 0.5).max(0.0);
    }
    -dev / var.sqrt()
}

fn resolve(mode: WilcoxonMode, n: usize, cfg: &StatsConfig) -> Result<WilcoxonMode, StatsError> {
    match mode {
        WilcoxonMode::Auto if n <= cfg.exact_cutoff => Ok(WilcoxonMode::Exact),
        WilcoxonMode::Auto => Ok(WilcoxonMode::Normal),
        WilcoxonMode::Exact if n > MAX_EXACT_N => Err(StatsError::ExactTooLarge { n }),
        m => Ok(m),
    }
}

/// Signed-rank test on the differences `a - b` of each pair.
pub fn wilcoxon_signed_rank(
    pairs: &[(f64, f64)],
    mode: WilcoxonMode,
    cfg: &StatsConfig,
) -> Result<WilcoxonResult, StatsError> {
    cfg.validate()?;
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite difference".into()));
    }
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let t_plus2: u64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| *r).sum();
    let total2: u64 = ranks.iter().sum();
    let t_minus2 = total2 - t_plus2;
    let w2 = t_plus2.min(t_minus2);

    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }

    let resolved = resolve(mode, n, cfg)?;
    let w = w2 as f64 / 2.0;
    let (z, p) = match resolved {
        WilcoxonMode::Exact => (normal_z(n, w, 0.0, false), exact_p(&ranks, w2)),
        WilcoxonMode::Normal => {
            let z = normal_z(n, w, 0.0, false);
            (z, two_sided_p(z))
        }
        WilcoxonMode::NormalCorrected => {
            let z = normal_z(n, w, tie_term, true);
            (z, two_sided_p(z))
        }
        WilcoxonMode::Auto => unreachable!(),
    };
    Ok(WilcoxonResult {
        n,
        w,
        t_plus: t_plus2 as f64 / 2.0,
        t_minus: t_minus2 as f64 / 2.0,
        z,
        p_two_sided: p,
        mode: resolved,
    })
}

/// Test result from a reported `(n, W)` summary, assuming untied ranks.
/// `T+` is taken to be the smaller sum.
pub fn wilcoxon_from_statistic(
    n: usize,
    w: f64,
    mode: WilcoxonMode,
    cfg: &StatsConfig,
) -> Result<WilcoxonResult, StatsError> {
    cfg.validate()?;
    if n == 0 {
        return Err(StatsError::AllZeroDifferences);
    }
    let total = (n * (n + 1)) as f64 / 2.0;
    if !(0.0..=total / 2.0).contains(&w) || (w * 2.0).fract() != 0.0 {
        return Err(StatsError::InvalidInput(format!("W = {w} impossible for n = {n}")));
    }
    let resolved = resolve(mode, n, cfg)?;
    let (z, p) = match resolved {
        WilcoxonMode::Exact => {
            let ranks: Vec<u64> = (1..=n as u64).map(|r| 2 * r).collect();
            (normal_z(n, w, 0.0, false), exact_p(&ranks, (w * 2.0) as u64))
        }
        WilcoxonMode::Normal => {
            let z = normal_z(n, w, 0.0, false);
            (z, two_sided_p(z))
        }
        WilcoxonMode::NormalCorrected => {
            let z = normal_z(n, w, 0.0, true);
            (z, two_sided_p(z))
        }
        WilcoxonMode::Auto => unreachable!(),
    };
    Ok(WilcoxonResult { n, w, t_plus: w, t_minus: total - w, z, p_two_sided: p, mode: resolved })
}

pub fn effect_size(result: &WilcoxonResult) -> EffectSizes {
    let sum = result.t_plus + result.t_minus;
    EffectSizes {
        r_z: result.z.abs() / (result.n as f64).sqrt(),
        r_rb: if sum > 0.0 { (result.t_plus - result.t_minus) / sum } else { 0.0 },
    }
}
