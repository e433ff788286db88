//! Robustness metrics and paired statistics.

mod metrics;
pub mod normal;
mod tables;
mod wilcoxon;

use thiserror::Error;

pub use metrics::{pass_at_k, relative_degradation, RdInput};
pub use tables::{rd_table, RdColumn, RdRow, RdTable, ScoreEntry, CLEAN_TEST_SET};
pub use wilcoxon::{
    doubled_midranks, effect_size, wilcoxon_from_statistic, wilcoxon_signed_rank, EffectSizes, StatsConfig,
    WilcoxonMode, WilcoxonResult, MAX_EXACT_N,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("RD undefined: original pass rate is zero")]
    RdUndefined,
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("exact mode supports at most {MAX_EXACT_N} non-zero pairs, got {n}")]
    ExactTooLarge { n: usize },
    #[error("model {model}: no unperturbed score for variant {variant}")]
    MissingUnperturbed { model: String, variant: String },
    #[error("model {model}: no perturbed scores")]
    MissingPerturbed { model: String },
}
