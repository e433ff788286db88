//! Robustness workbench for code-generation models.
//!
//! The crate covers everything around model fine-tuning: perturbing the
//! natural-language parts of instruction corpora and benchmark prompts,
//! enumerating and materializing the perturbed-dataset experiment plan,
//! evaluating completion endpoints against executable benchmarks, and the
//! statistics and code-quality reports computed from those runs.
//!
//! Modules:
//! - [`corpus`]: corpus and task-set formats, natural-language segmentation
//! - [`perturb`]: the nine perturbation operators and the seeded dispatcher
//! - [`datasets`]: ratio mixing, scaling, the experiment plan and manifests
//! - [`harness`]: completion providers, stop tokens, sandboxed execution
//! - [`stats`]: pass@k, relative degradation, Wilcoxon signed-rank
//! - [`quality`]: review sample sizes and lint diagnostic aggregation

pub mod corpus;
pub mod datasets;
pub mod harness;
pub mod perturb;
pub mod quality;
pub mod rng;
pub mod stats;

pub use corpus::{InstructionSample, NlSegment, SegmentKind, TaskSet, TaskSpec};
pub use perturb::{MethodId, PerturbParams, PerturbationTrace, Perturber};
pub use rng::SplitMix64;

/// Hex-encoded SHA-256 of `bytes`; used for dataset checksums.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
