use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{MethodId, PerturbError};

/// One replacement, in byte offsets of the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub before: String,
    pub after: String,
}

impl Edit {
    pub fn new(text: &str, range: Range<usize>, after: impl Into<String>) -> Self {
        Self { before: text[range.clone()].to_string(), start: range.start, end: range.end, after: after.into() }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Applies non-overlapping edits to `original`. Edits may come in any
/// order; they are sorted by start offset first.
pub fn apply_edits(original: &str, edits: &[Edit]) -> Result<String, PerturbError> {
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut out = String::with_capacity(original.len() + 16);
    let mut cursor = 0;
    for e in sorted {
        if e.start < cursor || e.end > original.len() || e.start > e.end {
            return Err(PerturbError::TraceMismatch { offset: e.start });
        }
        match original.get(e.start..e.end) {
            Some(s) if s == e.before => {}
            _ => return Err(PerturbError::TraceMismatch { offset: e.start }),
        }
        out.push_str(&original[cursor..e.start]);
        out.push_str(&e.after);
        cursor = e.end;
    }
    out.push_str(&original[cursor..]);
    Ok(out)
}

/// Reproducibility record of one perturbation call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationTrace {
    /// Method as requested (may be an aggregate).
    pub method: MethodId,
    /// Concrete operator that ran; `None` when nothing was attempted.
    pub applied: Option<MethodId>,
    pub seed: u64,
    /// Name of the field the edits refer to ("instruction" or "prompt"),
    /// empty for bare text.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub field: String,
    pub edits: Vec<Edit>,
    /// Pivot metadata reported by a translation provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot: Option<String>,
}

impl PerturbationTrace {
    pub fn noop(method: MethodId, seed: u64) -> Self {
        Self { method, applied: None, seed, field: String::new(), edits: Vec::new(), pivot: None }
    }

    /// True when the call left the text unchanged.
    pub fn is_noop(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn replay(&self, original: &str) -> Result<String, PerturbError> {
        apply_edits(original, &self.edits)
    }
}
