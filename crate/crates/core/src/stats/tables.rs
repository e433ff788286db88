//! Relative-degradation comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{relative_degradation, RdInput};
use super::StatsError;
use crate::harness::RunReport;

/// Test-set label that marks the unperturbed benchmark.
pub const CLEAN_TEST_SET: &str = "clean";

/// pass@1 of one model variant on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    /// Base model family, e.g. "starcoderbase-1b".
    pub model: String,
    /// Which checkpoint of that family: base, fine-tuned on clean data, ...
    pub variant: String,
    /// [`CLEAN_TEST_SET`] or the perturbed test-set label.
    pub test_set: String,
    /// Fraction or percentage; RD is scale-free as long as a model's
    /// entries share one scale.
    pub pass_at_1: f64,
}

impl ScoreEntry {
    pub fn from_report(report: &RunReport, model: &str, variant: &str, test_set: &str) -> Self {
        Self { model: model.into(), variant: variant.into(), test_set: test_set.into(), pass_at_1: report.pass_at_1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RdColumn {
    pub variant: String,
    pub test_set: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub model: String,
    /// RD in percent, one per column; `None` where the score is missing.
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdTable {
    pub columns: Vec<RdColumn>,
    pub rows: Vec<RdRow>,
}

/// Rows per model, one column per (variant, perturbed test set), in order
/// of first appearance.
pub fn rd_table(entries: &[ScoreEntry]) -> Result<RdTable, StatsError> {
    let mut models: Vec<&str> = Vec::new();
    let mut columns: Vec<RdColumn> = Vec::new();
    for e in entries {
        if !models.contains(&e.model.as_str()) {
            models.push(&e.model);
        }
        if e.test_set != CLEAN_TEST_SET {
            let col = RdColumn { variant: e.variant.clone(), test_set: e.test_set.clone() };
            if !columns.contains(&col) {
                columns.push(col);
            }
        }
    }
    let find = |model: &str, variant: &str, test_set: &str| {
        entries.iter().find(|e| e.model == model && e.variant == variant && e.test_set == test_set).map(|e| e.pass_at_1)
    };

    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let mut cells = Vec::with_capacity(columns.len());
        let mut any = false;
        for col in &columns {
            let Some(perturbed) = find(model, &col.variant, &col.test_set) else {
                cells.push(None);
                continue;
            };
            let original = find(model, &col.variant, CLEAN_TEST_SET).ok_or_else(|| StatsError::MissingUnperturbed {
                model: model.to_string(),
                variant: col.variant.clone(),
            })?;
            let rd = relative_degradation(RdInput { pass_original: original, pass_perturbed: perturbed })?;
            cells.push(Some(rd * 100.0));
            any = true;
        }
        if !any {
            return Err(StatsError::MissingPerturbed { model: model.to_string() });
        }
        rows.push(RdRow { model: model.to_string(), cells });
    }
    Ok(RdTable { columns, rows })
}

impl RdTable {
    pub fn column_index(&self, variant: &str, test_set: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.variant == variant && c.test_set == test_set)
    }

    pub fn cell(&self, model: &str, variant: &str, test_set: &str) -> Option<f64> {
        let col = self.column_index(variant, test_set)?;
        self.rows.iter().find(|r| r.model == model)?.cells[col]
    }

    /// Per-model RD pairs of two columns, for a paired test. Models missing
    /// either cell are skipped.
    pub fn paired(&self, a: usize, b: usize) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| Some((r.cells.get(a).copied()??, r.cells.get(b).copied()??))).collect()
    }

    /// Aligned text, RD in percent with two decimals.
    pub fn render(&self) -> String {
        let headers: Vec<String> =
            self.columns.iter().map(|c| format!("RD_{}[{}](%)", c.variant, c.test_set)).collect();
        let model_w = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = write!(out, "{:<model_w$}", "model");
        for h in &headers {
            let _ = write!(out, "  {h:>10}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<model_w$}", row.model);
            for (cell, h) in row.cells.iter().zip(&headers) {
                let w = h.len().max(10);
                match cell {
                    Some(v) => {
                        let _ = write!(out, "  {:>w$}", format!("{v:.2}"));
                    }
                    None => {
                        let _ = write!(out, "  {:>w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
