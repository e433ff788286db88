//! Review sample sizes and lint diagnostic aggregation.
//!
//! Diagnostics are classified into six categories (F, E, W, R, C, I), each
//! with a fixed exit bit and a list of editorial severity tiers. Tiers for
//! individual codes come from `data/lint_tiers.tsv`; unlisted codes fall
//! into the lowest tier of their category.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::stats::normal::two_sided_quantile;

const BUNDLED_TIERS: &str = include_str!("../data/lint_tiers.tsv");

/// Label of the bucket for records that could not be parsed.
pub const MALFORMED: &str = "malformed";

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("invalid sample-size query: {0}")]
    InvalidQuery(String),
    #[error("malformed diagnostic code {0:?}")]
    MalformedCode(String),
    #[error("tier table line {line}: {reason}")]
    TierTable { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeQuery {
    /// `None` for an unbounded population.
    pub population: Option<u64>,
    pub confidence: f64,
    pub margin: f64,
    pub proportion: f64,
}

impl Default for SampleSizeQuery {
    fn default() -> Self {
        Self { population: None, confidence: 0.95, margin: 0.05, proportion: 0.5 }
    }
}

impl SampleSizeQuery {
    pub fn finite(population: u64) -> Self {
        Self { population: Some(population), ..Self::default() }
    }
}

/// Cochran's sample size with finite-population correction, rounded up.
pub fn required_sample_size(q: &SampleSizeQuery) -> Result<u64, QualityError> {
    let open = |x: f64| x > 0.0 && x < 1.0;
    if !open(q.confidence) || !open(q.margin) || !(0.0..=1.0).contains(&q.proportion) {
        return Err(QualityError::InvalidQuery(format!("{q:?}")));
    }
    if q.population == Some(0) {
        return Err(QualityError::InvalidQuery("population must be positive".into()));
    }
    let z = two_sided_quantile(q.confidence);
    let n0 = z * z * q.proportion * (1.0 - q.proportion) / (q.margin * q.margin);
    let n = match q.population {
        Some(pop) => n0 / (1.0 + (n0 - 1.0) / pop as f64),
        None => n0,
    };
    Ok(n.ceil() as u64)
}

/// Seeded uniform draw of `n` distinct indices out of `population`,
/// returned in ascending order.
pub fn draw_review_sample(population: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut idx = SplitMix64::new(seed).permutation_prefix(population, n.min(population));
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    F,
    E,
    W,
    R,
    C,
    I,
}

impl Category {
    pub const ALL: [Category; 6] = [Category::F, Category::E, Category::W, Category::R, Category::C, Category::I];

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'F' => Self::F,
            'E' => Self::E,
            'W' => Self::W,
            'R' => Self::R,
            'C' => Self::C,
            'I' => Self::I,
            _ => return None,
        })
    }

    /// Exit-status bit; informational messages have none.
    pub fn exit_bit(self) -> Option<u8> {
        match self {
            Self::F => Some(1),
            Self::E => Some(2),
            Self::W => Some(4),
            Self::R => Some(8),
            Self::C => Some(16),
            Self::I => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::F => "Fatal",
            Self::E => "Error",
            Self::W => "Warning",
            Self::R => "Refactor",
            Self::C => "Convention",
            Self::I => "Information",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityEntry {
    pub code: String,
    pub category: Category,
    pub exit_bit: Option<u8>,
    pub tier: String,
}

/// Tier names per category (most severe first) and per-code assignments.
#[derive(Debug, Clone)]
pub struct TierTable {
    tiers: BTreeMap<Category, Vec<String>>,
    codes: BTreeMap<String, String>,
}

impl TierTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TIERS).expect("bundled tier table is valid")
    }

    pub fn parse(src: &str) -> Result<Self, QualityError> {
        let mut tiers: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        let mut codes = BTreeMap::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let err = |reason: &str| QualityError::TierTable { line, reason: reason.into() };
            let mut fields = raw.split('\t');
            let cat = fields
                .next()
                .and_then(|c| c.chars().next().filter(|_| c.len() == 1))
                .and_then(Category::from_letter)
                .ok_or_else(|| err("bad category"))?;
            let tier = fields.next().map(str::trim).filter(|t| !t.is_empty()).ok_or_else(|| err("missing tier"))?;
            tiers.entry(cat).or_default().push(tier.to_string());
            for code in fields.next().unwrap_or("").split_whitespace() {
                if parse_code(code)? != cat {
                    return Err(err("code does not match its category"));
                }
                codes.insert(code.to_string(), tier.to_string());
            }
        }
        if let Some(c) = Category::ALL.iter().find(|c| !tiers.contains_key(c)) {
            return Err(QualityError::TierTable { line: 0, reason: format!("no tier for category {c}") });
        }
        Ok(Self { tiers, codes })
    }

    pub fn tiers(&self, category: Category) -> &[String] {
        &self.tiers[&category]
    }

    pub fn classify(&self, code: &str) -> Result<SeverityEntry, QualityError> {
        let category = parse_code(code)?;
        let tier = match self.codes.get(code) {
            Some(t) => t.clone(),
            None => self.tiers[&category].last().cloned().unwrap_or_default(),
        };
        Ok(SeverityEntry { code: code.to_string(), category, exit_bit: category.exit_bit(), tier })
    }
}

fn parse_code(code: &str) -> Result<Category, QualityError> {
    let mut chars = code.chars();
    let cat = chars.next().and_then(Category::from_letter);
    let digits = chars.as_str();
    match cat {
        Some(c) if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => Ok(c),
        _ => Err(QualityError::MalformedCode(code.to_string())),
    }
}

/// Classifies with the bundled tier table.
pub fn classify_diagnostic(code: &str) -> Result<SeverityEntry, QualityError> {
    TierTable::bundled().classify(code)
}

/// One linter message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default)]
    pub path: String,
    #[serde(alias = "message-id", alias = "message_id")]
    pub code: String,
    #[serde(default)]
    pub message: String,
}

/// Splits a linter output into records. Accepts a JSON array of records or
/// one record per line; anything that does not parse yields `Err(raw)`.
pub fn parse_diagnostics(src: &str) -> Vec<Result<Diagnostic, String>> {
    let trimmed = src.trim_start();
    if trimmed.starts_with('[') {
        if let Ok(items) = serde_json::from_str::<Vec<serde_json::Value>>(trimmed) {
            return items
                .into_iter()
                .map(|v| serde_json::from_value::<Diagnostic>(v.clone()).map_err(|_| v.to_string()))
                .collect();
        }
    }
    src.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Diagnostic>(l).map_err(|_| l.to_string()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCount {
    pub code: String,
    pub count: u64,
}

/// Counts for one run label, codes in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub label: String,
    pub codes: Vec<CodeCount>,
    pub malformed: u64,
}

impl LabelCounts {
    pub fn get(&self, code: &str) -> u64 {
        self.codes.iter().find(|c| c.code == code).map_or(0, |c| c.count)
    }

    fn add(&mut self, code: &str, n: u64) {
        match self.codes.iter_mut().find(|c| c.code == code) {
            Some(c) => c.count += n,
            None => self.codes.push(CodeCount { code: code.to_string(), count: n }),
        }
    }

    pub fn total(&self) -> u64 {
        self.codes.iter().map(|c| c.count).sum::<u64>() + self.malformed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollupEntry {
    pub label: String,
    pub category: Category,
    pub tier: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningCounts {
    pub runs: Vec<LabelCounts>,
}

impl WarningCounts {
    pub fn run(&self, label: &str) -> Option<&LabelCounts> {
        self.runs.iter().find(|r| r.label == label)
    }

    fn run_mut(&mut self, label: &str) -> &mut LabelCounts {
        if let Some(i) = self.runs.iter().position(|r| r.label == label) {
            return &mut self.runs[i];
        }
        self.runs.push(LabelCounts { label: label.to_string(), ..Default::default() });
        self.runs.last_mut().unwrap()
    }

    /// Adds one stream of records under `label`.
    pub fn consume(&mut self, label: &str, records: impl IntoIterator<Item = Result<Diagnostic, String>>) {
        let run = self.run_mut(label);
        for r in records {
            match r {
                Ok(d) if parse_code(&d.code).is_ok() => run.add(&d.code, 1),
                _ => run.malformed += 1,
            }
        }
    }

    /// Commutative merge of counts; labels new to `self` are appended.
    pub fn merge(&mut self, other: &WarningCounts) {
        for r in &other.runs {
            let mine = self.run_mut(&r.label);
            for c in &r.codes {
                mine.add(&c.code, c.count);
            }
            mine.malformed += r.malformed;
        }
    }

    /// Every code seen in any run, in order of first appearance.
    pub fn codes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.runs {
            for c in &r.codes {
                if !out.contains(&c.code.as_str()) {
                    out.push(&c.code);
                }
            }
        }
        out
    }

    pub fn rollup(&self, tiers: &TierTable) -> Vec<RollupEntry> {
        let mut out = Vec::new();
        for r in &self.runs {
            for cat in Category::ALL {
                for tier in tiers.tiers(cat) {
                    let count = r
                        .codes
                        .iter()
                        .filter(|c| tiers.classify(&c.code).is_ok_and(|e| e.category == cat && &e.tier == tier))
                        .map(|c| c.count)
                        .sum();
                    if count > 0 {
                        out.push(RollupEntry { label: r.label.clone(), category: cat, tier: tier.clone(), count });
                    }
                }
            }
        }
        out
    }

    /// OR of the exit bits of every category present in `label`'s run.
    pub fn exit_bits(&self, label: &str) -> u8 {
        self.run(label).map_or(0, |r| bits_of(r.codes.iter().filter(|c| c.count > 0).map(|c| c.code.as_str())))
    }

    /// OR over all runs.
    pub fn combined_exit_bits(&self) -> u8 {
        self.runs.iter().fold(0, |acc, r| acc | self.exit_bits(&r.label))
    }

    /// Aligned text table: one row per code, one column per run.
    pub fn render(&self) -> String {
        let codes = self.codes();
        let widths: Vec<usize> = self.runs.iter().map(|r| r.label.len().max(5)).collect();
        let mut out = String::from("code      ");
        for (r, w) in self.runs.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", r.label);
        }
        out.push('\n');
        let mut row = |name: &str, f: &dyn Fn(&LabelCounts) -> u64| {
            let _ = write!(out, "{name:<10}");
            for (r, w) in self.runs.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", f(r));
            }
            out.push('\n');
        };
        for code in codes {
            row(code, &|r| r.get(code));
        }
        if self.runs.iter().any(|r| r.malformed > 0) {
            row(MALFORMED, &|r| r.malformed);
        }
        out
    }
}

fn bits_of<'a>(codes: impl Iterator<Item = &'a str>) -> u8 {
    codes.filter_map(|c| parse_code(c).ok()).filter_map(Category::exit_bit).fold(0, |acc, b| acc | b)
}

/// Per-label streams, one label per stream.
pub fn aggregate_warnings<'a>(streams: impl IntoIterator<Item = (&'a str, &'a str)>) -> WarningCounts {
    let mut counts = WarningCounts::default();
    for (label, src) in streams {
        counts.consume(label, parse_diagnostics(src));
    }
    counts
}

/// Reads every `*.json` / `*.jsonl` file in `dir`, labelled by file stem,
/// in file-name order.
pub fn aggregate_dir(dir: &Path) -> Result<WarningCounts, QualityError> {
    let io = |e| QualityError::Io { path: dir.display().to_string(), source: e };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
        .collect();
    files.sort();
    let mut counts = WarningCounts::default();
    for path in files {
        let src = std::fs::read_to_string(&path)
            .map_err(|e| QualityError::Io { path: path.display().to_string(), source: e })?;
        let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        counts.consume(&label, parse_diagnostics(&src));
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sizes() {
        assert_eq!(required_sample_size(&SampleSizeQuery::finite(31_878)).unwrap(), 380);
        assert_eq!(required_sample_size(&SampleSizeQuery::finite(84_546)).unwrap(), 383);
        assert_eq!(required_sample_size(&SampleSizeQuery::default()).unwrap(), 385);
        assert_eq!(required_sample_size(&SampleSizeQuery::finite(1)).unwrap(), 1);
        assert!(required_sample_size(&SampleSizeQuery { margin: 0.0, ..Default::default() }).is_err());
        assert!(required_sample_size(&SampleSizeQuery::finite(0)).is_err());
    }

    #[test]
    fn sample_size_monotone_and_converges() {
        let mut prev = 0;
        for pop in (1..200_000u64).step_by(997) {
            let n = required_sample_size(&SampleSizeQuery::finite(pop)).unwrap();
            assert!(n >= prev && n <= pop);
            prev = n;
        }
        assert_eq!(required_sample_size(&SampleSizeQuery::finite(u64::MAX)).unwrap(), 385);
    }

    #[test]
    fn classification() {
        let e = classify_diagnostic("E0001").unwrap();
        assert_eq!((e.category, e.exit_bit, e.tier.as_str()), (Category::E, Some(2), "Tier 1 (blockers)"));
        let w = classify_diagnostic("W0621").unwrap();
        assert_eq!((w.category, w.exit_bit, w.tier.as_str()), (Category::W, Some(4), "Tier 2 (moderate)"));
        let c = classify_diagnostic("C0303").unwrap();
        assert_eq!((c.category, c.exit_bit, c.tier.as_str()), (Category::C, Some(16), "Low"));
        assert_eq!(classify_diagnostic("W9999").unwrap().tier, "Tier 3 (low)");
        assert_eq!(classify_diagnostic("I0011").unwrap().exit_bit, None);
        for bad in ["", "E", "X0001", "e0001", "E00a1", "0001"] {
            assert!(classify_diagnostic(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_bits_and_malformed() {
        let stream = r#"{"path":"a.py","code":"E0001","message":"x"}
{"path":"a.py","message-id":"C0114","message":"y"}
not json
{"path":"a.py","code":"??","message":"z"}"#;
        let counts = aggregate_warnings([("run", stream)]);
        let run = counts.run("run").unwrap();
        assert_eq!(run.malformed, 2);
        assert_eq!(run.total(), 4);
        assert_eq!(counts.exit_bits("run"), 18);
        assert_eq!(aggregate_warnings([("empty", "")]).run("empty").unwrap().total(), 0);
    }

    #[test]
    fn pylint_json_array() {
        let src = r#"[{"type":"convention","path":"m.py","message-id":"C0303","message":"t"},
                      {"type":"warning","path":"m.py","message-id":"W0613","message":"u"}]"#;
        let counts = aggregate_warnings([("x", src)]);
        assert_eq!(counts.run("x").unwrap().get("C0303"), 1);
        assert_eq!(counts.combined_exit_bits(), 20);
        let rollup = counts.rollup(&TierTable::bundled());
        assert_eq!(rollup.len(), 2);
    }

    #[test]
    fn merge_is_commutative() {
        let a = aggregate_warnings([("l", "{\"code\":\"C0103\"}\n{\"code\":\"E0001\"}")]);
        let b = aggregate_warnings([("l", "{\"code\":\"E0001\"}\nbad")]);
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        for code in ["C0103", "E0001"] {
            assert_eq!(ab.run("l").unwrap().get(code), ba.run("l").unwrap().get(code));
        }
        assert_eq!(ab.run("l").unwrap().total(), 4);
    }

    #[test]
    fn review_sample_is_seeded() {
        let a = draw_review_sample(31_878, 380, 7);
        assert_eq!(a.len(), 380);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, draw_review_sample(31_878, 380, 7));
    }
}
