//! Corpus and task-set formats, and natural-language segmentation.
//!
//! Two on-disk shapes are supported:
//!
//! - instruction corpora: UTF-8, one JSON object per line with the keys
//!   `"instruction"` and `"output"` (written compactly in that key order);
//! - task sets: a UTF-8 JSON array of objects with the keys `"name"`,
//!   `"language"`, `"prompt"`, `"tests"`, `"completions"`, `"stop_tokens"`,
//!   written in that key order with two-space indentation and a trailing
//!   newline.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field \"{field}\"")]
    MissingLineField { line: usize, field: &'static str },
    #[error("line {line}: instruction is empty")]
    EmptyInstruction { line: usize },
    #[error("malformed task document: {0}")]
    MalformedTaskDocument(String),
    #[error("task {index}: missing field \"{field}\"")]
    MissingTaskField { index: usize, field: &'static str },
    #[error("task {name}: tests are empty")]
    EmptyTests { name: String },
    #[error("duplicate task names: {}", .0.join(", "))]
    DuplicateNames(Vec<String>),
    #[error("task set {benchmark}: expected {expected} tasks, found {found}")]
    CountMismatch { benchmark: String, expected: usize, found: usize },
    #[error("unterminated docstring delimiter at byte {offset}")]
    UnterminatedDocstring { offset: usize },
}

/// One instruction/response training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub instruction: String,
    pub output: String,
}

/// One executable benchmark problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub language: String,
    pub prompt: String,
    pub tests: String,
    #[serde(default)]
    pub completions: Vec<String>,
    #[serde(default)]
    pub stop_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    pub benchmark_id: String,
    pub tasks: Vec<TaskSpec>,
    pub expected_count: Option<usize>,
}

/// Task counts of the benchmark subsets used in the robustness study.
pub fn known_task_count(benchmark_id: &str) -> Option<usize> {
    match benchmark_id.to_ascii_lowercase().as_str() {
        "humaneval" => Some(161),
        "mbpp" => Some(427),
        _ => None,
    }
}

impl TaskSet {
    pub fn new(benchmark_id: impl Into<String>, tasks: Vec<TaskSpec>) -> Self {
        Self { benchmark_id: benchmark_id.into(), tasks, expected_count: None }
    }

    /// Pins the expected task count and checks it.
    pub fn with_expected_count(mut self, expected: usize) -> Result<Self, CorpusError> {
        self.expected_count = Some(expected);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if let Some(expected) = self.expected_count {
            if expected != self.tasks.len() {
                return Err(CorpusError::CountMismatch {
                    benchmark: self.benchmark_id.clone(),
                    expected,
                    found: self.tasks.len(),
                });
            }
        }
        check_unique_names(&self.tasks)?;
        for task in &self.tasks {
            if task.tests.is_empty() {
                return Err(CorpusError::EmptyTests { name: task.name.clone() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

fn check_unique_names(tasks: &[TaskSpec]) -> Result<(), CorpusError> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tasks {
        *seen.entry(t.name.as_str()).or_default() += 1;
    }
    let dups: Vec<String> = seen.into_iter().filter(|(_, c)| *c > 1).map(|(n, _)| n.to_string()).collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::DuplicateNames(dups))
    }
}

pub fn parse_instruction_corpus(bytes: &[u8]) -> Result<Vec<InstructionSample>, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::MalformedLine {
        line: line_of_offset(bytes, e.valid_up_to()),
        reason: "invalid UTF-8".into(),
    })?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| CorpusError::MalformedLine { line: line_no, reason: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::MalformedLine { line: line_no, reason: "record is not an object".into() })?;
        let field = |name: &'static str| -> Result<String, CorpusError> {
            match obj.get(name) {
                None => Err(CorpusError::MissingLineField { line: line_no, field: name }),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(CorpusError::MalformedLine {
                    line: line_no,
                    reason: format!("field \"{name}\" is not a string"),
                }),
            }
        };
        let instruction = field("instruction")?;
        let output = field("output")?;
        if instruction.is_empty() {
            return Err(CorpusError::EmptyInstruction { line: line_no });
        }
        samples.push(InstructionSample { instruction, output });
    }
    Ok(samples)
}

fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|b| **b == b'\n').count() + 1
}

pub fn write_instruction_corpus(samples: &[InstructionSample]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("string fields always serialize");
        out.push(b'\n');
    }
    out
}

pub fn parse_task_set(bytes: &[u8], benchmark_id: &str) -> Result<TaskSet, CorpusError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CorpusError::MalformedTaskDocument(e.to_string()))?;
    let items =
        value.as_array().ok_or_else(|| CorpusError::MalformedTaskDocument("top level is not an array".into()))?;
    let mut tasks = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| CorpusError::MalformedTaskDocument(format!("task {index} is not an object")))?;
        for field in ["name", "language", "prompt", "tests"] {
            if !obj.contains_key(field) {
                return Err(CorpusError::MissingTaskField { index, field });
            }
        }
        let task: TaskSpec = serde_json::from_value(item.clone())
            .map_err(|e| CorpusError::MalformedTaskDocument(format!("task {index}: {e}")))?;
        tasks.push(task);
    }
    let set = TaskSet::new(benchmark_id, tasks);
    set.validate()?;
    Ok(set)
}

pub fn write_task_set(set: &TaskSet) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&set.tasks).expect("string fields always serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    DocstringProse,
    InstructionProse,
}

/// Which field a text came from; selects the segmentation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextKind {
    Prompt,
    Instruction,
}

/// A perturbable region of a text.
///
/// Bytes in `protected` (doctest prompts, their continuation and expected
/// output lines, and the blank lines between consecutive examples) must be
/// left untouched, as must every byte outside `span`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlSegment {
    pub span: Range<usize>,
    pub kind: SegmentKind,
    pub protected: Vec<Range<usize>>,
}

impl NlSegment {
    /// `span` minus the protected subranges, in order, without empty ranges.
    pub fn editable_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut cursor = self.span.start;
        for p in &self.protected {
            if p.start > cursor {
                out.push(cursor..p.start);
            }
            cursor = cursor.max(p.end);
        }
        if cursor < self.span.end {
            out.push(cursor..self.span.end);
        }
        out
    }
}

/// Editable byte ranges of a whole text under the segmentation rule for `kind`.
pub fn editable_ranges(text: &str, kind: TextKind) -> Result<Vec<Range<usize>>, CorpusError> {
    Ok(segment_natural_language(text, kind)?.iter().flat_map(NlSegment::editable_ranges).collect())
}

pub fn segment_natural_language(text: &str, kind: TextKind) -> Result<Vec<NlSegment>, CorpusError> {
    match kind {
        TextKind::Instruction => {
            Ok(vec![NlSegment { span: 0..text.len(), kind: SegmentKind::InstructionProse, protected: Vec::new() }])
        }
        TextKind::Prompt => segment_docstrings(text),
    }
}

fn segment_docstrings(text: &str) -> Result<Vec<NlSegment>, CorpusError> {
    let mut segments = Vec::new();
    let mut pos = 0;
    while let Some((open, delim)) = find_delimiter(text, pos) {
        let body_start = open + 3;
        let close = text[body_start..]
            .find(delim)
            .map(|i| body_start + i)
            .ok_or(CorpusError::UnterminatedDocstring { offset: open })?;
        let span = body_start..close;
        segments.push(NlSegment {
            protected: doctest_ranges(text, span.clone()),
            span,
            kind: SegmentKind::DocstringProse,
        });
        pos = close + 3;
    }
    Ok(segments)
}

fn find_delimiter(text: &str, from: usize) -> Option<(usize, &'static str)> {
    let dq = text[from..].find("\"\"\"").map(|i| (from + i, "\"\"\""));
    let sq = text[from..].find("'''").map(|i| (from + i, "'''"));
    match (dq, sq) {
        (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
        (a, b) => a.or(b),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LineClass {
    Prompt,
    Continuation,
    Output,
    Blank,
    Prose,
}

/// Protected ranges inside a docstring body.
///
/// A line whose first non-blank characters are `>>>` starts an example;
/// following `...` lines continue it, and the lines after that up to the
/// next blank line (or next `>>>` line) are its expected output. Blank lines
/// between two examples are protected as well. Ranges cover whole lines
/// including their newline and are merged when adjacent.
fn doctest_ranges(text: &str, span: Range<usize>) -> Vec<Range<usize>> {
    let body = &text[span.clone()];
    let mut lines: Vec<(Range<usize>, LineClass)> = Vec::new();
    let mut in_example = false;
    let mut offset = span.start;
    for raw in body.split_inclusive('\n') {
        let range = offset..offset + raw.len();
        offset += raw.len();
        let trimmed = raw.trim_start();
        let class = if trimmed.starts_with(">>>") {
            in_example = true;
            LineClass::Prompt
        } else if trimmed.trim_end().is_empty() {
            in_example = false;
            LineClass::Blank
        } else if in_example && trimmed.starts_with("...") && is_after_prompt(&lines) {
            LineClass::Continuation
        } else if in_example {
            LineClass::Output
        } else {
            LineClass::Prose
        };
        lines.push((range, class));
    }

    let mut protect = vec![false; lines.len()];
    for (i, (_, class)) in lines.iter().enumerate() {
        match class {
            LineClass::Prompt | LineClass::Continuation | LineClass::Output => protect[i] = true,
            LineClass::Blank => {
                let prev = lines[..i].iter().rev().find(|(_, c)| *c != LineClass::Blank);
                let next = lines[i + 1..].iter().find(|(_, c)| *c != LineClass::Blank);
                let between =
                    matches!(prev, Some((_, LineClass::Prompt | LineClass::Continuation | LineClass::Output)))
                        && matches!(next, Some((_, LineClass::Prompt)));
                protect[i] = between;
            }
            LineClass::Prose => {}
        }
    }

    let mut out: Vec<Range<usize>> = Vec::new();
    for ((range, _), keep) in lines.into_iter().zip(protect) {
        if !keep {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.end == range.start => last.end = range.end,
            _ => out.push(range),
        }
    }
    out
}

fn is_after_prompt(lines: &[(Range<usize>, LineClass)]) -> bool {
    matches!(lines.last(), Some((_, LineClass::Prompt | LineClass::Continuation)))
}
