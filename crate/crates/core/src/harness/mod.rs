//! Completion, stop-token truncation, sandboxed execution and pass@1.
//!
//! A run asks a [`CompletionProvider`] for `n` completions per task,
//! truncates each at the task's stop tokens, assembles
//! `prompt + completion + "\n" + tests + "\n" + entry` and executes it with
//! [`run_program`]. Tasks are spread over a fixed pool of worker threads;
//! results are sorted by task name, so reports do not depend on the pool
//! size.

mod provider;
mod sandbox;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, TaskSet, TaskSpec};
use crate::stats::pass_at_k;

pub use provider::{
    parse_choices, CompletionProvider, EchoProvider, HttpProvider, ProviderConfig, ProviderError, ReplayProvider,
};
pub use sandbox::{run_program, Execution, LanguageCommand, SandboxConfig};

/// Stop tokens appended to every task's own list.
pub const EXTRA_STOP_TOKENS: [&str; 4] = ["\ndef", "\n#", "\nif", "\nclass"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no sandbox command for language {0:?}")]
    MissingCommand(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot start {0}")]
    Spawn(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Timeout,
    Crash,
    ProviderError,
}

/// Task stop tokens followed by [`EXTRA_STOP_TOKENS`], first occurrence
/// kept.
pub fn normalize_stop_tokens(task: &TaskSpec) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(task.stop_tokens.len() + 4);
    for t in task.stop_tokens.iter().map(String::as_str).chain(EXTRA_STOP_TOKENS) {
        if !t.is_empty() && !out.iter().any(|o| o == t) {
            out.push(t.to_string());
        }
    }
    out
}

/// Cuts `completion` at the earliest position where any stop token starts.
pub fn truncate_at_stop<'a>(completion: &'a str, stop_tokens: &[String]) -> &'a str {
    let cut = stop_tokens
        .iter()
        .filter(|t| !t.is_empty())
        .filter_map(|t| completion.find(t.as_str()))
        .min()
        .unwrap_or(completion.len());
    &completion[..cut]
}

/// Fetches `n` completions and truncates each one.
pub fn complete(
    provider: &dyn CompletionProvider,
    task: &TaskSpec,
    stop_tokens: &[String],
    n: usize,
) -> Result<Vec<String>, ProviderError> {
    let raw = provider.fetch(task, &task.prompt, stop_tokens, n)?;
    Ok(raw.iter().map(|c| truncate_at_stop(c, stop_tokens).to_string()).collect())
}

/// The program handed to the interpreter.
pub fn assemble_program(task: &TaskSpec, completion: &str, entry: &str) -> String {
    let mut p = String::with_capacity(task.prompt.len() + completion.len() + task.tests.len() + entry.len() + 3);
    p.push_str(&task.prompt);
    p.push_str(completion);
    p.push('\n');
    p.push_str(&task.tests);
    p.push('\n');
    p.push_str(entry);
    p.push('\n');
    p
}

/// Verdict of one completion. Durations are kept out of serialized
/// reports (see [`RunReport::timings`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: String,
    pub sample_index: usize,
    pub completion: String,
    pub verdict: Verdict,
    pub detail: String,
    #[serde(skip)]
    pub duration_ms: u64,
}

pub fn execute_candidate(
    task: &TaskSpec,
    completion: &str,
    sandbox: &SandboxConfig,
) -> Result<EvalResult, HarnessError> {
    let cmd = sandbox.command_for(&task.language)?;
    let program = assemble_program(task, completion, &cmd.entry);
    let exec = run_program(&program, &task.language, sandbox)?;
    Ok(EvalResult {
        task: task.name.clone(),
        sample_index: 0,
        completion: completion.to_string(),
        verdict: exec.verdict,
        detail: exec.detail,
        duration_ms: exec.duration.as_millis() as u64,
    })
}

/// Settings recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub provider: String,
    pub provider_config: ProviderConfig,
    pub sandbox: SandboxConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest_id: String,
    pub model: String,
    pub benchmark_id: String,
    pub tasks: usize,
    /// Tasks whose samples all passed.
    pub passed: usize,
    /// Mean over tasks of the unbiased pass@1 estimate.
    pub pass_at_1: f64,
    /// `pass_at_1` in percent, one decimal.
    pub pass_at_1_percent: f64,
    pub config: ConfigSnapshot,
    pub results: Vec<EvalResult>,
    /// Wall-clock data; written to a separate file so that the report
    /// itself is reproducible.
    #[serde(skip)]
    pub timings: Option<RunTimings>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTimings {
    pub started_unix_secs: u64,
    pub wall_ms: u64,
    pub parallelism: usize,
    pub per_result_ms: Vec<(String, usize, u64)>,
}

impl RunReport {
    /// Canonical JSON (no timings), newline-terminated.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, HarnessError> {
        serde_json::from_slice(bytes).map_err(|e| HarnessError::Config(format!("report: {e}")))
    }

    /// Writes `report.json` and, when present, `timings.json` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()).map_err(io)?;
        if let Some(t) = &self.timings {
            let mut bytes = serde_json::to_vec_pretty(t).expect("timings serialize");
            bytes.push(b'\n');
            std::fs::write(dir.join("timings.json"), bytes).map_err(io)?;
        }
        Ok(path)
    }
}

/// What to evaluate and how.
pub struct RunSpec<'a> {
    pub manifest_id: &'a str,
    pub provider: &'a dyn CompletionProvider,
    pub provider_config: &'a ProviderConfig,
    pub sandbox: &'a SandboxConfig,
    pub parallelism: usize,
}

/// Evaluates every task. Failures of single tasks (including provider
/// errors) become verdicts; only configuration faults abort the run, and
/// they are detected before any task starts.
pub fn run_benchmark(set: &TaskSet, spec: &RunSpec<'_>) -> Result<RunReport, HarnessError> {
    set.validate()?;
    spec.provider_config.validate()?;
    spec.sandbox.validate()?;
    for t in &set.tasks {
        spec.sandbox.command_for(&t.language)?;
    }
    let n = spec.provider_config.samples_per_task;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();

    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<EvalResult>> = Mutex::new(Vec::with_capacity(set.len() * n));
    let fatal: Mutex<Option<HarnessError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..spec.parallelism.max(1).min(set.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = set.tasks.get(i) else { break };
                match evaluate_task(task, spec, n) {
                    Ok(rs) => collected.lock().unwrap().extend(rs),
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = collected.into_inner().unwrap();
    results.sort_by(|a, b| (&a.task, a.sample_index).cmp(&(&b.task, b.sample_index)));

    let mut passed = 0;
    let mut sum = 0.0;
    for task in &set.tasks {
        let c = results.iter().filter(|r| r.task == task.name && r.verdict == Verdict::Pass).count();
        if c == n {
            passed += 1;
        }
        sum += pass_at_k(n as u64, c as u64, 1).expect("1 <= n and c <= n");
    }
    let pass_at_1 = if set.is_empty() { 0.0 } else { sum / set.len() as f64 };
    let timings = RunTimings {
        started_unix_secs: started,
        wall_ms: clock.elapsed().as_millis() as u64,
        parallelism: spec.parallelism.max(1),
        per_result_ms: results.iter().map(|r| (r.task.clone(), r.sample_index, r.duration_ms)).collect(),
    };
    Ok(RunReport {
        manifest_id: spec.manifest_id.to_string(),
        model: spec.provider_config.model.clone(),
        benchmark_id: set.benchmark_id.clone(),
        tasks: set.len(),
        passed,
        pass_at_1,
        pass_at_1_percent: (pass_at_1 * 1000.0).round() / 10.0,
        config: ConfigSnapshot {
            provider: spec.provider.name().to_string(),
            provider_config: spec.provider_config.clone(),
            sandbox: spec.sandbox.clone(),
        },
        results,
        timings: Some(timings),
    })
}

fn evaluate_task(task: &TaskSpec, spec: &RunSpec<'_>, n: usize) -> Result<Vec<EvalResult>, HarnessError> {
    let stops = normalize_stop_tokens(task);
    match complete(spec.provider, task, &stops, n) {
        Ok(completions) => completions
            .iter()
            .take(n)
            .enumerate()
            .map(|(i, c)| {
                let mut r = execute_candidate(task, c, spec.sandbox)?;
                r.sample_index = i;
                Ok(r)
            })
            .chain((completions.len()..n).map(|i| Ok(provider_error(task, i, "provider returned too few completions"))))
            .collect(),
        Err(e) => Ok((0..n).map(|i| provider_error(task, i, &e.to_string())).collect()),
    }
}

fn provider_error(task: &TaskSpec, index: usize, detail: &str) -> EvalResult {
    EvalResult {
        task: task.name.clone(),
        sample_index: index,
        completion: String::new(),
        verdict: Verdict::ProviderError,
        detail: detail.to_string(),
        duration_ms: 0,
    }
}
