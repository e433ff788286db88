//! Python bindings for the perturbation workbench.
//!
//! Structured results (traces, plans, reports, warning counts) cross the
//! boundary as plain dicts and lists.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use perturbench::corpus::parse_task_set;
use perturbench::datasets::enumerate_plan as core_enumerate_plan;
use perturbench::harness::{run_benchmark, ProviderConfig, ReplayProvider, RunSpec, SandboxConfig};
use perturbench::quality::{self, SampleSizeQuery};
use perturbench::stats::{self, StatsConfig, WilcoxonMode};
use perturbench::{InstructionSample, MethodId, PerturbParams, TaskSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializable value to the equivalent Python object.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn method(name: &str) -> PyResult<MethodId> {
    MethodId::from_str(name).map_err(value_err)
}

fn mode(name: &str) -> PyResult<WilcoxonMode> {
    WilcoxonMode::from_str(name).map_err(value_err)
}

/// Seeded perturbation operators with fixed rate parameters.
#[pyclass(name = "Perturber", module = "perturbench_py", frozen)]
struct PyPerturber {
    inner: perturbench::Perturber,
    params: PerturbParams,
}

#[pymethods]
impl PyPerturber {
    #[new]
    #[pyo3(signature = (char_rate = 0.05, word_count = 1, target_count = None))]
    fn new(char_rate: f64, word_count: usize, target_count: Option<usize>) -> Self {
        Self { inner: perturbench::Perturber::default(), params: PerturbParams { char_rate, word_count, target_count } }
    }

    /// Perturbs the whole text; returns `(text, trace)`.
    fn perturb_text<'py>(
        &self,
        py: Python<'py>,
        text: &str,
        method_id: &str,
        seed: u64,
    ) -> PyResult<(String, Bound<'py, PyAny>)> {
        let (out, trace) = self.inner.perturb_text(text, method(method_id)?, &self.params, seed).map_err(value_err)?;
        Ok((out, to_py(py, &trace)?))
    }

    /// Perturbs the docstring prose of a code prompt, leaving code and
    /// doctests alone.
    fn perturb_prompt<'py>(
        &self,
        py: Python<'py>,
        prompt: &str,
        method_id: &str,
        seed: u64,
    ) -> PyResult<(String, Bound<'py, PyAny>)> {
        let task = TaskSpec {
            name: "prompt".into(),
            language: "python".into(),
            prompt: prompt.into(),
            tests: String::new(),
            completions: Vec::new(),
            stop_tokens: Vec::new(),
        };
        let (out, trace) =
            self.inner.perturb_sample(&task, method(method_id)?, &self.params, seed).map_err(value_err)?;
        Ok((out.prompt, to_py(py, &trace)?))
    }

    /// Perturbs an instruction; the paired output is never touched.
    fn perturb_instruction<'py>(
        &self,
        py: Python<'py>,
        instruction: &str,
        output: &str,
        method_id: &str,
        seed: u64,
    ) -> PyResult<(String, Bound<'py, PyAny>)> {
        let sample = InstructionSample { instruction: instruction.into(), output: output.into() };
        let (out, trace) =
            self.inner.perturb_sample(&sample, method(method_id)?, &self.params, seed).map_err(value_err)?;
        Ok((out.instruction, to_py(py, &trace)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Perturber(char_rate={}, word_count={}, target_count={:?})",
            self.params.char_rate, self.params.word_count, self.params.target_count
        )
    }
}

#[pyclass(name = "WilcoxonResult", module = "perturbench_py", frozen, get_all)]
struct PyWilcoxonResult {
    n: usize,
    w: f64,
    t_plus: f64,
    t_minus: f64,
    z: f64,
    p_two_sided: f64,
    mode: String,
    r_z: f64,
    r_rb: f64,
}

#[pymethods]
impl PyWilcoxonResult {
    #[pyo3(signature = (alpha = 0.05))]
    fn is_significant(&self, alpha: f64) -> bool {
        self.p_two_sided < alpha
    }

    fn __repr__(&self) -> String {
        format!(
            "WilcoxonResult(n={}, w={}, p={:e}, r_z={:.3}, mode={:?})",
            self.n, self.w, self.p_two_sided, self.r_z, self.mode
        )
    }
}

impl From<stats::WilcoxonResult> for PyWilcoxonResult {
    fn from(r: stats::WilcoxonResult) -> Self {
        let e = stats::effect_size(&r);
        let mode = serde_json::to_value(r.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        Self {
            n: r.n,
            w: r.w,
            t_plus: r.t_plus,
            t_minus: r.t_minus,
            z: r.z,
            p_two_sided: r.p_two_sided,
            mode,
            r_z: e.r_z,
            r_rb: e.r_rb,
        }
    }
}

/// Wilcoxon signed-rank test on `(a, b)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, mode_name = "auto"))]
fn wilcoxon(pairs: Vec<(f64, f64)>, mode_name: &str) -> PyResult<PyWilcoxonResult> {
    let r = stats::wilcoxon_signed_rank(&pairs, mode(mode_name)?, &StatsConfig::default()).map_err(value_err)?;
    Ok(r.into())
}

/// Wilcoxon test from a reported `(n, W)` summary.
#[pyfunction]
#[pyo3(signature = (n, w, mode_name = "auto"))]
fn wilcoxon_from_statistic(n: usize, w: f64, mode_name: &str) -> PyResult<PyWilcoxonResult> {
    let r = stats::wilcoxon_from_statistic(n, w, mode(mode_name)?, &StatsConfig::default()).map_err(value_err)?;
    Ok(r.into())
}

#[pyfunction]
fn pass_at_k(n_samples: u64, n_correct: u64, k: u64) -> PyResult<f64> {
    stats::pass_at_k(n_samples, n_correct, k).map_err(value_err)
}

/// `(original - perturbed) / original`.
#[pyfunction]
fn relative_degradation(pass_original: f64, pass_perturbed: f64) -> PyResult<f64> {
    stats::relative_degradation(stats::RdInput { pass_original, pass_perturbed }).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (population = None, confidence = 0.95, margin = 0.05, proportion = 0.5))]
fn required_sample_size(population: Option<u64>, confidence: f64, margin: f64, proportion: f64) -> PyResult<u64> {
    quality::required_sample_size(&SampleSizeQuery { population, confidence, margin, proportion }).map_err(value_err)
}

/// Severity of one linter code: category, exit bit and tier.
#[pyfunction]
fn classify_diagnostic(py: Python<'_>, code: &str) -> PyResult<Py<PyAny>> {
    let entry = quality::classify_diagnostic(code).map_err(value_err)?;
    Ok(to_py(py, &entry)?.unbind())
}

/// Counts per label from `(label, linter output)` pairs, plus exit bits.
#[pyfunction]
fn aggregate_warnings(py: Python<'_>, streams: Vec<(String, String)>) -> PyResult<Py<PyAny>> {
    let counts = quality::aggregate_warnings(streams.iter().map(|(l, s)| (l.as_str(), s.as_str())));
    let out = to_py(py, &counts)?;
    let bits: Vec<(String, u8)> = counts.runs.iter().map(|r| (r.label.clone(), counts.exit_bits(&r.label))).collect();
    out.set_item("exit_bits", bits.into_iter().collect::<std::collections::BTreeMap<_, _>>())?;
    out.set_item("combined_exit_bits", counts.combined_exit_bits())?;
    Ok(out.unbind())
}

/// The experiment plan as a dict with a `manifests` list.
#[pyfunction]
#[pyo3(signature = (corpus_id, benchmark_ids, master_seed = 42))]
fn enumerate_plan(
    py: Python<'_>,
    corpus_id: &str,
    benchmark_ids: Vec<String>,
    master_seed: u64,
) -> PyResult<Py<PyAny>> {
    let ids: Vec<&str> = benchmark_ids.iter().map(String::as_str).collect();
    Ok(to_py(py, &core_enumerate_plan(corpus_id, &ids, master_seed))?.unbind())
}

/// Runs a task set against recorded completions and returns the report.
#[pyfunction]
#[pyo3(signature = (tasks_path, replay_path, model = "model", manifest_id = "replay", timeout_secs = 10.0, parallelism = 1))]
fn evaluate_replay(
    py: Python<'_>,
    tasks_path: &str,
    replay_path: &str,
    model: &str,
    manifest_id: &str,
    timeout_secs: f64,
    parallelism: usize,
) -> PyResult<Py<PyAny>> {
    let bytes = std::fs::read(tasks_path).map_err(|e| value_err(format!("{tasks_path}: {e}")))?;
    let benchmark = Path::new(tasks_path).file_stem().map_or("tasks".into(), |s| s.to_string_lossy().into_owned());
    let set = parse_task_set(&bytes, &benchmark).map_err(value_err)?;
    let replay = ReplayProvider::load(Path::new(replay_path)).map_err(value_err)?;
    let pc = ProviderConfig { model: model.into(), ..Default::default() };
    let sb = SandboxConfig { timeout_secs, ..Default::default() };
    let spec = RunSpec { manifest_id, provider: &replay, provider_config: &pc, sandbox: &sb, parallelism };
    let report = py.detach(|| run_benchmark(&set, &spec)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(to_py(py, &report)?.unbind())
}

#[pymodule]
fn perturbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("METHODS", MethodId::ALL.iter().map(|x| x.as_str()).collect::<Vec<_>>())?;
    m.add_class::<PyPerturber>()?;
    m.add_class::<PyWilcoxonResult>()?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_from_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(relative_degradation, m)?)?;
    m.add_function(wrap_pyfunction!(required_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(classify_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_warnings, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_plan, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_replay, m)?)?;
    Ok(())
}
