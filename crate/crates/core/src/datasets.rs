//! Ratio mixing, scaling, the experiment plan and dataset manifests.
//!
//! A manifest fully determines its dataset: building the same manifest twice
//! yields byte-identical files, and the recorded checksum is verified on
//! every rebuild.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_instruction_corpus, write_task_set, CorpusError, InstructionSample, TaskSet};
use crate::perturb::{MethodId, PerturbError, PerturbParams, Perturbable, PerturbationTrace, Perturber};
use crate::rng::{derive_seed, SplitMix64};
use crate::sha256_hex;

/// Intermediate ratios of the ratio sweep; 0% and 100% come from the
/// clean set and the aggregate training set.
pub const SWEEP_RATIOS: [u32; 5] = [10, 30, 50, 70, 90];
pub const SWEEP_REPLICATIONS: u32 = 3;
/// Perturbation ratio used by the dataset-size experiment.
pub const SCALE_RATIO: u32 = 60;
pub const NO_METHOD: &str = "none";

const SUBSAMPLE_STREAM: u64 = 0x5u64 << 56;
const MIX_STREAM: u64 = 0x6u64 << 56;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("ratio {0}% is outside 0..=100")]
    InvalidRatio(u32),
    #[error("unsupported scale factor {0}")]
    InvalidScale(f64),
    #[error("manifest {id}: {reason}")]
    InvalidManifest { id: String, reason: String },
    #[error("missing input {0}")]
    MissingInput(String),
    #[error("checksum mismatch for {id}: manifest has {expected}, rebuilt {actual}")]
    ChecksumMismatch { id: String, expected: String, actual: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

/// Dataset size relative to the clean corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum ScaleFactor {
    Quarter,
    Half,
    One,
    Double,
    Triple,
}

impl ScaleFactor {
    pub const SWEEP: [ScaleFactor; 4] = [Self::Quarter, Self::Half, Self::Double, Self::Triple];

    fn fraction(self) -> (usize, usize) {
        match self {
            Self::Quarter => (1, 4),
            Self::Half => (1, 2),
            Self::One => (1, 1),
            Self::Double => (2, 1),
            Self::Triple => (3, 1),
        }
    }

    pub fn as_f64(self) -> f64 {
        let (n, d) = self.fraction();
        n as f64 / d as f64
    }

    /// `round_half_up(factor * n)`.
    pub fn apply(self, n: usize) -> usize {
        let (num, den) = self.fraction();
        (2 * n * num + den) / (2 * den)
    }
}

impl TryFrom<f64> for ScaleFactor {
    type Error = DatasetError;

    fn try_from(x: f64) -> Result<Self, DatasetError> {
        [Self::Quarter, Self::Half, Self::One, Self::Double, Self::Triple]
            .into_iter()
            .find(|s| s.as_f64() == x)
            .ok_or(DatasetError::InvalidScale(x))
    }
}

impl From<ScaleFactor> for f64 {
    fn from(s: ScaleFactor) -> f64 {
        s.as_f64()
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub role: Role,
    /// Training corpus id for `train`, benchmark id for `test`.
    pub source_id: String,
    /// Method id, or `"none"` for clean sets.
    pub method: String,
    pub ratio_percent: u32,
    pub scale_factor: ScaleFactor,
    pub replication: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub params: PerturbParams,
    /// Experiments this dataset takes part in ("rq1", "rq2", "rq3", "test").
    #[serde(default)]
    pub experiments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

/// Manifest id as a pure function of the identifying fields.
pub fn manifest_id(
    role: Role,
    source_id: &str,
    method: &str,
    ratio_percent: u32,
    scale: ScaleFactor,
    replication: u32,
    seed: u64,
) -> String {
    format!("{role}__{source_id}__{method}__r{ratio_percent}__x{scale}__rep{replication}__{seed:016x}")
}

impl DatasetManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        role: Role,
        source_id: &str,
        method: Option<MethodId>,
        ratio_percent: u32,
        scale_factor: ScaleFactor,
        replication: u32,
        seed: u64,
        parent_id: Option<String>,
    ) -> Self {
        let method = method.map_or(NO_METHOD, MethodId::as_str).to_string();
        Self {
            id: manifest_id(role, source_id, &method, ratio_percent, scale_factor, replication, seed),
            role,
            source_id: source_id.to_string(),
            method,
            ratio_percent,
            scale_factor,
            replication,
            seed,
            parent_id,
            params: PerturbParams::default(),
            experiments: Vec::new(),
            sample_count: None,
            checksum: None,
        }
    }

    pub fn method_id(&self) -> Result<Option<MethodId>, DatasetError> {
        if self.method == NO_METHOD {
            return Ok(None);
        }
        self.method.parse().map(Some).map_err(|_| self.invalid(format!("unknown method {:?}", self.method)))
    }

    pub fn is_clean(&self) -> bool {
        self.method == NO_METHOD
    }

    fn invalid(&self, reason: String) -> DatasetError {
        DatasetError::InvalidManifest { id: self.id.clone(), reason }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.ratio_percent > 100 {
            return Err(DatasetError::InvalidRatio(self.ratio_percent));
        }
        let method = self.method_id()?;
        if (self.ratio_percent == 0) != method.is_none() {
            return Err(self.invalid("ratio 0 goes with method \"none\" and only with it".into()));
        }
        let id = manifest_id(
            self.role,
            &self.source_id,
            &self.method,
            self.ratio_percent,
            self.scale_factor,
            self.replication,
            self.seed,
        );
        if id != self.id {
            return Err(self.invalid(format!("id does not match fields (expected {id})")));
        }
        Ok(())
    }

    /// File names inside an output directory.
    pub fn data_file(&self) -> String {
        match self.role {
            Role::Train => format!("{}.jsonl", self.id),
            Role::Test => format!("{}.json", self.id),
        }
    }

    pub fn trace_file(&self) -> String {
        format!("{}.traces.jsonl", self.id)
    }

    pub fn manifest_file(&self) -> String {
        format!("{}.manifest.json", self.id)
    }
}

/// All manifests of the experiment plan, clean parents first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    pub corpus_id: String,
    pub benchmark_ids: Vec<String>,
    pub manifests: Vec<DatasetManifest>,
}

impl ExperimentPlan {
    pub fn perturbed(&self, role: Role) -> impl Iterator<Item = &DatasetManifest> {
        self.manifests.iter().filter(move |m| m.role == role && !m.is_clean())
    }

    pub fn for_experiment<'a>(&'a self, exp: &'a str) -> impl Iterator<Item = &'a DatasetManifest> {
        self.manifests.iter().filter(move |m| m.experiments.iter().any(|e| e == exp))
    }

    pub fn get(&self, id: &str) -> Option<&DatasetManifest> {
        self.manifests.iter().find(|m| m.id == id)
    }

    pub fn with_params(mut self, params: PerturbParams) -> Self {
        for m in &mut self.manifests {
            m.params = params;
        }
        self
    }
}

/// Enumerates the full plan for one training corpus and the test
/// benchmarks. Seeds are consumed from one generator in enumeration order.
pub fn enumerate_plan(corpus_id: &str, benchmark_ids: &[&str], master_seed: u64) -> ExperimentPlan {
    let mut rng = SplitMix64::new(master_seed);
    let mut manifests = Vec::new();
    let tag = |m: &mut DatasetManifest, exps: &[&str]| m.experiments = exps.iter().map(|s| s.to_string()).collect();

    let mut clean = DatasetManifest::new(Role::Train, corpus_id, None, 0, ScaleFactor::One, 0, 0, None);
    tag(&mut clean, &["rq1", "rq2", "rq3"]);
    let clean_id = clean.id.clone();
    manifests.push(clean);
    let mut clean_tests = BTreeMap::new();
    for &b in benchmark_ids {
        let mut m = DatasetManifest::new(Role::Test, b, None, 0, ScaleFactor::One, 0, 0, None);
        tag(&mut m, &["test"]);
        clean_tests.insert(b, m.id.clone());
        manifests.push(m);
    }

    for method in MethodId::ALL {
        let mut m = DatasetManifest::new(
            Role::Train,
            corpus_id,
            Some(method),
            100,
            ScaleFactor::One,
            0,
            rng.next_u64(),
            Some(clean_id.clone()),
        );
        let exps: &[&str] = if method == MethodId::MixAll { &["rq1", "rq2"] } else { &["rq1"] };
        tag(&mut m, exps);
        manifests.push(m);
    }
    for ratio in SWEEP_RATIOS {
        for rep in 0..SWEEP_REPLICATIONS {
            let mut m = DatasetManifest::new(
                Role::Train,
                corpus_id,
                Some(MethodId::MixAll),
                ratio,
                ScaleFactor::One,
                rep,
                rng.next_u64(),
                Some(clean_id.clone()),
            );
            tag(&mut m, &["rq2"]);
            manifests.push(m);
        }
    }
    for scale in ScaleFactor::SWEEP {
        let mut m = DatasetManifest::new(
            Role::Train,
            corpus_id,
            Some(MethodId::MixAll),
            SCALE_RATIO,
            scale,
            0,
            rng.next_u64(),
            Some(clean_id.clone()),
        );
        tag(&mut m, &["rq3"]);
        manifests.push(m);
    }
    for &b in benchmark_ids {
        for method in MethodId::ALL {
            let mut m = DatasetManifest::new(
                Role::Test,
                b,
                Some(method),
                100,
                ScaleFactor::One,
                0,
                rng.next_u64(),
                Some(clean_tests[b].clone()),
            );
            tag(&mut m, &["test"]);
            manifests.push(m);
        }
    }
    ExperimentPlan {
        master_seed,
        corpus_id: corpus_id.to_string(),
        benchmark_ids: benchmark_ids.iter().map(|s| s.to_string()).collect(),
        manifests,
    }
}

/// Trace of one perturbed position of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedTrace {
    pub index: usize,
    pub trace: PerturbationTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixed<S> {
    pub samples: Vec<S>,
    /// One record per perturbed index, ascending.
    pub traces: Vec<IndexedTrace>,
}

/// Number of samples perturbed at `ratio_percent` of `n`, rounded half up.
pub fn ratio_count(n: usize, ratio_percent: u32) -> usize {
    (ratio_percent as usize * n + 50) / 100
}

/// Indices perturbed at a ratio: a prefix of one seeded permutation, so the
/// set at a lower ratio is contained in the set at a higher one.
pub fn perturbed_indices(n: usize, ratio_percent: u32, seed: u64) -> Vec<usize> {
    let mut idx = SplitMix64::new(seed).permutation_prefix(n, ratio_count(n, ratio_percent));
    idx.sort_unstable();
    idx
}

/// Replaces a seeded `ratio_percent` share of `clean` with perturbed
/// variants; order and length are preserved.
pub fn mix_with_ratio<S: Perturbable>(
    perturber: &Perturber,
    clean: &[S],
    method: MethodId,
    params: &PerturbParams,
    ratio_percent: u32,
    seed: u64,
) -> Result<Mixed<S>, DatasetError> {
    if ratio_percent > 100 {
        return Err(DatasetError::InvalidRatio(ratio_percent));
    }
    let mut samples = clean.to_vec();
    let mut traces = Vec::new();
    for index in perturbed_indices(clean.len(), ratio_percent, seed) {
        let (s, trace) = perturber.perturb_sample(&clean[index], method, params, derive_seed(seed, index as u64))?;
        samples[index] = s;
        traces.push(IndexedTrace { index, trace });
    }
    Ok(Mixed { samples, traces })
}

/// Resizes `clean` by `factor`, then mixes at `ratio_percent`.
///
/// Shrinking draws a uniform subsample (kept in corpus order). Growing
/// concatenates `factor` copies of the corpus; since each selected index
/// gets its own derived seed, duplicates of one sample are perturbed
/// independently.
pub fn scale_perturbed<S: Perturbable>(
    perturber: &Perturber,
    clean: &[S],
    factor: ScaleFactor,
    method: MethodId,
    params: &PerturbParams,
    ratio_percent: u32,
    seed: u64,
) -> Result<Mixed<S>, DatasetError> {
    let target = factor.apply(clean.len());
    let pool: Vec<S> = if target <= clean.len() {
        let mut idx = SplitMix64::new(derive_seed(seed, SUBSAMPLE_STREAM)).permutation_prefix(clean.len(), target);
        idx.sort_unstable();
        idx.into_iter().map(|i| clean[i].clone()).collect()
    } else {
        clean.iter().cycle().take(target).cloned().collect()
    };
    mix_with_ratio(perturber, &pool, method, params, ratio_percent, derive_seed(seed, MIX_STREAM))
}

/// Clean inputs a plan is built from.
#[derive(Debug, Clone, Default)]
pub struct BuildInputs {
    pub corpus: Option<Vec<InstructionSample>>,
    pub task_sets: BTreeMap<String, TaskSet>,
}

/// A dataset in canonical serialized form plus its traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Materialized {
    pub manifest: DatasetManifest,
    pub data: Vec<u8>,
    pub traces: Vec<IndexedTrace>,
}

/// Checksum of a clean corpus in canonical form.
pub fn corpus_checksum(samples: &[InstructionSample]) -> String {
    sha256_hex(&write_instruction_corpus(samples))
}

/// Builds a manifest's dataset in memory and fills in `sample_count` and
/// `checksum`. A manifest that already carries a checksum must reproduce it.
pub fn materialize(
    manifest: &DatasetManifest,
    perturber: &Perturber,
    inputs: &BuildInputs,
) -> Result<Materialized, DatasetError> {
    manifest.validate()?;
    let method = manifest.method_id()?;
    let (data, traces, count) = match manifest.role {
        Role::Train => {
            let clean = inputs.corpus.as_ref().ok_or_else(|| DatasetError::MissingInput("training corpus".into()))?;
            match method {
                None => {
                    let pool = scale_clean(clean, manifest.scale_factor, manifest.seed);
                    (write_instruction_corpus(&pool), Vec::new(), pool.len())
                }
                Some(m) => {
                    let mixed = scale_perturbed(
                        perturber,
                        clean,
                        manifest.scale_factor,
                        m,
                        &manifest.params,
                        manifest.ratio_percent,
                        manifest.seed,
                    )?;
                    (write_instruction_corpus(&mixed.samples), mixed.traces, mixed.samples.len())
                }
            }
        }
        Role::Test => {
            let set = inputs
                .task_sets
                .get(&manifest.source_id)
                .ok_or_else(|| DatasetError::MissingInput(format!("task set {}", manifest.source_id)))?;
            match method {
                None => (write_task_set(set), Vec::new(), set.len()),
                Some(m) => {
                    let mixed = mix_with_ratio(
                        perturber,
                        &set.tasks,
                        m,
                        &manifest.params,
                        manifest.ratio_percent,
                        manifest.seed,
                    )?;
                    let out =
                        TaskSet { benchmark_id: set.benchmark_id.clone(), tasks: mixed.samples, expected_count: None };
                    (write_task_set(&out), mixed.traces, out.len())
                }
            }
        }
    };
    let checksum = sha256_hex(&data);
    if let Some(expected) = &manifest.checksum {
        if *expected != checksum {
            return Err(DatasetError::ChecksumMismatch {
                id: manifest.id.clone(),
                expected: expected.clone(),
                actual: checksum,
            });
        }
    }
    let mut manifest = manifest.clone();
    manifest.sample_count = Some(count);
    manifest.checksum = Some(checksum);
    Ok(Materialized { manifest, data, traces })
}

fn scale_clean(clean: &[InstructionSample], factor: ScaleFactor, seed: u64) -> Vec<InstructionSample> {
    if factor == ScaleFactor::One {
        return clean.to_vec();
    }
    let target = factor.apply(clean.len());
    if target <= clean.len() {
        let mut idx = SplitMix64::new(derive_seed(seed, SUBSAMPLE_STREAM)).permutation_prefix(clean.len(), target);
        idx.sort_unstable();
        idx.into_iter().map(|i| clean[i].clone()).collect()
    } else {
        clean.iter().cycle().take(target).cloned().collect()
    }
}

/// Materializes a manifest into `out_dir`: data file, trace file and the
/// completed manifest. Returns the completed manifest.
pub fn build_dataset(
    manifest: &DatasetManifest,
    perturber: &Perturber,
    inputs: &BuildInputs,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    let built = materialize(manifest, perturber, inputs)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let write = |name: String, bytes: &[u8]| -> Result<PathBuf, DatasetError> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        Ok(path)
    };
    write(built.manifest.data_file(), &built.data)?;
    let mut traces = Vec::new();
    for t in &built.traces {
        serde_json::to_writer(&mut traces, t).expect("trace serializes");
        traces.push(b'\n');
    }
    write(built.manifest.trace_file(), &traces)?;
    write(built.manifest.manifest_file(), &to_pretty(&built.manifest))?;
    Ok(built.manifest)
}

/// Builds every manifest of `plan`, `parallelism` at a time, and writes the
/// plan index (`plan.json`) with the completed manifests.
pub fn build_plan(
    plan: &ExperimentPlan,
    perturber: &Perturber,
    inputs: &BuildInputs,
    out_dir: &Path,
    parallelism: usize,
) -> Result<ExperimentPlan, DatasetError> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<DatasetManifest, DatasetError>>>> =
        Mutex::new((0..plan.manifests.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..parallelism.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(m) = plan.manifests.get(i) else { break };
                let r = build_dataset(m, perturber, inputs, out_dir);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut built = plan.clone();
    for (slot, r) in built.manifests.iter_mut().zip(results.into_inner().unwrap()) {
        *slot = r.expect("every manifest was visited")?;
    }
    write_plan_index(&built, out_dir)?;
    Ok(built)
}

pub fn write_plan_index(plan: &ExperimentPlan, out_dir: &Path) -> Result<PathBuf, DatasetError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("plan.json");
    std::fs::write(&path, to_pretty(plan)).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_plan_index(path: &Path) -> Result<ExperimentPlan, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| DatasetError::InvalidManifest { id: path.display().to_string(), reason: e.to_string() })
}

fn to_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializes");
    out.push(b'\n');
    out
}
