//! Workbench configuration: one TOML document, overridden by flags.
//!
//! Precedence, lowest first: built-in defaults, the config file (from
//! `--config` or `PERTURBENCH_CONFIG`), command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use perturbench::harness::{ProviderConfig, SandboxConfig};
use perturbench::stats::StatsConfig;
use perturbench::PerturbParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub provider: ProviderConfig,
    pub sandbox: SandboxConfig,
    pub stats: StatsConfig,
    pub perturb: PerturbParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Training corpus (JSON lines).
    pub corpus: Option<PathBuf>,
    pub corpus_id: Option<String>,
    /// Benchmark id to task-set file (JSON array).
    pub task_sets: BTreeMap<String, PathBuf>,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            provider: ProviderConfig::default(),
            sandbox: SandboxConfig::default(),
            stats: StatsConfig::default(),
            perturb: PerturbParams::default(),
        }
    }
}

impl WorkbenchConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(c) = &mut cfg.paths.corpus {
            *c = base.join(&*c);
        }
        for p in cfg.paths.task_sets.values_mut() {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    /// Fails unless every referenced input path exists.
    pub fn check_paths(&self) -> Result<()> {
        let corpus = self.paths.corpus.iter();
        for p in corpus.chain(self.paths.task_sets.values()) {
            if !p.exists() {
                bail!("input path {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn corpus_id(&self) -> String {
        if let Some(id) = &self.paths.corpus_id {
            return id.clone();
        }
        self.paths
            .corpus
            .as_ref()
            .and_then(|p| p.file_stem())
            .map_or_else(|| "train".to_string(), |s| s.to_string_lossy().into_owned())
    }

    pub fn benchmark_ids(&self) -> Vec<String> {
        if self.paths.task_sets.is_empty() {
            return vec!["humaneval".into(), "mbpp".into()];
        }
        self.paths.task_sets.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: WorkbenchConfig = toml::from_str("seed = 7\n[sandbox]\ntimeout_secs = 2.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sandbox.timeout_secs, 2.0);
        assert_eq!(cfg.sandbox.max_output_bytes, SandboxConfig::default().max_output_bytes);
        assert_eq!(cfg.provider, ProviderConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<WorkbenchConfig>("sede = 7\n").is_err());
    }

    #[test]
    fn default_benchmarks() {
        assert_eq!(WorkbenchConfig::default().benchmark_ids(), ["humaneval", "mbpp"]);
    }
}
