//! Optional config file mirroring the command-line flags.
//!
//! A TOML or JSON file (decided by extension) may pre-set any flag;
//! values given on the command line win. The resolved settings are
//! hashed into each output artifact for provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use partbench::hashing::fnv1a64;
use partbench::jsonl::Provenance;
use partbench::losses::LossWeights;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    pub ontology: Option<PathBuf>,
    pub cooc: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_train: Option<PathBuf>,
    pub out_eval: Option<PathBuf>,
    pub types: Option<String>,
    pub jobs: Option<usize>,
    pub sum_logprob: Option<bool>,
    pub ratio: Option<f64>,
    pub prune_min: Option<usize>,
    pub l2: Option<f64>,
    pub learning_rate: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iters: Option<usize>,
    pub top_k: Option<usize>,
    pub retry_budget: Option<usize>,
    pub seeds: Option<u64>,
    pub grad_tolerance: Option<f64>,
    pub weights: Option<LossWeights>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
        }
    }
}

/// Accumulates the settings that define a run and derives the provenance
/// record embedded in output files. The worker count is deliberately not
/// hashed: outputs must be identical across `--jobs` values.
#[derive(Debug, Default)]
pub struct RunSettings {
    entries: BTreeMap<String, String>,
    seed: u64,
}

impl RunSettings {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut s = Self {
            entries: BTreeMap::new(),
            seed,
        };
        s.record("command", command);
        s.record("seed", seed);
        s
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn record_path(&mut self, key: &str, value: &Path) {
        self.entries
            .insert(key.to_string(), value.display().to_string());
    }

    pub fn provenance(&self) -> Provenance {
        let canonical = serde_json::to_string(&self.entries).expect("string map serializes");
        Provenance {
            tool: format!("partbench {}", env!("CARGO_PKG_VERSION")),
            seed: self.seed,
            config_hash: format!("{:016x}", fnv1a64(canonical.as_bytes())),
        }
    }

    pub fn provenance_value(&self) -> serde_json::Value {
        serde_json::to_value(self.provenance()).expect("provenance serializes")
    }
}
