//! Run configuration, read from a single versioned TOML file.
//!
//! Relative paths resolve against the directory holding the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::{AdamWConfig, TrainConfig};
use crate::cohort::DatasetKind;
use crate::demographics::Axis;
use crate::error::{Error, Result};
use crate::gateway::ModelEndpoint;
use crate::prompt::{enumerate_conditions, Setting};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub seeds: Seeds,
    pub survey: SurveyConfig,
    pub datasets: Vec<DatasetConfig>,
    pub endpoints: Vec<ModelEndpoint>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub panels: PanelToggles,
    #[serde(default)]
    pub adapter: AdapterConfig,
    #[serde(default)]
    pub thematic: ThematicConfig,
}

/// Every seed the pipeline consumes. None of them has a default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sweep: u64,
    pub dropout: u64,
    pub training: u64,
    pub topics: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    /// Omit to use the bundled question taxonomy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    pub distributions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub cohort: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Setting names; empty means every primary setting.
    #[serde(default)]
    pub settings: Vec<String>,
    #[serde(default)]
    pub include_appendix: bool,
    /// Empty means every axis the dataset annotates.
    #[serde(default)]
    pub axes: Vec<Axis>,
    pub runs: u32,
    pub temperature: f64,
    pub workers: usize,
    #[serde(default)]
    pub probe_confidence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            settings: Vec::new(),
            include_appendix: false,
            axes: Vec::new(),
            runs: 3,
            temperature: 0.7,
            workers: 4,
            probe_confidence: false,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelToggles {
    pub utility: bool,
    pub shortcut: bool,
    pub complementarity: bool,
    pub epsilon: f64,
    pub min_n: usize,
    pub dropout: f64,
}

impl Default for PanelToggles {
    fn default() -> Self {
        Self {
            utility: true,
            shortcut: true,
            complementarity: true,
            epsilon: 0.05,
            min_n: 3,
            dropout: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    Participant,
    Judgment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseHyper {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl PhaseHyper {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

impl From<TrainConfig> for PhaseHyper {
    fn from(t: TrainConfig) -> Self {
        Self {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub enabled: bool,
    /// Precomputed embedding table; otherwise texts go through the first endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// NDJSON of `{"text": .., "paraphrase": ..}` used as extra Phase-2 rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrases: Option<PathBuf>,
    pub split_unit: SplitUnit,
    pub train_fraction: f64,
    pub phase1: PhaseHyper,
    pub phase2: PhaseHyper,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            embeddings: None,
            paraphrases: None,
            split_unit: SplitUnit::Participant,
            train_fraction: 0.8,
            phase1: TrainConfig::phase1().into(),
            phase2: TrainConfig::phase2().into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThematicConfig {
    pub topics: usize,
    pub iterations: usize,
}

impl Default for ThematicConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            iterations: 200,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve(base, &mut self.cache_dir);
        if let Some(t) = &mut self.survey.taxonomy {
            resolve(base, t);
        }
        resolve(base, &mut self.survey.distributions);
        for d in &mut self.datasets {
            resolve(base, &mut d.cohort);
        }
        for p in [&mut self.adapter.embeddings, &mut self.adapter.paraphrases]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
    }

    /// Checks input paths exist and every value is in range.
    pub fn validate(&self) -> Result<()> {
        let mut inputs: Vec<&Path> = vec![&self.survey.distributions];
        inputs.extend(self.survey.taxonomy.as_deref());
        inputs.extend(self.datasets.iter().map(|d| d.cohort.as_path()));
        inputs.extend(self.adapter.embeddings.as_deref());
        inputs.extend(self.adapter.paraphrases.as_deref());
        for p in inputs {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        if self.endpoints.is_empty() {
            return Err(Error::Config("at least one endpoint is required".into()));
        }
        let kinds: BTreeSet<DatasetKind> = self.datasets.iter().map(|d| d.kind).collect();
        let models: BTreeSet<&str> = self.endpoints.iter().map(|e| e.model_name.as_str()).collect();
        if kinds.len() != self.datasets.len() || models.len() != self.endpoints.len() {
            return Err(Error::Config("dataset kinds and model names must be unique".into()));
        }
        for e in &self.endpoints {
            e.validate()?;
        }
        let g = &self.grid;
        if g.runs == 0 || g.workers == 0 {
            return Err(Error::Config("grid.runs and grid.workers must be positive".into()));
        }
        if !(0.0..=2.0).contains(&g.temperature) {
            return Err(Error::Config(format!("temperature {} outside [0, 2]", g.temperature)));
        }
        self.settings()?;
        let p = &self.panels;
        if !(0.0..=1.0).contains(&p.epsilon) || !(0.0..1.0).contains(&p.dropout) {
            return Err(Error::Config("panel epsilon or dropout out of range".into()));
        }
        let a = &self.adapter;
        if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
            return Err(Error::Config("adapter.train_fraction must lie in (0, 1)".into()));
        }
        a.phase1.train_config(0).validate()?;
        a.phase2.train_config(0).validate()?;
        if self.thematic.topics == 0 {
            return Err(Error::Config("thematic.topics must be positive".into()));
        }
        Ok(())
    }

    /// The configured grid entries, in canonical order.
    pub fn settings(&self) -> Result<Vec<Setting>> {
        let all = enumerate_conditions();
        for name in &self.grid.settings {
            if !all.iter().any(|s| &s.name == name) {
                return Err(Error::Config(format!("unknown setting `{name}`")));
            }
        }
        Ok(all
            .into_iter()
            .filter(|s| {
                if self.grid.settings.is_empty() {
                    !s.appendix || self.grid.include_appendix
                } else {
                    self.grid.settings.contains(&s.name)
                        || (self.grid.include_appendix
                            && s.appendix
                            && self.grid.settings.iter().any(|n| s.name == format!("{n}~dist")))
                }
            })
            .collect())
    }
}
