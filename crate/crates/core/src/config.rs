//! Serializable run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::RankingConfig;
use crate::graph::GraphConfig;
use crate::predict::EngineParams;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetPaths {
    pub train: Vec<PathBuf>,
    pub split_dir: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

/// Everything needed to reproduce a run given the same data. Thread count is
/// deliberately absent: results do not depend on it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DatasetPaths,
    pub graph: GraphConfig,
    /// Causal relations used when a query does not name one.
    pub causal_relations: Vec<String>,
    pub engine: EngineParams,
    pub ranking: RankingConfig,
    /// Report both filtered and raw metrics and per-relation breakdowns.
    pub verbose_metrics: bool,
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()
    }
}
