use std::path::Path;

use deepmem::seprank::suite::{Check, SuiteConfig};
use deepmem::tasks::{CopyConfig, SimConfig};
use deepmem::train::{Architecture, CellKind, FrontierTask, SyntheticTask, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyFile {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub size_cap: Option<usize>,
    #[serde(default)]
    pub suite: SuiteConfig,
}

fn all_checks() -> Vec<Check> {
    Check::ALL.to_vec()
}

impl Default for VerifyFile {
    fn default() -> Self {
        Self { schema: SCHEMA_VERSION, seed: 0, checks: all_checks(), size_cap: None, suite: SuiteConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnistTask {
    /// Training examples kept after the validation split; all when `None`.
    pub train_subset: Option<usize>,
    pub validation: usize,
    pub permutation_seed: u64,
    pub split_seed: u64,
    /// Test examples evaluated; all when `None`.
    pub test_limit: Option<usize>,
}

impl Default for MnistTask {
    fn default() -> Self {
        Self { train_subset: None, validation: 5000, permutation_seed: 1, split_seed: 0, test_limit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainTask {
    Copy(CopyConfig),
    Similarity(SimConfig),
    PermutedMnist(MnistTask),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub arch: Architecture,
    pub task: TrainTask,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for TrainFile {
    /// Copy smoke run: `m = 2`, `B = 0`, `n = 4`.
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: None,
            arch: Architecture { depth: 2, channels: 16, cell: CellKind::Scornn },
            task: TrainTask::Copy(CopyConfig { m: 2, b: 0, n: 4 }),
            train: TrainConfig { max_iters: 2000, val_size: 500, test_size: 2000, ..TrainConfig::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierFile {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub family: FrontierTask,
    pub archs: Vec<Architecture>,
    pub hardness: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for FrontierFile {
    /// Copy delays `{0, 10, 20, 40}` for a depth-2 scoRNN and its budget-matched depth-1 peer.
    fn default() -> Self {
        let deep = Architecture { depth: 2, channels: 32, cell: CellKind::Scornn };
        let shallow = Architecture::matched(1, CellKind::Scornn, deep.params(10, 10), 10, 10);
        Self {
            schema: SCHEMA_VERSION,
            seed: None,
            family: FrontierTask::CopyDelay { m: 3, n: 8 },
            archs: vec![shallow, deep],
            hardness: vec![0, 10, 20, 40],
            train: TrainConfig { max_iters: 5000, test_size: 2000, ..TrainConfig::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenFile {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub task: SyntheticTask,
    pub count: usize,
}

impl Default for GenFile {
    fn default() -> Self {
        Self { schema: SCHEMA_VERSION, seed: 0, task: SyntheticTask::Copy(CopyConfig { m: 3, b: 5, n: 8 }), count: 10 }
    }
}

/// Parses a config document, checking the schema version before the body.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
    match value.get("schema") {
        None => {}
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => return Err(CliError::config(format!("unsupported schema version {v}; expected {SCHEMA_VERSION}"))),
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("invalid config: {e}")))
}
