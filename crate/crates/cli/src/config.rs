//! Run configuration: built-in defaults, then the TOML config file, then
//! flag and `--set` overrides. Later layers win; unknown keys are errors.

use std::path::{Path, PathBuf};

use plexseg::data_model::{Device, ExperimentArm};
use plexseg::network::NetworkConfig;
use plexseg::synthetic::PhantomConfig;
use plexseg::training::{PrepConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub out: PathBuf,
    pub arms: Vec<ExperimentArm>,
    pub k: usize,
    /// Fold assignment seed.
    pub seed: u64,
    pub workers: usize,
    /// Restrict to one device; all devices are pooled when unset.
    pub device_profile: Option<Device>,
    pub trim_to_divisible: bool,
    pub raters: Vec<String>,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub prep: PrepConfig,
    pub synthetic: PhantomConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: "data".into(),
            out: "out".into(),
            arms: ExperimentArm::ALL.to_vec(),
            k: 10,
            seed: 0,
            workers: 1,
            device_profile: None,
            trim_to_divisible: false,
            raters: vec!["a".into(), "b".into(), "c".into()],
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            prep: PrepConfig::default(),
            synthetic: PhantomConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.arms.is_empty() {
            return Err(CliError::Usage("at least one arm is required".into()));
        }
        if self.k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        self.network.validate()?;
        self.training.validate()?;
        self.synthetic.validate()?;
        self.prep.enhance.validate()?;
        Ok(())
    }
}

/// Accumulates layers as a TOML tree and deserializes once at the end.
pub struct ConfigBuilder {
    tree: Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        let tree = Table::try_from(RunConfig::default()).expect("defaults serialize to TOML");
        Self { tree }
    }

    pub fn file(mut self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let layer: Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))?;
        merge(&mut self.tree, layer);
        Ok(self)
    }

    /// Sets a dotted key to an already typed value.
    pub fn set_value(mut self, key: &str, value: Value) -> Result<Self, CliError> {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Usage(format!("empty key in {key:?}")))?;
        let mut node = &mut self.tree;
        for p in parts {
            let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Usage(format!("{key}: {p} is not a table")))?;
        }
        node.insert(last.to_string(), value);
        Ok(self)
    }

    /// `key=value`; the value is read as a TOML literal, or as a bare
    /// string when it does not parse as one.
    pub fn set(self, assignment: &str) -> Result<Self, CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not key=value")))?;
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set_value(key.trim(), value)
    }

    pub fn build(self) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = Value::Table(self.tree)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("configuration: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Table, layer: Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(l)) => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
