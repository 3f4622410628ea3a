//! Run configuration: a TOML file, overridden by `section.key=value` pairs.

use std::path::{Path, PathBuf};

use hgat::corpus::SyntheticSpec;
use hgat::graph::GraphConfig;
use hgat::model::ModelConfig;
use hgat::train::{RunSettings, SweepMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::failure::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub mode: SweepMode,
    /// Defaults per mode when absent.
    pub checkpoints: Option<Vec<f64>>,
    pub reuse_model: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            mode: SweepMode::Count,
            checkpoints: None,
            reuse_model: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Dataset directory.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Whitespace-separated word vectors.
    pub pretrained: Option<PathBuf>,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synthetic: SyntheticSpec,
    pub sweep: SweepSection,
}

/// One `key=value` override with a dotted key.
pub type Override = (String, toml::Value);

/// Parses `section.key=value`. The value is read as a TOML value when it
/// parses as one, otherwise as a bare string.
pub fn parse_override(s: &str) -> Result<Override, ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{s}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError(format!("override `{s}` has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn apply(table: &mut toml::Table, (key, value): Override) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

/// Rejects keys the config does not know. Sections tolerate missing keys
/// through defaults, so typos would otherwise be silently ignored.
fn check_known(input: &toml::Table, known: &serde_json::Value, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in input {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if path == "train.seed" {
            return Err(ConfigError("set `seed` at the top level, not under [train]".into()));
        }
        let Some(sub) = known.get(k) else {
            return Err(ConfigError(format!("unknown config key `{path}`")));
        };
        if let (toml::Value::Table(t), serde_json::Value::Object(_)) = (v, sub) {
            check_known(t, sub, &path)?;
        }
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: Vec<Override>) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply(&mut table, o)?;
        }
        let known = serde_json::to_value(RunConfig {
            seed: Some(0),
            data: Some(PathBuf::new()),
            out: Some(PathBuf::new()),
            pretrained: Some(PathBuf::new()),
            sweep: SweepSection {
                checkpoints: Some(Vec::new()),
                ..SweepSection::default()
            },
            ..RunConfig::default()
        })?;
        check_known(&table, &known, "")?;
        let mut cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        if let Some(s) = cfg.seed {
            cfg.train.seed = s;
        }
        cfg.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        cfg.model.validate().map_err(|e| ConfigError(format!("invalid model config: {e}")))?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError("a seed is required (`--seed N` or `seed = N`)".into()))
    }

    pub fn out(&self) -> Result<&Path, ConfigError> {
        self.out
            .as_deref()
            .ok_or_else(|| ConfigError("an output directory is required (`--out DIR` or `out = ...`)".into()))
    }

    pub fn data(&self) -> Result<&Path, ConfigError> {
        self.data
            .as_deref()
            .ok_or_else(|| ConfigError("a dataset directory is required (`--data DIR` or `data = ...`)".into()))
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            graph: self.graph.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
        }
    }

    /// The config as echoed into manifests; the output path is left out so
    /// runs into different directories stay comparable.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out");
        }
        v
    }
}
