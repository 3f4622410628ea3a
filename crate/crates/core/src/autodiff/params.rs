use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, TensorError};

pub const CHECKPOINT_FORMAT: &str = "hgat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named learnable matrices, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
}

/// On-disk checkpoint container.
///
/// ```json
/// {"format": "hgat-checkpoint", "version": 1, "meta": {...},
///  "params": [{"name": "cls.W", "shape": [32, 4], "values": [...]}]}
/// ```
///
/// `values` are row-major; `meta` is free-form (the model config echo).
#[derive(Debug, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    #[serde(default)]
    meta: serde_json::Value,
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(Matrix::len).sum()
    }

    pub fn to_json(&self, meta: serde_json::Value) -> String {
        let container = Container {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            meta,
            params: self
                .params
                .iter()
                .map(|(name, m)| Entry {
                    name: name.clone(),
                    shape: [m.rows(), m.cols()],
                    values: m.as_slice().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&container).expect("checkpoint serialization")
    }

    /// Parses a checkpoint, returning the parameters and the `meta` block.
    pub fn from_json(text: &str) -> Result<(Self, serde_json::Value), TensorError> {
        let c: Container = serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(TensorError::Checkpoint(format!("unexpected format `{}`", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        let mut store = Self::new();
        for e in c.params {
            let m = Matrix::from_vec(e.shape[0], e.shape[1], e.values)
                .map_err(|_| TensorError::Checkpoint(format!("`{}`: values do not match shape", e.name)))?;
            if store.params.insert(e.name.clone(), m).is_some() {
                return Err(TensorError::Checkpoint(format!("duplicate parameter `{}`", e.name)));
            }
        }
        Ok((store, c.meta))
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> std::io::Result<()> {
        std::fs::write(path, self.to_json(meta))
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), TensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}
