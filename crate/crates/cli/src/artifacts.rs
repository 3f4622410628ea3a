//! Output files and the per-command manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
const DATASET_FILES: [&str; 4] = ["tweets.jsonl", "events.jsonl", "users.jsonl", "meta.json"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hashes of the dataset files present in `dir`.
pub fn dataset_hashes(dir: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for f in DATASET_FILES {
        let p = dir.join(f);
        if p.exists() {
            out.insert(f.to_string(), hash_file(&p)?);
        }
    }
    Ok(out)
}

/// Collects the files a command writes and seals them with a manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Records a file written by other means.
    pub fn track(&mut self, name: impl Into<String>) {
        self.files.push(name.into());
    }

    pub fn write(&mut self, name: &str, body: &[u8]) -> anyhow::Result<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        self.track(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`: command, config echo, input hashes and the
    /// hash of every tracked output. No timestamps.
    pub fn seal(
        self,
        command: &str,
        config: serde_json::Value,
        inputs: BTreeMap<String, String>,
    ) -> anyhow::Result<PathBuf> {
        let mut outputs = BTreeMap::new();
        for f in &self.files {
            outputs.insert(f.clone(), hash_file(&self.root.join(f))?);
        }
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
        });
        let path = self.root.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_lists_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.txt", b"abc").unwrap();
        out.write_json("sub/b.json", &serde_json::json!({"x": 1})).unwrap();
        let path = out.seal("test", serde_json::json!({}), BTreeMap::new()).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(m["outputs"]["a.txt"], sha256_hex(b"abc"));
        assert!(m["outputs"]["sub/b.json"].is_string());
    }
}
