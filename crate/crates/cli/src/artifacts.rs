use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sort_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Pretty JSON with keys sorted at every level, newline-terminated.
pub fn sorted_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let v = sort_keys(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Output directory that remembers every file written to it.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn text(&mut self, name: &str, content: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let s = sorted_json(value)?;
        self.text(name, &s)
    }

    /// Header from the first row's field names.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.text(name, std::str::from_utf8(&bytes)?)
    }

    pub fn csv_records(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.text(name, std::str::from_utf8(&bytes)?)
    }
}

/// One embedded check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ConfigError,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub experiment: String,
    /// SHA-256 of the resolved config text; empty when the config did not resolve.
    pub config_hash: String,
    pub code_version: String,
    pub seed: Option<u64>,
    pub out_dir: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputEntry>,
    pub assertions: Vec<Assertion>,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Hash every listed output as it is on disk.
pub fn output_entries(dir: &Path, names: &[String]) -> Vec<OutputEntry> {
    names
        .iter()
        .map(|n| OutputEntry {
            path: n.clone(),
            sha256: fs::read(dir.join(n)).map(|b| sha256_hex(&b)).unwrap_or_default(),
        })
        .collect()
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST), sorted_json(manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_sorted_recursively() {
        let v = serde_json::json!({"b": 1, "a": {"d": [{"z": 0, "y": 1}], "c": 2}});
        let s = sorted_json(&v).unwrap();
        let a = s.find("\"a\"").unwrap();
        let b = s.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(s.find("\"y\"").unwrap() < s.find("\"z\"").unwrap());
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn csv_has_header_and_trailing_newline() {
        #[derive(Serialize)]
        struct Row {
            step: usize,
            value: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path()).unwrap();
        a.csv("r.csv", &[Row { step: 0, value: 0.5 }, Row { step: 1, value: 1e-12 }]).unwrap();
        let s = fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(s, "step,value\n0,0.5\n1,1e-12\n");
        assert_eq!(a.outputs(), ["r.csv"]);
    }
}
