//! Experiment manifests: parameters, output files with content hashes and
//! the outcome of every acceptance check.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: String,
    pub parameters: BTreeMap<String, Value>,
    pub outputs: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ExperimentManifest {
    pub fn new(experiment: &str) -> Self {
        ExperimentManifest {
            experiment: experiment.to_string(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.passed &= pass;
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    /// Records `path`, which must live under `root`, with its hash.
    pub fn output(&mut self, root: &Path, path: &Path) -> Result<(), Failure> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.outputs.push(OutputFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Every listed output exists under `root` and still has its hash.
    pub fn verify(&self, root: &Path) -> Result<bool, Failure> {
        for o in &self.outputs {
            let p: PathBuf = root.join(&o.path);
            if !p.exists() || sha256_file(&p)? != o.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
