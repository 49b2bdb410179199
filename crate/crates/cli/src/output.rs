//! CSV building, artifact writing and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use kernelflow_core::io::{format_f64, to_json_string};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{RunError, RunResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// A file produced by an experiment, held in memory until the run succeeds.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<Vec<u8>>) -> Self {
        Self { name: name.into(), contents: contents.into() }
    }

    pub fn json<T: Serialize + ?Sized>(name: impl Into<String>, value: &T) -> Self {
        let mut text = to_json_string(value).expect("artifact values serialize");
        text.push('\n');
        Self::new(name, text)
    }
}

/// CSV with `.` decimals, no grouping and LF line endings.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text, columns: header.len() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        let rendered: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Text(s) => s,
                Cell::Int(i) => i.to_string(),
                Cell::Float(x) => format_f64(x),
            })
            .collect();
        self.text.push_str(&rendered.join(","));
        self.text.push('\n');
    }

    pub fn into_artifact(self, name: impl Into<String>) -> Artifact {
        Artifact::new(name, self.text)
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($x)),*]
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes every artifact and then the manifest. On any failure the files
/// written so far are removed, and the directory too if this call created it.
pub fn write_artifacts(dir: &Path, experiment: &str, seed: Option<u64>, artifacts: &[Artifact]) -> RunResult<Manifest> {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut files = Vec::with_capacity(artifacts.len());
        for a in artifacts {
            let path = dir.join(&a.name);
            written.push(path.clone());
            fs::write(&path, &a.contents).map_err(|e| RunError::io(&path, e))?;
            files.push(ManifestEntry { path: a.name.clone(), sha256: sha256_hex(&a.contents), bytes: a.contents.len() as u64 });
        }
        let manifest = Manifest { experiment: experiment.to_string(), seed, files };
        let path = dir.join(MANIFEST_NAME);
        written.push(path.clone());
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        Ok(manifest)
    })();
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}
