//! Run manifests: the resolved configuration together with a digest of
//! every file a command wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Result, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    BudgetExceeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Digests of inputs read besides the configuration, such as grid files.
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default)]
    pub files: Vec<FileDigest>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| RunError::io(path, e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((bytes, hex::encode(hasher.finalize())))
}

/// Output directory that records every file written through it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `rel` through `fill` and records it in the inventory.
    pub fn write<F>(&mut self, rel: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| RunError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|e| RunError::io(&path, e))?;
        if !self.written.iter().any(|p| p == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    pub fn write_string(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.root.join(rel);
        self.write(rel, |w| w.write_all(text.as_bytes()).map_err(|e| RunError::io(&path, e)))
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<()> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| RunError::io(rel, e))
        })
    }

    /// Digests of everything written so far, sorted by path.
    pub fn inventory(&self) -> Result<Vec<FileDigest>> {
        let mut paths = self.written.clone();
        paths.sort();
        paths
            .into_iter()
            .map(|rel| {
                let (bytes, sha256) = sha256_file(&self.root.join(&rel))?;
                Ok(FileDigest { path: rel, bytes, sha256 })
            })
            .collect()
    }
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig, started_unix: f64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            started_unix,
            finished_unix: started_unix,
            status: RunStatus::Complete,
            message: None,
            files: Vec::new(),
        }
    }

    /// Fills in the inventory and end time, then writes `manifest.json`.
    pub fn finish(mut self, out: &OutputDir, status: RunStatus, message: Option<String>) -> Result<Self> {
        self.files = out.inventory()?;
        self.status = status;
        self.message = message;
        self.finished_unix = unix_now();
        let path = out.root().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|_| RunError::Inventory { path: path.clone(), problem: "is missing".into() })?;
        serde_json::from_str(&text).map_err(|e| RunError::Inventory { path, problem: format!("is unreadable: {e}") })
    }

    /// Checks that every inventoried file exists with its recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.path);
            if !path.is_file() {
                return Err(RunError::Inventory { path, problem: "is listed in the manifest but missing".into() });
            }
            let (bytes, sha) = sha256_file(&path)?;
            if bytes != f.bytes || sha != f.sha256 {
                return Err(RunError::Inventory { path, problem: "does not match its recorded digest".into() });
            }
        }
        Ok(())
    }

    pub fn digest_of(&self, rel: &str) -> Option<&str> {
        self.files.iter().find(|f| f.path == rel).map(|f| f.sha256.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_string("a/b.txt", "abc").unwrap();
        let inv = out.inventory().unwrap();
        assert_eq!(inv.len(), 1);
        assert_eq!(inv[0].path, "a/b.txt");
        assert_eq!(inv[0].bytes, 3);
        assert_eq!(inv[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
