//! Run manifests: the resolved configuration of a run plus digests of
//! everything it read and wrote.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use egonet::io::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::run::RunSpec;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub run: RunSpec,
    /// Absolute paths.
    pub inputs: Vec<FileDigest>,
    /// Relative to the output directory, sorted.
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let body = serde_json::to_vec_pretty(self)?;
        write_atomic(&path, |w| {
            w.write_all(&body)?;
            writeln!(w)
        })
        .map_err(|e| CliError::io(&path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect()
}

/// Collects the files a run writes, so the manifest can list them.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `rel` atomically and records it.
    pub fn write<F>(&mut self, rel: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.dir.join(rel);
        write_atomic(&path, fill).map_err(|e| CliError::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let body = serde_json::to_vec_pretty(value)?;
        self.write(rel, |w| {
            w.write_all(&body)?;
            writeln!(w)
        })
    }

    pub fn digests(&self) -> Result<Vec<FileDigest>> {
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        files
            .into_iter()
            .map(|rel| Ok(FileDigest { sha256: sha256_file(&self.dir.join(&rel))?, path: rel }))
            .collect()
    }
}
