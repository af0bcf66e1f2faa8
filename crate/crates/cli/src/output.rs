//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Files written during one run. Dropping without [`OutputDir::keep`]
/// removes them again.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    kept: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            created_root,
            written: Vec::new(),
            kept: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Relative names of the files written so far, in order.
    pub fn files(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.strip_prefix(&self.root).unwrap_or(p).display().to_string())
            .collect()
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(name);
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        fs::write(path, bytes)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn csv<I>(&mut self, name: &str, header: &str, rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// Marks the outputs as complete.
    pub fn keep(mut self) {
        self.kept = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.kept {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one run. Timestamps are Unix milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    /// Canonical configuration text.
    pub config: String,
    pub outputs: Vec<OutputEntry>,
    pub started_ms: u128,
    pub finished_ms: u128,
    pub wall_clock_seconds: f64,
    /// Invariant violations found by the run, if any.
    pub violations: Vec<String>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

pub fn file_sha256(path: &Path) -> io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn entries(out: &OutputDir) -> io::Result<Vec<OutputEntry>> {
        out.files()
            .into_iter()
            .map(|name| {
                let (sha256, bytes) = file_sha256(&out.root().join(&name))?;
                Ok(OutputEntry { path: name, sha256, bytes })
            })
            .collect()
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let bytes = fs::read(dir.join(MANIFEST))?;
        serde_json::from_slice(&bytes).map_err(io::Error::other)
    }
}
