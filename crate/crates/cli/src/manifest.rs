//! Run manifests: what went in, what came out, and when.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Hash of `blob <len>\0<content>`, the object framing git uses, with
/// SHA-256 as the digest.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> std::io::Result<String> {
    Ok(blob_hash(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let content = fs::read(path)?;
        Ok(Self { path: path.to_path_buf(), bytes: content.len() as u64, sha256: blob_hash(&content) })
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    /// The fully resolved config, as TOML.
    pub config: String,
    pub inputs: Vec<FileEntry>,
    pub artifacts: Vec<FileEntry>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: String) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: std::env::args().collect(),
            seed,
            threads: rayon::current_num_threads(),
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started_unix: unix_seconds(),
            finished_unix: None,
        }
    }

    /// Records an input file, or every regular file directly inside a directory.
    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|p| p.is_file());
            files.sort();
            for f in files {
                self.inputs.push(FileEntry::of(&f)?);
            }
        } else {
            self.inputs.push(FileEntry::of(path)?);
        }
        Ok(())
    }

    pub fn add_artifact(&mut self, path: &Path) -> std::io::Result<()> {
        self.artifacts.push(FileEntry::of(path)?);
        Ok(())
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finish_as(dir, MANIFEST_FILE)
    }

    pub fn finish_as(mut self, dir: &Path, file_name: &str) -> std::io::Result<PathBuf> {
        self.finished_unix = Some(unix_seconds());
        let path = dir.join(file_name);
        let text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(std::io::Error::other)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, content: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
