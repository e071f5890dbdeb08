//! Buffered outputs, committed atomically together with a run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Everything needed to reproduce an output set.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub notes: serde_json::Value,
}

impl Manifest {
    pub fn new(subcommand: &'static str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: serde_json::to_value(config).context("serializing run configuration")?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: serde_json::Value::Null,
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            file: file_name(path),
            sha256: sha256_hex(bytes),
        });
    }
}

/// Reads an input file and records its digest.
pub fn read_input(manifest: &mut Manifest, path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| {
        anyhow::Error::new(chaostrack::Error::Io(e)).context(format!("reading {}", path.display()))
    })?;
    manifest.input(path, &bytes);
    Ok(bytes)
}

/// Files held in memory until every computation has succeeded.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    /// Writes every file, then the manifest at `manifest_path`. Each file
    /// is written to a temporary sibling and renamed into place.
    pub fn commit(self, mut manifest: Manifest, manifest_path: &Path) -> Result<()> {
        for (path, bytes) in &self.files {
            manifest.outputs.push(FileDigest {
                file: file_name(path),
                sha256: sha256_hex(bytes),
            });
        }
        let mut json = serde_json::to_vec_pretty(&manifest).context("serializing manifest")?;
        json.push(b'\n');
        for (path, bytes) in &self.files {
            write_atomic(path, bytes)?;
            log::info!("wrote {}", path.display());
        }
        write_atomic(manifest_path, &json)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| anyhow::Error::new(chaostrack::Error::Io(e)).context(format!("creating {}", dir.display())))?;
    let wrap = |e: std::io::Error| anyhow::Error::new(chaostrack::Error::Io(e)).context(format!("writing {}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// `<path>.manifest.json`.
pub fn manifest_for(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// `dir/stem.suffix` for a sibling of `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Comma-joined shortest round-trip representations.
pub fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
