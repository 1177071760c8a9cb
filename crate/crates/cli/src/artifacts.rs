//! Output directory bookkeeping: content hashes, plot series and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Git-style object hash: SHA-256 of `blob <len>\0` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hash of the resolved configuration, independent of where the output goes.
pub fn inputs_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    content_hash(c.to_toml().as_bytes())
}

/// Writes files below one root and remembers their hashes.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let io = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(&path, bytes).map_err(io)?;
        self.hashes.insert(rel.to_string(), content_hash(bytes));
        Ok(())
    }

    /// Buffers a core CSV writer and stores the result.
    pub fn write_with(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> quasilin_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    /// Two-column gnuplot series with a commented header.
    pub fn write_series(
        &mut self,
        rel: &str,
        header: &str,
        points: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<(), CliError> {
        let mut s = format!("# {header}\n");
        for (x, y) in points {
            let _ = writeln!(s, "{x:.17e} {y:.17e}");
        }
        self.write_bytes(rel, s.as_bytes())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub status: &'static str,
    pub inputs_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: &'a RunConfig,
    pub summary: &'a toml::Table,
    pub artifacts: &'a BTreeMap<String, String>,
}

impl Manifest<'_> {
    pub fn write(&self, root: &Path) -> Result<(), CliError> {
        let path = root.join("manifest.toml");
        let text = toml::to_string(self).expect("manifest is representable as TOML");
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}
