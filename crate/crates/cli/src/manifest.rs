//! Run manifests: `key = value` lines naming the configuration, its hash,
//! the seed and every output file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.txt";

/// SHA-256 over `"blob <len>\0" + content`, as in git object ids.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (i, o) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "output.{i} = {o}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut m = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Io(format!("manifest line {}: expected key = value", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.starts_with("output.") {
                m.outputs.push(v.to_string());
            } else {
                m.set(k, v);
            }
        }
        Ok(m)
    }

    /// Load a manifest from a file or from a run directory containing one.
    /// Returns the manifest and the directory its outputs are relative to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::MissingOutput(format!("{}: {e}", file.display())))?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text)?, dir))
    }
}
