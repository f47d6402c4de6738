//! Output directory bookkeeping: CSV tables, SVG charts and the run manifest.
//!
//! Every file is rendered in memory, hashed and then written, so the manifest can
//! list a digest per output. Nothing time- or host-dependent is recorded, which
//! keeps all files a function of the configuration and the seed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Shortest representation that round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<OutputFile>,
    pub results: Map<String, Value>,
}

impl Outputs {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            results: Map::new(),
        })
    }

    pub fn record(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// RFC-4180 table with a header row.
    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write(name, &bytes)
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `prefix_1 … prefix_m` for each prefix.
pub fn block_columns(prefixes: &[&str], m: usize) -> Vec<String> {
    prefixes
        .iter()
        .flat_map(|p| (1..=m).map(move |l| format!("{p}_{l}")))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ConfigError,
    RuntimeError,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub status: Status,
    pub failure: Option<String>,
    pub mode: Option<&'static str>,
    pub config_sha256: Option<String>,
    pub master_seed: Option<u64>,
    pub results: Map<String, Value>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(status: Status) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            status,
            failure: None,
            mode: None,
            config_sha256: None,
            master_seed: None,
            results: Map::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)
    }
}
