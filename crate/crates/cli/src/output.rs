//! CSV tables and their metadata sidecars.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// An in-memory table, written only after the whole command has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self { name, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Formats a float with the shortest representation that round-trips.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'a str,
    table: &'a str,
    rows: usize,
    config_path: String,
    config_sha256: String,
    seed: u64,
    version: &'a str,
    threads: usize,
    unix_time: u64,
}

pub struct RunInfo<'a> {
    pub command: &'a str,
    pub config_path: &'a Path,
    pub config_text: &'a str,
    pub seed: u64,
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta.json`; returns the CSV paths.
pub fn write_tables(dir: &Path, tables: &[Table], info: &RunInfo) -> Result<Vec<PathBuf>, CliError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| CliError::Runtime(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    let digest = hex(&Sha256::digest(info.config_text.as_bytes()));
    let unix_time = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, &e))?;
        w.write_record(&t.header).map_err(|e| io(&path, &e))?;
        for row in &t.rows {
            w.write_record(row).map_err(|e| io(&path, &e))?;
        }
        w.flush().map_err(|e| io(&path, &e))?;
        let meta = Meta {
            command: info.command,
            table: t.name,
            rows: t.rows.len(),
            config_path: info.config_path.display().to_string(),
            config_sha256: digest.clone(),
            seed: info.seed,
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            unix_time,
        };
        let meta_path = dir.join(format!("{}.meta.json", t.name));
        let text = serde_json::to_string_pretty(&meta).map_err(|e| io(&meta_path, &e))?;
        std::fs::write(&meta_path, text + "\n").map_err(|e| io(&meta_path, &e))?;
        written.push(path);
    }
    Ok(written)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
