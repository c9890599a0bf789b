//! CSV records and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::harness::TrialRecord;
use crate::HarnessError;

/// Column order of the records CSV.
pub const CSV_HEADER: [&str; 17] = [
    "setting",
    "tie",
    "cell",
    "trial",
    "seed",
    "epsilon",
    "budget_multiplier",
    "n_total_queries",
    "choice",
    "value_at_hat",
    "relaxed_value_at_hat",
    "best_value",
    "gap",
    "leader_ok",
    "follower_ok",
    "wall_time_ms",
    "error",
];

pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn csv_bytes(records: &[TrialRecord]) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    if records.is_empty() {
        buf.extend_from_slice(CSV_HEADER.join(",").as_bytes());
        buf.push(b'\n');
    } else {
        write_csv(records, &mut buf)?;
    }
    Ok(buf)
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Config(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// SHA-256 over `blob <len>\0<bytes>`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub records: usize,
    pub csv: PathBuf,
    pub csv_hash: String,
}

/// Writes the CSV and `<csv>.manifest.json`; returns the manifest path.
pub fn persist(cfg: &ExperimentConfig, records: &[TrialRecord], csv_path: &Path) -> Result<PathBuf, HarnessError> {
    let bytes = csv_bytes(records)?;
    std::fs::write(csv_path, &bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", csv_path.display())))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        records: records.len(),
        csv: csv_path.file_name().map(PathBuf::from).unwrap_or_default(),
        csv_hash: content_hash(&bytes),
    };
    let mut path = csv_path.as_os_str().to_owned();
    path.push(".manifest.json");
    let path = PathBuf::from(path);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}
