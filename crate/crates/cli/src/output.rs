//! Output locations, content hashes and file writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const OUT_ENV: &str = "BLOWUPLAB_OUT";
pub const DEFAULT_OUT: &str = "blowuplab-out";
/// Version stamped on every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// `--out`, then `$BLOWUPLAB_OUT`, then the config's `output_dir`, then the
/// default.
pub fn out_dir(flag: Option<&Path>, config: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    if let Some(p) = config.and_then(|c| c.output_dir.as_ref()) {
        return PathBuf::from(p);
    }
    PathBuf::from(DEFAULT_OUT)
}

/// First 16 hex digits of the SHA-256 of the canonical (key-sorted) JSON.
pub fn content_hash<S: Serialize>(value: &S) -> String {
    let canonical = serde_json::to_value(value).expect("serializable");
    let text = serde_json::to_string(&canonical).expect("serializable");
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

/// Hash of the experiment itself; the output location does not enter.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output_dir = None;
    content_hash(&c)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source: e }
        }
    })
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and rows of preformatted fields.
pub fn write_csv<W: std::io::Write>(sink: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    write_csv(std::io::BufWriter::new(file), header, rows).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}
