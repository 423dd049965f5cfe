//! Result files: CSV tables, JSON reports and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{unenforced_hypotheses, ExperimentConfig, OutputFormat};
use crate::{CliError, CliResult};

/// Collects the files written by one command.
pub struct Sink {
    dir: PathBuf,
    format: OutputFormat,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: impl Into<PathBuf>, format: OutputFormat) -> CliResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir,
            format,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes `rows` as `name.csv`; with the JSON format also as `name.rows.json`.
    pub fn table<T: Serialize>(&mut self, name: &str, rows: &[T], header: &[&str]) -> CliResult<PathBuf> {
        let path = self.dir.join(format!("{name}.csv"));
        write_csv(&path, rows, header)?;
        self.written.push(format!("{name}.csv"));
        if self.format == OutputFormat::Json {
            self.json(&format!("{name}.rows"), &rows)?;
        }
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.dir.join(format!("{name}.json"));
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.written.push(format!("{name}.json"));
        Ok(path)
    }
}

/// Writes a CSV with an explicit header, so that an empty table still
/// carries its columns.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

/// SHA-256 of the compact JSON form of the resolved config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub files: Vec<String>,
    pub unenforced_hypotheses: Vec<String>,
    pub config: &'a ExperimentConfig,
}

pub fn write_manifest(sink: &mut Sink, command: &str, config: &ExperimentConfig, wall_time_s: f64) -> CliResult<PathBuf> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config_hash: config_hash(config),
        wall_time_s,
        threads: rayon::current_num_threads(),
        files: sink.written().to_vec(),
        unenforced_hypotheses: unenforced_hypotheses(config),
        config,
    };
    sink.json(&format!("{command}.manifest"), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv::<(f64, f64)>(&p, &[], &["a", "b"]).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "a,b\n");
    }

    #[test]
    fn hash_tracks_config() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
