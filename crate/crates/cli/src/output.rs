//! Result envelopes and atomic output writing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use fes_core::analysis::ConcentrationVector;
use fes_core::SpectrumEstimate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{CliError, CliResult};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub name: String,
    pub unit: String,
    pub n_averages: usize,
    pub window: String,
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpectrumRecord {
    pub fn new(name: &str, unit: &str, est: &SpectrumEstimate) -> Self {
        SpectrumRecord {
            name: name.to_string(),
            unit: unit.to_string(),
            n_averages: est.n_averages,
            window: est.window_label.clone(),
            freqs: est.freqs.clone(),
            values: est.values.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

/// Everything a command reports. Apart from `timing`, the content is a pure
/// function of the resolved configuration, the inputs and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub command: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub resolved_config: serde_json::Value,
    /// SHA-256 of files read besides the configuration.
    pub inputs: BTreeMap<String, String>,
    pub spectra: Vec<SpectrumRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentrations: Option<ConcentrationVector>,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ResultEnvelope {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        ResultEnvelope {
            command: command.to_string(),
            config_hash: cfg.hash(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            resolved_config: cfg.resolved_json(),
            inputs: BTreeMap::new(),
            spectra: Vec::new(),
            concentrations: None,
            metrics: BTreeMap::new(),
            files: Vec::new(),
            timing: None,
        }
    }

    /// Records a metric, dropping non-finite values (JSON has no encoding for them).
    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.into(), value);
        }
    }

    /// The envelope without timing, as written to disk.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut copy = self.clone();
        copy.timing = None;
        serde_json::to_vec_pretty(&copy).expect("envelope serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files staged in memory and written together once the command has
/// finished computing.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    format: OutputFormat,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: PathBuf, format: OutputFormat) -> Self {
        Outputs {
            dir,
            format,
            files: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn format(&self) -> OutputFormat {
        self.format
    }

    /// Stages a file regardless of the output format.
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Stages a CSV sidecar if the format includes CSV.
    pub fn add_csv(&mut self, name: &str, bytes: Vec<u8>) {
        if self.format.csv() {
            self.add(name, bytes);
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Adds the envelope (when JSON is enabled) and writes every staged file.
    pub fn finish(
        mut self,
        mut envelope: ResultEnvelope,
        wall_clock_s: f64,
    ) -> CliResult<Vec<PathBuf>> {
        let envelope_name = format!("{}.json", envelope.command);
        envelope.files = self.names();
        if self.format.json() {
            envelope.files.push(envelope_name.clone());
            envelope.timing = Some(Timing { wall_clock_s });
            let bytes = serde_json::to_vec_pretty(&envelope).expect("envelope serializes");
            self.add(&envelope_name, bytes);
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(self.dir.display(), e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir.display(), e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(path.display(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path.display(), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(path.display(), e.error))?;
    Ok(())
}

/// CSV with a header row and one row per record.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}
