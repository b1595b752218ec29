//! Metrics documents and the run manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thyreg_core::metrics::RunMetrics;
use thyreg_core::scenario::{ControllerSettings, Mode, ScenarioKind, ScenarioRun};
use thyreg_core::sim::RunStatus;
use thyreg_core::{HormoneState, ParameterSet};

use crate::config::{Config, ConfigFile};
use crate::record::{write_csv, RecordError};

/// SHA-256 of the canonical TOML of `file`, hex encoded.
pub fn config_hash(file: &ConfigFile) -> String {
    format!("{:x}", Sha256::digest(file.to_toml().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub status: RunStatus,
    pub setpoint: HormoneState,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config_source: String,
    pub overrides: Vec<String>,
    pub record: String,
    pub metrics: String,
    pub status: RunStatus,
    pub degraded_solves: usize,
}

pub fn stem(kind: ScenarioKind, mode: Mode) -> String {
    format!("{}_{}", kind.name(), mode.name())
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, OutputError> {
    fs::File::create(path).map(BufWriter::new).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

/// Where to write and what to record about the configuration.
pub struct OutputSpec<'a> {
    pub dir: &'a Path,
    pub config: &'a Config,
    pub config_source: &'a str,
    pub overrides: &'a [String],
}

/// Writes `<stem>.csv`, `<stem>.metrics.json` and `<stem>.manifest.json`.
pub fn write_run(run: &ScenarioRun, spec: &OutputSpec<'_>) -> Result<Manifest, OutputError> {
    let sc = &run.record.scenario;
    let stem = stem(sc.kind, sc.mode);
    fs::create_dir_all(spec.dir).map_err(|source| OutputError::Io { path: spec.dir.to_path_buf(), source })?;
    let csv_name = format!("{stem}.csv");
    let metrics_name = format!("{stem}.metrics.json");
    write_csv(&run.record, &run.models.plant, create(&spec.dir.join(&csv_name))?)?;
    let report = MetricsReport {
        scenario: sc.kind.name().to_string(),
        mode: sc.mode.name().to_string(),
        seed: sc.seed,
        status: run.record.status.clone(),
        setpoint: run.models.setpoint,
        metrics: run.metrics.clone(),
    };
    serde_json::to_writer_pretty(create(&spec.dir.join(&metrics_name))?, &report)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: report.scenario.clone(),
        mode: report.mode.clone(),
        seed: sc.seed,
        config_sha256: config_hash(&spec.config.file),
        config_source: spec.config_source.to_string(),
        overrides: spec.overrides.to_vec(),
        record: csv_name,
        metrics: metrics_name,
        status: run.record.status.clone(),
        degraded_solves: run.record.solves.iter().filter(|s| !s.converged).count(),
    };
    serde_json::to_writer_pretty(create(&spec.dir.join(format!("{stem}.manifest.json")))?, &manifest)?;
    Ok(manifest)
}

/// Runs the given modes of a scenario, one thread per mode.
pub fn run_modes(
    params: &ParameterSet,
    settings: &ControllerSettings,
    config: &Config,
    kind: ScenarioKind,
    modes: &[Mode],
    seed: u64,
) -> Vec<thyreg_core::Result<ScenarioRun>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&mode| {
                let sc = config.scenario(kind, mode, seed);
                s.spawn(move || thyreg_core::scenario::run_scenario(params, &sc, settings))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    })
}
