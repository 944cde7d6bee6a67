//! Reading a run directory back in.

use std::path::{Path, PathBuf};

use ntn_hfl::scenario::load_scenario;
use ntn_hfl::telemetry::CSV_HEADER;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u32,
    pub accuracy: f64,
    pub avg_train_loss: f64,
    pub round_latency_s: f64,
    pub cumulative_latency_s: f64,
}

/// One run directory: its label and metrics rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub label: String,
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn last(&self) -> &MetricsRow {
        self.rows.last().expect("runs hold at least one round")
    }
}

fn malformed(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {msg}", path.display()))
}

/// Loads `<dir>/metrics.csv`. The label is the scenario name from
/// `config.resolved` plus the seed, or the directory name without it.
pub fn read_run(dir: &Path) -> Result<RunMetrics, CliError> {
    let path = dir.join("metrics.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| malformed(&path, e))?;
    let header = reader.headers().map_err(|e| malformed(&path, e))?;
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(malformed(&path, format!("expected header `{CSV_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| malformed(&path, e))?;
        let real = |k: usize| -> Result<f64, CliError> {
            record[k]
                .parse()
                .map_err(|_| malformed(&path, format!("line {line}: `{}` is not a number", &record[k])))
        };
        let round = record[0]
            .parse()
            .map_err(|_| malformed(&path, format!("line {line}: bad round `{}`", &record[0])))?;
        rows.push(MetricsRow {
            round,
            accuracy: real(1)?,
            avg_train_loss: real(2)?,
            round_latency_s: real(3)?,
            cumulative_latency_s: real(4)?,
        });
    }
    if rows.is_empty() {
        return Err(malformed(&path, "no rounds recorded"));
    }
    let label = match load_scenario(dir.join("config.resolved")) {
        Ok(cfg) => format!("{}-{}", cfg.name, cfg.seed),
        Err(_) => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
    };
    Ok(RunMetrics {
        label,
        dir: dir.to_path_buf(),
        rows,
    })
}
