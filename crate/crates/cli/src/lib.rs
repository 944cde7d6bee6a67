//! `ntn-hfl` command line: run scenarios, compare runs and plot them.

mod plot;
mod results;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use ntn_hfl::protocol::run_simulation;
use ntn_hfl::scenario::{apply_override, resolve_scenario, to_canonical};
use ntn_hfl::telemetry::{export_metrics, ExportFormat};
use ntn_hfl::Error;

pub use plot::render_svg;
pub use results::{read_run, MetricsRow, RunMetrics};

/// Environment variable replacing `./results` as the default output root.
pub const RESULTS_DIR_ENV: &str = "NTN_HFL_RESULTS_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Scenario { .. } | Error::Ingestion { .. } => Self::Config(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ntn-hfl", version, about = "Hierarchical federated learning over a ground/HAPS/satellite network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file.
    Run {
        /// terrestrial_only, satellite_rf, satellite_fso, distributed_haps, or a path.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: ./results/<scenario>-<seed>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a scenario key, e.g. `--set train.epochs_per_round=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize two or more run directories.
    Compare {
        #[arg(num_args = 2.., required = true)]
        dirs: Vec<PathBuf>,
        /// Directory receiving the merged `comparison.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one metric of several runs as an SVG line chart.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Accuracy,
    Loss,
    Latency,
}

impl Metric {
    pub fn value(self, row: &MetricsRow) -> f64 {
        match self {
            Self::Accuracy => row.accuracy,
            Self::Loss => row.avg_train_loss,
            Self::Latency => row.cumulative_latency_s,
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Self::Accuracy => "accuracy",
            Self::Loss => "average training loss",
            Self::Latency => "cumulative latency (s)",
        }
    }
}

/// Parses `args` (program name first) and executes the command. Results go
/// to `stdout`, diagnostics to `stderr`; the return value is the exit code.
pub fn run_cli<I, T>(args: I, results_root: Option<PathBuf>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            overrides,
        } => cmd_run(&scenario, seed, out, &overrides, results_root, stdout),
        Command::Compare { dirs, out } => cmd_compare(&dirs, out.as_deref(), stdout),
        Command::Plot { dirs, metric, out } => cmd_plot(&dirs, metric, &out),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn cmd_run(
    scenario: &str,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: &[String],
    results_root: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = resolve_scenario(scenario)?;
    for o in overrides {
        apply_override(&mut cfg, o)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = out.unwrap_or_else(|| {
        results_root
            .unwrap_or_else(|| PathBuf::from("results"))
            .join(format!("{}-{}", cfg.name, cfg.seed))
    });
    let result = run_simulation(&cfg)?;
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    export_metrics(&result.telemetry, ExportFormat::Csv, out.join("metrics.csv"))?;
    export_metrics(&result.telemetry, ExportFormat::Json, out.join("telemetry.json"))?;
    let resolved = out.join("config.resolved");
    std::fs::write(&resolved, to_canonical(&cfg)).map_err(|e| io_err(&resolved, e))?;
    let last = result.per_round().last().expect("at least one round");
    let _ = writeln!(
        stdout,
        "{} seed={} rounds={} accuracy={:.4} avg_train_loss={:.4} total_latency_s={:.6} out={}",
        cfg.name,
        cfg.seed,
        result.per_round().len(),
        last.global_accuracy,
        last.avg_train_loss,
        last.cumulative_latency_s,
        out.display()
    );
    Ok(())
}

/// Merged per-round table with a leading scenario column.
pub fn merged_csv(runs: &[RunMetrics]) -> String {
    let mut out = format!("scenario,{}\n", ntn_hfl::telemetry::CSV_HEADER);
    for run in runs {
        for r in &run.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                run.label, r.round, r.accuracy, r.avg_train_loss, r.round_latency_s, r.cumulative_latency_s
            );
        }
    }
    out
}

/// Final accuracy, loss and total latency per run, as aligned columns.
pub fn summary_table(runs: &[RunMetrics]) -> String {
    let width = runs.iter().map(|r| r.label.len()).max().unwrap_or(0).max("scenario".len());
    let mut out = format!(
        "{:<width$}  {:>14}  {:>20}  {:>16}\n",
        "scenario", "final_accuracy", "final_avg_train_loss", "total_latency_s"
    );
    for run in runs {
        let last = run.last();
        let _ = writeln!(
            out,
            "{:<width$}  {:>14.6}  {:>20.6}  {:>16.6}",
            run.label, last.accuracy, last.avg_train_loss, last.cumulative_latency_s
        );
    }
    out
}

fn cmd_compare(dirs: &[PathBuf], out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let runs = dirs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>, _>>()?;
    if let Some(out) = out {
        std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let path = out.join("comparison.csv");
        std::fs::write(&path, merged_csv(&runs)).map_err(|e| io_err(&path, e))?;
    }
    let _ = write!(stdout, "{}", summary_table(&runs));
    Ok(())
}

fn cmd_plot(dirs: &[PathBuf], metric: Metric, out: &Path) -> Result<(), CliError> {
    let runs = dirs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>, _>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(out, render_svg(&runs, metric)).map_err(|e| io_err(out, e))
}
