use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::TelemetryStore;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,accuracy,avg_train_loss,round_latency_s,cumulative_latency_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown export format `{other}` (valid: csv, json)"))),
        }
    }
}

/// Reals with 17 significant digits, which round-trip exactly.
pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn metrics_csv(store: &TelemetryStore) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in store.rounds() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.round_index,
            fmt_real(m.global_accuracy),
            fmt_real(m.avg_train_loss),
            fmt_real(m.round_latency_s),
            fmt_real(m.cumulative_latency_s)
        );
    }
    out
}

struct RealFormatter;

impl serde_json::ser::Formatter for RealFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_real(value).as_bytes())
    }
}

pub fn metrics_json(store: &TelemetryStore) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RealFormatter);
    store
        .serialize(&mut ser)
        .map_err(|e| Error::Contract(format!("telemetry serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn parse_metrics_json(text: &str) -> Result<TelemetryStore> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed telemetry json: {e}")))
}

pub fn export_metrics(store: &TelemetryStore, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ExportFormat::Csv => metrics_csv(store),
        ExportFormat::Json => metrics_json(store)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::tests::store_with_rounds;

    #[test]
    fn csv_has_header_and_one_row_per_round() {
        let csv = metrics_csv(&store_with_rounds(10));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("0,5.0000000000000000e-1,"));
    }

    #[test]
    fn json_round_trip() {
        let store = store_with_rounds(4);
        let text = metrics_json(&store).unwrap();
        assert_eq!(parse_metrics_json(&text).unwrap(), store);
    }

    #[test]
    fn exports_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_rounds(3);
        for fmt in [ExportFormat::Csv, ExportFormat::Json] {
            let a = dir.path().join("a");
            let b = dir.path().join("b");
            export_metrics(&store, fmt, &a).unwrap();
            export_metrics(&store, fmt, &b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = export_metrics(&store_with_rounds(1), ExportFormat::Csv, "/nonexistent/dir/m.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/m.csv"));
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<ExportFormat>().unwrap(), ExportFormat::Csv);
        assert!("xml".parse::<ExportFormat>().is_err());
    }
}
