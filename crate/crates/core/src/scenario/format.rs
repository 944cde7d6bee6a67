//! Scenario file format.
//!
//! ```text
//! # comment
//! base = "distributed_haps"     # optional, must come first
//! rounds = 10
//!
//! [train]
//! epochs_per_round = 20
//! ```
//!
//! Keys live either at top level or under a `[section]`. Values are quoted
//! strings, `true`/`false`, or numbers. A file lists overrides on top of its
//! `base` (a built-in name) or, without one, on top of the defaults. The
//! canonical form written by [`to_canonical`] lists every key in a fixed
//! order and is what the config hash covers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{builtin_scenario, DatasetSource, ScenarioConfig};
use crate::error::{Error, Result};
use crate::registry::StrategySpec;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    Bool(bool),
    /// Unparsed numeric literal; typed when assigned.
    Num(String),
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: Value,
    line: usize,
}

fn err(key: &str, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Scenario {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, Some(line_no), "unterminated section header"))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(name, Some(line_no), "invalid section name"));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(line, Some(line_no), "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(k, Some(line_no), "invalid key"));
        }
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        let v = v.trim();
        let value = if let Some(rest) = v.strip_prefix('"') {
            let s = rest
                .strip_suffix('"')
                .ok_or_else(|| err(&key, Some(line_no), "unterminated string"))?;
            if s.contains('"') {
                return Err(err(&key, Some(line_no), "strings may not contain quotes"));
            }
            Value::Str(s.to_string())
        } else if v == "true" || v == "false" {
            Value::Bool(v == "true")
        } else if !v.is_empty() && v.parse::<f64>().is_ok() {
            Value::Num(v.to_string())
        } else {
            return Err(err(&key, Some(line_no), format!("cannot parse value `{v}`")));
        };
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(err(
                &key,
                Some(line_no),
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        entries.push(Entry {
            key,
            value,
            line: line_no,
        });
    }
    Ok(entries)
}

struct Setter<'a> {
    key: &'a str,
    line: Option<usize>,
    value: &'a Value,
}

impl Setter<'_> {
    fn fail(&self, message: impl Into<String>) -> Error {
        err(self.key, self.line, message)
    }

    fn num_text(&self) -> Result<&str> {
        match self.value {
            Value::Num(s) => Ok(s),
            _ => Err(self.fail("expected a number")),
        }
    }

    fn f64(&self) -> Result<f64> {
        let v: f64 = self
            .num_text()?
            .parse()
            .map_err(|_| self.fail("expected a number"))?;
        if !v.is_finite() {
            return Err(self.fail("must be finite"));
        }
        Ok(v)
    }

    fn u64(&self) -> Result<u64> {
        self.num_text()?
            .parse()
            .map_err(|_| self.fail("expected a non-negative integer"))
    }

    fn usize(&self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| self.fail("integer too large"))
    }

    fn u32(&self) -> Result<u32> {
        u32::try_from(self.u64()?).map_err(|_| self.fail("integer too large"))
    }

    fn bool(&self) -> Result<bool> {
        match self.value {
            Value::Bool(b) => Ok(*b),
            _ => Err(self.fail("expected true or false")),
        }
    }

    fn string(&self) -> Result<String> {
        match self.value {
            Value::Str(s) => Ok(s.clone()),
            _ => Err(self.fail("expected a quoted string")),
        }
    }

    fn strategy(&self) -> Result<StrategySpec> {
        StrategySpec::parse(&self.string()?).map_err(|e| self.fail(e.to_string()))
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&self) -> Result<T> {
        self.string()?.parse().map_err(|e: Error| self.fail(e.to_string()))
    }

    /// A number, or the given keyword meaning "none".
    fn optional_f64(&self, keyword: &str) -> Result<Option<f64>> {
        match self.value {
            Value::Str(s) if s == keyword => Ok(None),
            Value::Num(_) => self.f64().map(Some),
            _ => Err(self.fail(format!("expected a number or \"{keyword}\""))),
        }
    }

    fn widths(&self) -> Result<Vec<usize>> {
        let s = self.string()?;
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|_| self.fail("expected comma-separated widths")))
            .collect()
    }
}

fn assign(cfg: &mut ScenarioConfig, key: &str, value: &Value, line: Option<usize>) -> Result<()> {
    let s = Setter { key, line, value };
    match key {
        "name" => cfg.name = s.string()?,
        "seed" => cfg.seed = s.u64()?,
        "rounds" => cfg.rounds = s.u32()?,
        "neighbor_radius" => cfg.neighbor_radius = s.usize()?,
        "multi_constellation" => cfg.multi_constellation = s.bool()?,
        "combiner" => cfg.combiner = s.strategy()?,
        "relay_mix_weight" => cfg.relay_mix_weight = s.optional_f64("auto")?,
        "target_accuracy" => cfg.target_accuracy = s.optional_f64("none")?,

        "counts.ground_clients" => cfg.counts.ground_clients = s.usize()?,
        "counts.leo_clients" => cfg.counts.leo_clients = s.usize()?,
        "counts.base_stations" => cfg.counts.base_stations = s.usize()?,
        "counts.haps" => cfg.counts.haps = s.usize()?,
        "counts.uav_relays" => cfg.counts.uav_relays = s.usize()?,
        "counts.geo_meo_relays" => cfg.counts.geo_meo_relays = s.usize()?,

        "delay.channel_s" => cfg.delay.channel_s = s.f64()?,
        "delay.bs_haps_s" => cfg.delay.bs_haps_s = s.f64()?,
        "delay.uav_s" => cfg.delay.uav_s = s.f64()?,
        "delay.haps_haps_s" => cfg.delay.haps_haps_s = s.f64()?,
        "delay.relay_s" => cfg.delay.relay_s = s.f64()?,

        "link.rf_rate_bps" => cfg.link.rf_rate_bps = s.f64()?,
        "link.fso_rate_bps" => cfg.link.fso_rate_bps = s.f64()?,
        "link.satellite_aerial_medium" => cfg.link.satellite_aerial_medium = s.parsed()?,
        "link.total_bandwidth_hz" => cfg.link.total_bandwidth_hz = s.f64()?,

        "snr.threshold_db" => cfg.snr.threshold_db = s.f64()?,
        "snr.ground_haps_min_db" => cfg.snr.ground_haps_min_db = s.f64()?,
        "snr.ground_haps_max_db" => cfg.snr.ground_haps_max_db = s.f64()?,
        "snr.ground_bs_min_db" => cfg.snr.ground_bs_min_db = s.f64()?,
        "snr.ground_bs_max_db" => cfg.snr.ground_bs_max_db = s.f64()?,
        "snr.ground_uav_min_db" => cfg.snr.ground_uav_min_db = s.f64()?,
        "snr.ground_uav_max_db" => cfg.snr.ground_uav_max_db = s.f64()?,
        "snr.leo_rf_db" => cfg.snr.leo_rf_db = s.f64()?,

        "ground.work_rate" => cfg.ground.work_rate = s.f64()?,
        "ground.max_epochs" => cfg.ground.max_epochs = s.u32()?,
        "ground.energy_per_work_j" => cfg.ground.energy_per_work_j = s.f64()?,
        "ground.tx_power_w" => cfg.ground.tx_power_w = s.f64()?,
        "ground.battery_budget_j" => cfg.ground.battery_budget_j = s.optional_f64("unlimited")?,

        "leo.work_rate" => cfg.leo.profile.work_rate = s.f64()?,
        "leo.max_epochs" => cfg.leo.profile.max_epochs = s.u32()?,
        "leo.energy_per_work_j" => cfg.leo.profile.energy_per_work_j = s.f64()?,
        "leo.tx_power_w" => cfg.leo.profile.tx_power_w = s.f64()?,
        "leo.battery_budget_j" => cfg.leo.profile.battery_budget_j = s.optional_f64("unlimited")?,
        "leo.window_period_s" => cfg.leo.window_period_s = s.f64()?,
        "leo.window_width_s" => cfg.leo.window_width_s = s.f64()?,
        "leo.window_offset_s" => cfg.leo.window_offset_s = s.f64()?,
        "leo.window_offset_step_s" => cfg.leo.window_offset_step_s = s.f64()?,
        "leo.visibility_horizon_s" => cfg.leo.visibility_horizon_s = s.f64()?,

        "infrastructure.work_rate" => cfg.infrastructure.work_rate = s.f64()?,
        "infrastructure.energy_per_work_j" => cfg.infrastructure.energy_per_work_j = s.f64()?,
        "infrastructure.tx_power_w" => cfg.infrastructure.tx_power_w = s.f64()?,

        "train.learning_rate" => cfg.train.learning_rate = s.f64()?,
        "train.batch_size" => cfg.train.batch_size = s.usize()?,
        "train.epochs_per_round" => cfg.train.epochs_per_round = s.u32()?,

        "model.hidden" => cfg.model.hidden = s.widths()?,
        "model.activation" => cfg.model.activation = s.parsed()?,

        "dataset.source" => {
            cfg.dataset.source = match s.string()?.as_str() {
                "synthetic" => DatasetSource::Synthetic,
                "csv" => DatasetSource::Csv,
                other => return Err(s.fail(format!("unknown source `{other}` (valid: synthetic, csv)"))),
            }
        }
        "dataset.csv_path" => cfg.dataset.csv_path = PathBuf::from(s.string()?),
        "dataset.n_samples" => cfg.dataset.n_samples = s.usize()?,
        "dataset.n_features" => cfg.dataset.n_features = s.usize()?,
        "dataset.n_classes" => cfg.dataset.n_classes = s.usize()?,
        "dataset.class_separation" => cfg.dataset.class_separation = s.f64()?,
        "dataset.test_fraction" => cfg.dataset.test_fraction = s.f64()?,
        "dataset.samples_per_client" => cfg.dataset.samples_per_client = s.usize()?,

        "partition.policy" => cfg.partition = s.strategy()?,

        "policy.selection" => cfg.policy.selection = s.strategy()?,
        "policy.scheduling" => cfg.policy.scheduling = s.strategy()?,
        "policy.max_clients_per_cluster" => cfg.policy.max_clients_per_cluster = s.usize()?,

        _ => return Err(s.fail("unknown key")),
    }
    Ok(())
}

/// Re-attaches the line of the offending key to a validation error.
fn locate(e: Error, entries: &[Entry]) -> Error {
    match e {
        Error::Scenario {
            key,
            line: None,
            message,
        } => {
            let line = entries.iter().find(|en| en.key == key).map(|en| en.line);
            Error::Scenario { key, line, message }
        }
        other => other,
    }
}

/// Parses scenario text: `base` (if any) first, then the overrides, then
/// validation.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let entries = parse_entries(text)?;
    let mut cfg = match entries.iter().position(|e| e.key == "base") {
        None => ScenarioConfig::default(),
        Some(pos) => {
            let entry = &entries[pos];
            let Value::Str(name) = &entry.value else {
                return Err(err("base", Some(entry.line), "expected a quoted built-in name"));
            };
            builtin_scenario(name).map_err(|e| err("base", Some(entry.line), e.to_string()))?
        }
    };
    for e in entries.iter().filter(|e| e.key != "base") {
        assign(&mut cfg, &e.key, &e.value, Some(e.line))?;
    }
    cfg.validate().map_err(|e| locate(e, &entries))?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Applies a `section.key=value` override (as given on a command line).
pub fn apply_override(cfg: &mut ScenarioConfig, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| err(assignment, None, "expected key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = if raw == "true" || raw == "false" {
        Value::Bool(raw == "true")
    } else if let Some(s) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        Value::Str(s.to_string())
    } else if raw.parse::<f64>().is_ok() {
        Value::Num(raw.to_string())
    } else {
        Value::Str(raw.to_string())
    };
    assign(cfg, key, &value, None)?;
    cfg.validate()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>, keyword: &str) -> String {
    x.map(num).unwrap_or_else(|| format!("\"{keyword}\""))
}

/// Canonical serialization: every key, fixed order, shortest round-trip
/// float formatting.
pub fn to_canonical(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    let q = |s: &str| format!("\"{s}\"");

    kv("name", q(&cfg.name));
    kv("seed", cfg.seed.to_string());
    kv("rounds", cfg.rounds.to_string());
    kv("neighbor_radius", cfg.neighbor_radius.to_string());
    kv("multi_constellation", cfg.multi_constellation.to_string());
    kv("combiner", q(&cfg.combiner.to_string()));
    kv("relay_mix_weight", opt(cfg.relay_mix_weight, "auto"));
    kv("target_accuracy", opt(cfg.target_accuracy, "none"));

    let sections: Vec<(&str, Vec<(&str, String)>)> = vec![
        (
            "counts",
            vec![
                ("ground_clients", cfg.counts.ground_clients.to_string()),
                ("leo_clients", cfg.counts.leo_clients.to_string()),
                ("base_stations", cfg.counts.base_stations.to_string()),
                ("haps", cfg.counts.haps.to_string()),
                ("uav_relays", cfg.counts.uav_relays.to_string()),
                ("geo_meo_relays", cfg.counts.geo_meo_relays.to_string()),
            ],
        ),
        (
            "delay",
            vec![
                ("channel_s", num(cfg.delay.channel_s)),
                ("bs_haps_s", num(cfg.delay.bs_haps_s)),
                ("uav_s", num(cfg.delay.uav_s)),
                ("haps_haps_s", num(cfg.delay.haps_haps_s)),
                ("relay_s", num(cfg.delay.relay_s)),
            ],
        ),
        (
            "link",
            vec![
                ("rf_rate_bps", num(cfg.link.rf_rate_bps)),
                ("fso_rate_bps", num(cfg.link.fso_rate_bps)),
                ("satellite_aerial_medium", q(&cfg.link.satellite_aerial_medium.to_string())),
                ("total_bandwidth_hz", num(cfg.link.total_bandwidth_hz)),
            ],
        ),
        (
            "snr",
            vec![
                ("threshold_db", num(cfg.snr.threshold_db)),
                ("ground_haps_min_db", num(cfg.snr.ground_haps_min_db)),
                ("ground_haps_max_db", num(cfg.snr.ground_haps_max_db)),
                ("ground_bs_min_db", num(cfg.snr.ground_bs_min_db)),
                ("ground_bs_max_db", num(cfg.snr.ground_bs_max_db)),
                ("ground_uav_min_db", num(cfg.snr.ground_uav_min_db)),
                ("ground_uav_max_db", num(cfg.snr.ground_uav_max_db)),
                ("leo_rf_db", num(cfg.snr.leo_rf_db)),
            ],
        ),
        (
            "ground",
            vec![
                ("work_rate", num(cfg.ground.work_rate)),
                ("max_epochs", cfg.ground.max_epochs.to_string()),
                ("energy_per_work_j", num(cfg.ground.energy_per_work_j)),
                ("tx_power_w", num(cfg.ground.tx_power_w)),
                ("battery_budget_j", opt(cfg.ground.battery_budget_j, "unlimited")),
            ],
        ),
        (
            "leo",
            vec![
                ("work_rate", num(cfg.leo.profile.work_rate)),
                ("max_epochs", cfg.leo.profile.max_epochs.to_string()),
                ("energy_per_work_j", num(cfg.leo.profile.energy_per_work_j)),
                ("tx_power_w", num(cfg.leo.profile.tx_power_w)),
                ("battery_budget_j", opt(cfg.leo.profile.battery_budget_j, "unlimited")),
                ("window_period_s", num(cfg.leo.window_period_s)),
                ("window_width_s", num(cfg.leo.window_width_s)),
                ("window_offset_s", num(cfg.leo.window_offset_s)),
                ("window_offset_step_s", num(cfg.leo.window_offset_step_s)),
                ("visibility_horizon_s", num(cfg.leo.visibility_horizon_s)),
            ],
        ),
        (
            "infrastructure",
            vec![
                ("work_rate", num(cfg.infrastructure.work_rate)),
                ("energy_per_work_j", num(cfg.infrastructure.energy_per_work_j)),
                ("tx_power_w", num(cfg.infrastructure.tx_power_w)),
            ],
        ),
        (
            "train",
            vec![
                ("learning_rate", num(cfg.train.learning_rate)),
                ("batch_size", cfg.train.batch_size.to_string()),
                ("epochs_per_round", cfg.train.epochs_per_round.to_string()),
            ],
        ),
        (
            "model",
            vec![
                (
                    "hidden",
                    q(&cfg
                        .model
                        .hidden
                        .iter()
                        .map(|w| w.to_string())
                        .collect::<Vec<_>>()
                        .join(",")),
                ),
                ("activation", q(&cfg.model.activation.to_string())),
            ],
        ),
        (
            "dataset",
            vec![
                (
                    "source",
                    q(match cfg.dataset.source {
                        DatasetSource::Synthetic => "synthetic",
                        DatasetSource::Csv => "csv",
                    }),
                ),
                ("csv_path", q(&cfg.dataset.csv_path.to_string_lossy())),
                ("n_samples", cfg.dataset.n_samples.to_string()),
                ("n_features", cfg.dataset.n_features.to_string()),
                ("n_classes", cfg.dataset.n_classes.to_string()),
                ("class_separation", num(cfg.dataset.class_separation)),
                ("test_fraction", num(cfg.dataset.test_fraction)),
                ("samples_per_client", cfg.dataset.samples_per_client.to_string()),
            ],
        ),
        ("partition", vec![("policy", q(&cfg.partition.to_string()))]),
        (
            "policy",
            vec![
                ("selection", q(&cfg.policy.selection.to_string())),
                ("scheduling", q(&cfg.policy.scheduling.to_string())),
                (
                    "max_clients_per_cluster",
                    cfg.policy.max_clients_per_cluster.to_string(),
                ),
            ],
        ),
    ];
    for (section, keys) in sections {
        let _ = writeln!(out, "\n[{section}]");
        for (k, v) in keys {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hash of the canonical serialization.
pub fn config_hash(cfg: &ScenarioConfig) -> u64 {
    fnv1a64(to_canonical(cfg).as_bytes())
}
