//! Per-round metrics, energy and bandwidth accounting, and the feedback
//! weights that telemetry-aware policies use for selection and scheduling.

mod export;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AccessRoute, NodeId};
use crate::protocol::StageLatency;

pub use export::{export_metrics, metrics_csv, metrics_json, parse_metrics_json, ExportFormat, CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: NodeId,
    pub constellation: u32,
    pub route: AccessRoute,
    pub n_samples: u64,
    pub epochs: u32,
    pub work_units: u64,
    pub final_train_loss: f64,
    pub compute_time_s: f64,
    pub broadcast_time_s: f64,
    /// The client's own transmission (first hop).
    pub upload_time_s: f64,
    /// Relay hops after the first one, until the update reaches its server.
    pub forward_time_s: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    /// `work_units * energy_per_work + tx_power * upload_time`.
    pub energy_j: f64,
    pub battery_budget_j: Option<f64>,
    pub battery_remaining_j: Option<f64>,
}

impl ClientRecord {
    pub fn energy(work_units: u64, energy_per_work_j: f64, tx_power_w: f64, upload_time_s: f64) -> f64 {
        work_units as f64 * energy_per_work_j + tx_power_w * upload_time_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round_index: u32,
    pub global_accuracy: f64,
    pub global_test_loss: f64,
    pub avg_train_loss: f64,
    pub round_latency_s: f64,
    pub cumulative_latency_s: f64,
    pub stage_latencies: Vec<StageLatency>,
    pub per_client: Vec<ClientRecord>,
}

/// Sample-weighted mean of the clients' final-epoch losses, reduced in
/// record order.
pub fn avg_train_loss(records: &[ClientRecord]) -> f64 {
    let total: u64 = records.iter().map(|r| r.n_samples).sum();
    if total == 0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for r in records {
        acc += r.n_samples as f64 * r.final_train_loss;
    }
    acc / total as f64
}

/// Round latency under barrier semantics: the stage maxima summed in
/// pipeline order.
pub fn round_latency(stages: &[StageLatency]) -> f64 {
    let mut acc = 0.0;
    for s in stages {
        acc += s.seconds;
    }
    acc
}

/// Append-only log of round metrics for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryStore {
    pub scenario: String,
    /// FNV-1a of the canonical scenario text, as 16 hex digits.
    pub config_hash: String,
    pub seed: u64,
    rounds: Vec<RoundMetrics>,
}

impl TelemetryStore {
    pub fn new(scenario: impl Into<String>, config_hash: u64, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            config_hash: format!("{config_hash:016x}"),
            seed,
            rounds: Vec::new(),
        }
    }

    pub fn rounds(&self) -> &[RoundMetrics] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }

    /// Appends the next round; indices must be consecutive from 0 and the
    /// cumulative latency must extend the previous one.
    pub fn record_round(&mut self, metrics: RoundMetrics) -> Result<()> {
        let expected = self.rounds.len() as u32;
        if metrics.round_index != expected {
            return Err(Error::Contract(format!(
                "expected round {expected}, got round {}",
                metrics.round_index
            )));
        }
        let prev = self.rounds.last().map_or(0.0, |m| m.cumulative_latency_s);
        if metrics.cumulative_latency_s != prev + metrics.round_latency_s {
            return Err(Error::Contract(format!(
                "round {} cumulative latency {} does not extend {prev}",
                metrics.round_index, metrics.cumulative_latency_s
            )));
        }
        self.rounds.push(metrics);
        Ok(())
    }

    /// Energy each client has spent so far.
    pub fn energy_spent(&self) -> BTreeMap<NodeId, f64> {
        let mut spent = BTreeMap::new();
        for m in &self.rounds {
            for r in &m.per_client {
                *spent.entry(r.client_id).or_insert(0.0) += r.energy_j;
            }
        }
        spent
    }
}

/// Per-client weights in (0, 1]; unseen clients weigh 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedbackWeights {
    weights: BTreeMap<NodeId, f64>,
    exhausted: BTreeMap<NodeId, bool>,
    /// Largest per-round energy observed per client.
    peak_energy: BTreeMap<NodeId, f64>,
    remaining: BTreeMap<NodeId, f64>,
}

/// Floor keeping weights strictly positive.
pub const MIN_WEIGHT: f64 = 1e-12;

impl FeedbackWeights {
    pub fn weight(&self, client: NodeId) -> f64 {
        self.weights.get(&client).copied().unwrap_or(1.0)
    }

    pub fn is_exhausted(&self, client: NodeId) -> bool {
        self.exhausted.get(&client).copied().unwrap_or(false)
    }

    /// Whether the remaining battery covers another round at the client's
    /// peak observed consumption. Unbudgeted and unseen clients always can.
    pub fn can_afford_round(&self, client: NodeId) -> bool {
        match (self.remaining.get(&client), self.peak_energy.get(&client)) {
            (Some(&left), Some(&peak)) => left >= peak && left > 0.0,
            (Some(&left), None) => left > 0.0,
            _ => true,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.weights.iter().map(|(&k, &v)| (k, v))
    }
}

/// weight ~ remaining battery fraction / mean upload time, normalized so the
/// best client has weight 1.
pub fn feedback_weights(store: &TelemetryStore) -> Result<FeedbackWeights> {
    if store.is_empty() {
        return Err(Error::Contract("feedback weights need at least one recorded round".into()));
    }
    struct Acc {
        upload_sum: f64,
        uploads: u32,
        spent: f64,
        peak: f64,
        budget: Option<f64>,
    }
    let mut acc: BTreeMap<NodeId, Acc> = BTreeMap::new();
    for m in store.rounds() {
        for r in &m.per_client {
            let a = acc.entry(r.client_id).or_insert(Acc {
                upload_sum: 0.0,
                uploads: 0,
                spent: 0.0,
                peak: 0.0,
                budget: r.battery_budget_j,
            });
            a.upload_sum += r.upload_time_s;
            a.uploads += 1;
            a.spent += r.energy_j;
            a.peak = a.peak.max(r.energy_j);
            a.budget = r.battery_budget_j;
        }
    }
    let mut out = FeedbackWeights::default();
    let mut raw = BTreeMap::new();
    for (&id, a) in &acc {
        let fraction = match a.budget {
            None => 1.0,
            Some(b) if b > 0.0 => ((b - a.spent) / b).max(0.0),
            Some(_) => 0.0,
        };
        if let Some(b) = a.budget {
            out.remaining.insert(id, (b - a.spent).max(0.0));
        }
        out.peak_energy.insert(id, a.peak);
        out.exhausted.insert(id, fraction <= 0.0);
        let mean_upload = a.upload_sum / f64::from(a.uploads);
        let w = if mean_upload > 0.0 { fraction / mean_upload } else { fraction };
        raw.insert(id, w);
    }
    let max = raw.values().copied().fold(0.0, f64::max);
    for (id, w) in raw {
        let normalized = if max > 0.0 { w / max } else { 0.0 };
        out.weights.insert(id, normalized.max(MIN_WEIGHT));
    }
    Ok(out)
}
