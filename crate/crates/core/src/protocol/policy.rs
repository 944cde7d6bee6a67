//! Client selection and bandwidth scheduling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    classify_access, fdma_allocate, leo_visible, AccessPath, AccessRoute, NodeId, Role, Topology,
};
use crate::registry::{Registry, StrategySpec};
use crate::telemetry::{feedback_weights, FeedbackWeights, TelemetryStore};

/// Inputs of one selection pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionPolicy {
    pub snr_threshold_db: f64,
    pub max_clients_per_cluster: Option<usize>,
    /// When present, ranks clients and drops those that cannot afford
    /// another round.
    pub telemetry_weights: Option<FeedbackWeights>,
}

/// One selected client and how its update travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectedClient {
    pub id: NodeId,
    pub path: AccessPath,
}

/// Clients grouped by aggregation point: the base station for routes via a
/// base station, the serving HAPS otherwise.
pub type Clusters = BTreeMap<NodeId, Vec<SelectedClient>>;

fn cluster_key(path: &AccessPath) -> NodeId {
    match path.route {
        AccessRoute::ViaBs => path.via,
        _ => path.server,
    }
}

/// Assigns every eligible client to exactly one cluster. Ground clients need
/// an access path; LEO clients must see their HAPS at `round_time`.
pub fn select_clients(topology: &Topology, round_time: f64, policy: &SelectionPolicy) -> Result<Clusters> {
    let mut clusters: Clusters = BTreeMap::new();
    for id in topology.clients() {
        let node = topology.node(id).expect("client listed by topology");
        if let Some(w) = &policy.telemetry_weights {
            if !w.can_afford_round(id) {
                continue;
            }
        }
        let path = match node.role {
            Role::GroundClient => classify_access(id, topology, policy.snr_threshold_db),
            Role::LeoClient => topology
                .neighbors_with_role(id, Role::HapsServer)
                .find(|&h| leo_visible(id, h, round_time, &topology.visibility))
                .map(|h| AccessPath {
                    route: AccessRoute::Satellite,
                    via: h,
                    server: h,
                }),
            _ => None,
        };
        if let Some(path) = path {
            clusters.entry(cluster_key(&path)).or_default().push(SelectedClient { id, path });
        }
    }
    if let Some(cap) = policy.max_clients_per_cluster {
        for members in clusters.values_mut() {
            if members.len() <= cap {
                continue;
            }
            let score = |c: &SelectedClient| match &policy.telemetry_weights {
                Some(w) => w.weight(c.id),
                None => topology.node(c.id).map_or(0.0, |n| n.compute.work_rate),
            };
            members.sort_by(|a, b| score(b).total_cmp(&score(a)).then(a.id.cmp(&b.id)));
            members.truncate(cap);
            members.sort_by_key(|c| c.id);
        }
    }
    clusters.retain(|_, m| !m.is_empty());
    if clusters.is_empty() {
        return Err(Error::Protocol(format!(
            "no client is reachable at t = {round_time} s; nothing to train"
        )));
    }
    Ok(clusters)
}

/// Strategy producing the selection inputs for a round.
pub trait SelectionStrategy: Send + Sync {
    fn spec(&self) -> StrategySpec;

    fn policy(
        &self,
        snr_threshold_db: f64,
        max_clients_per_cluster: Option<usize>,
        telemetry: &TelemetryStore,
    ) -> Result<SelectionPolicy>;
}

/// Every client whose access link meets the SNR threshold; caps rank by
/// compute rate.
pub struct SnrThreshold;

impl SelectionStrategy for SnrThreshold {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("snr_threshold", vec![])
    }

    fn policy(&self, snr: f64, cap: Option<usize>, _: &TelemetryStore) -> Result<SelectionPolicy> {
        Ok(SelectionPolicy {
            snr_threshold_db: snr,
            max_clients_per_cluster: cap,
            telemetry_weights: None,
        })
    }
}

/// Like [`SnrThreshold`], ranked by feedback weights once history exists.
pub struct TelemetrySelection;

impl SelectionStrategy for TelemetrySelection {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("telemetry_weighted", vec![])
    }

    fn policy(&self, snr: f64, cap: Option<usize>, telemetry: &TelemetryStore) -> Result<SelectionPolicy> {
        let weights = if telemetry.is_empty() {
            None
        } else {
            Some(feedback_weights(telemetry)?)
        };
        Ok(SelectionPolicy {
            snr_threshold_db: snr,
            max_clients_per_cluster: cap,
            telemetry_weights: weights,
        })
    }
}

pub fn selection_registry() -> Registry<dyn SelectionStrategy> {
    let mut reg: Registry<dyn SelectionStrategy> = Registry::new("selection policy");
    reg.register("snr_threshold", |s| {
        s.no_args()?;
        Ok(Box::new(SnrThreshold))
    });
    reg.register("telemetry_weighted", |s| {
        s.no_args()?;
        Ok(Box::new(TelemetrySelection))
    });
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
}

/// Splits a cluster's bandwidth among its clients.
pub trait SchedulingStrategy: Send + Sync {
    fn spec(&self) -> StrategySpec;

    fn split(
        &self,
        total_bandwidth_hz: f64,
        clients: &[NodeId],
        weights: Option<&FeedbackWeights>,
    ) -> Result<BTreeMap<NodeId, f64>>;
}

pub struct EqualShare;

impl SchedulingStrategy for EqualShare {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("equal", vec![])
    }

    fn split(&self, total: f64, clients: &[NodeId], _: Option<&FeedbackWeights>) -> Result<BTreeMap<NodeId, f64>> {
        fdma_allocate(total, clients)
    }
}

/// Bandwidth proportional to feedback weight; equal without history.
pub struct TelemetryScheduling;

impl SchedulingStrategy for TelemetryScheduling {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("telemetry_weighted", vec![])
    }

    fn split(
        &self,
        total: f64,
        clients: &[NodeId],
        weights: Option<&FeedbackWeights>,
    ) -> Result<BTreeMap<NodeId, f64>> {
        let Some(w) = weights else {
            return fdma_allocate(total, clients);
        };
        if clients.is_empty() {
            return Err(Error::Contract("bandwidth split needs at least one client".into()));
        }
        let sum: f64 = clients.iter().map(|&c| w.weight(c)).sum();
        Ok(clients.iter().map(|&c| (c, total * (w.weight(c) / sum))).collect())
    }
}

pub fn scheduling_registry() -> Registry<dyn SchedulingStrategy> {
    let mut reg: Registry<dyn SchedulingStrategy> = Registry::new("scheduling policy");
    reg.register("equal", |s| {
        s.no_args()?;
        Ok(Box::new(EqualShare))
    });
    reg.register("telemetry_weighted", |s| {
        s.no_args()?;
        Ok(Box::new(TelemetryScheduling))
    });
    reg
}

/// Per-client bandwidth and transmit power. Ground clients of a cluster
/// share its bandwidth; LEO clients hold a dedicated feeder link.
pub fn schedule_round(
    clusters: &Clusters,
    topology: &Topology,
    total_bandwidth_hz: f64,
    strategy: &dyn SchedulingStrategy,
    weights: Option<&FeedbackWeights>,
) -> Result<BTreeMap<NodeId, Allocation>> {
    let mut out = BTreeMap::new();
    for members in clusters.values() {
        let (leo, ground): (Vec<&SelectedClient>, Vec<&SelectedClient>) =
            members.iter().partition(|c| c.path.route == AccessRoute::Satellite);
        let power = |id: NodeId| topology.node(id).map_or(0.0, |n| n.power.tx_power);
        for c in leo {
            out.insert(
                c.id,
                Allocation {
                    bandwidth_hz: total_bandwidth_hz,
                    tx_power_w: power(c.id),
                },
            );
        }
        if ground.is_empty() {
            continue;
        }
        let ids: Vec<NodeId> = ground.iter().map(|c| c.id).collect();
        for (id, bw) in strategy.split(total_bandwidth_hz, &ids, weights)? {
            out.insert(
                id,
                Allocation {
                    bandwidth_hz: bw,
                    tx_power_w: power(id),
                },
            );
        }
    }
    Ok(out)
}
