use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::ParamVector;
use crate::network::NodeId;

/// Aggregated model of one server's cluster; the unit of ring exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterUpdate {
    pub params: ParamVector,
    pub n_samples: u64,
    pub origin_haps: NodeId,
    pub round_index: u32,
}

/// Weighted coordinate-wise mean with weights `w_i / sum(w)`.
///
/// Terms are accumulated left to right in input order and each coordinate is
/// clamped to the inputs' range, so equal inputs come back bit-identical and
/// the result is always a convex combination.
pub fn weighted_mean(updates: &[(&ParamVector, f64)]) -> Result<ParamVector> {
    let Some(((first, _), rest)) = updates.split_first() else {
        return Err(Error::Contract("cannot average zero updates".into()));
    };
    let len = first.len();
    if let Some((p, _)) = rest.iter().find(|(p, _)| p.len() != len) {
        return Err(Error::Contract(format!(
            "update lengths differ ({} vs {len})",
            p.len()
        )));
    }
    let total: f64 = updates.iter().map(|(_, w)| *w).sum();
    if !(total > 0.0 && total.is_finite()) || updates.iter().any(|(_, w)| !(*w >= 0.0)) {
        return Err(Error::Contract("weights must be non-negative with a positive sum".into()));
    }

    let mut out: Vec<f64> = Vec::with_capacity(len);
    for j in 0..len {
        let mut acc = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, (p, w)) in updates.iter().enumerate() {
            let x = p.as_slice()[j];
            let term = (w / total) * x;
            acc = if i == 0 { term } else { acc + term };
            lo = lo.min(x);
            hi = hi.max(x);
        }
        out.push(acc.clamp(lo, hi));
    }
    ParamVector::new(out)
}

/// Sample-count weighted FedAvg.
pub fn fedavg(updates: &[(ParamVector, u64)]) -> Result<ParamVector> {
    let weighted: Vec<(&ParamVector, f64)> = updates.iter().map(|(p, n)| (p, *n as f64)).collect();
    weighted_mean(&weighted)
}

/// Aggregates the updates collected by one server (or pre-aggregating base
/// station). `local_updates` are `(contributor id, params, n_samples)`;
/// they are reduced in ascending contributor order regardless of the order
/// given.
pub fn cluster_aggregate(
    local_updates: &[(NodeId, ParamVector, u64)],
    origin_haps: NodeId,
    round_index: u32,
) -> Result<ClusterUpdate> {
    if local_updates.is_empty() {
        return Err(Error::Protocol(format!(
            "server {origin_haps} received no updates in round {round_index}"
        )));
    }
    if let Some((id, _, _)) = local_updates.iter().find(|(_, _, n)| *n == 0) {
        return Err(Error::Protocol(format!("update from {id} carries zero samples")));
    }
    let mut sorted: Vec<&(NodeId, ParamVector, u64)> = local_updates.iter().collect();
    sorted.sort_by_key(|(id, _, _)| *id);
    let weighted: Vec<(&ParamVector, f64)> = sorted.iter().map(|(_, p, n)| (p, *n as f64)).collect();
    Ok(ClusterUpdate {
        params: weighted_mean(&weighted)?,
        n_samples: sorted.iter().map(|(_, _, n)| n).sum(),
        origin_haps,
        round_index,
    })
}
