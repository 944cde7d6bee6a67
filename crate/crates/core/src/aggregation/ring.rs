//! Synchronous all-gather of cluster updates along the server ring.

use std::collections::{BTreeMap, BTreeSet};

use super::ClusterUpdate;
use crate::error::{Error, Result};
use crate::network::{ring_neighbors, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct RingExchange {
    /// Every server's collected updates, sorted by origin.
    pub collections: BTreeMap<NodeId, Vec<ClusterUpdate>>,
    pub exchange_steps: u32,
    /// Largest number of updates carried by a single message, per step.
    pub max_updates_per_message: Vec<usize>,
}

/// Floods updates along the ring. In every step each server sends each
/// neighbour within `neighbor_radius` hops every update it holds and has not
/// yet sent to that neighbour. Stops once every server holds every present
/// update. Servers without an update of their own still relay.
pub fn ring_exchange(
    cluster_updates: &BTreeMap<NodeId, ClusterUpdate>,
    ring_order: &[NodeId],
    neighbor_radius: usize,
) -> Result<RingExchange> {
    if ring_order.is_empty() {
        return Err(Error::Contract("ring exchange needs at least one server".into()));
    }
    if neighbor_radius == 0 {
        return Err(Error::Contract("neighbor radius must be >= 1".into()));
    }
    if let Some(id) = cluster_updates.keys().find(|id| !ring_order.contains(id)) {
        return Err(Error::Contract(format!("update from {id}, which is not on the ring")));
    }
    let present: BTreeSet<NodeId> = cluster_updates.keys().copied().collect();
    let neighbors: BTreeMap<NodeId, Vec<NodeId>> = ring_order
        .iter()
        .map(|&s| (s, ring_neighbors(ring_order, s, neighbor_radius)))
        .collect();

    let mut held: BTreeMap<NodeId, BTreeSet<NodeId>> = ring_order
        .iter()
        .map(|&s| (s, present.iter().copied().filter(|&o| o == s).collect()))
        .collect();
    let mut sent: BTreeMap<(NodeId, NodeId), BTreeSet<NodeId>> = BTreeMap::new();
    let mut steps = 0u32;
    let mut max_per_step = Vec::new();

    while held.values().any(|h| *h != present) {
        let snapshot = held.clone();
        let mut largest = 0;
        for (&s, nbrs) in &neighbors {
            for &n in nbrs {
                let already = sent.entry((s, n)).or_default();
                let msg: Vec<NodeId> = snapshot[&s].difference(already).copied().collect();
                if msg.is_empty() {
                    continue;
                }
                largest = largest.max(msg.len());
                already.extend(msg.iter().copied());
                held.get_mut(&n).expect("neighbour on ring").extend(msg);
            }
        }
        if largest == 0 {
            return Err(Error::Contract("ring exchange cannot make progress".into()));
        }
        steps += 1;
        max_per_step.push(largest);
    }

    let collections = held
        .into_iter()
        .map(|(s, origins)| {
            let ups = origins.iter().map(|o| cluster_updates[o].clone()).collect();
            (s, ups)
        })
        .collect();
    Ok(RingExchange {
        collections,
        exchange_steps: steps,
        max_updates_per_message: max_per_step,
    })
}

/// Step count of a full all-gather over `h` servers.
pub fn expected_ring_steps(h: usize, neighbor_radius: usize) -> u32 {
    if h <= 1 {
        0
    } else {
        (h - 1).div_ceil(2 * neighbor_radius) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ParamVector;

    fn updates(ids: &[NodeId]) -> BTreeMap<NodeId, ClusterUpdate> {
        ids.iter()
            .map(|&id| {
                (
                    id,
                    ClusterUpdate {
                        params: ParamVector::new(vec![f64::from(id)]).unwrap(),
                        n_samples: 1,
                        origin_haps: id,
                        round_index: 0,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn five_ring_radius_one_and_two() {
        let ring = [0, 1, 2, 3, 4];
        let r = ring_exchange(&updates(&ring), &ring, 1).unwrap();
        assert_eq!(r.exchange_steps, 2);
        for ups in r.collections.values() {
            let origins: Vec<NodeId> = ups.iter().map(|u| u.origin_haps).collect();
            assert_eq!(origins, ring);
        }
        assert_eq!(ring_exchange(&updates(&ring), &ring, 2).unwrap().exchange_steps, 1);
    }

    #[test]
    fn singleton_ring() {
        let r = ring_exchange(&updates(&[7]), &[7], 1).unwrap();
        assert_eq!(r.exchange_steps, 0);
        assert_eq!(r.collections[&7].len(), 1);
    }

    #[test]
    fn absent_servers_still_relay() {
        let ring = [0, 1, 2, 3, 4];
        let r = ring_exchange(&updates(&[0]), &ring, 1).unwrap();
        assert_eq!(r.exchange_steps, 2);
        assert!(r.collections.values().all(|u| u.len() == 1));
        let none = ring_exchange(&BTreeMap::new(), &ring, 1).unwrap();
        assert_eq!(none.exchange_steps, 0);
    }

    #[test]
    fn contract_violations() {
        assert!(ring_exchange(&BTreeMap::new(), &[], 1).is_err());
        assert!(ring_exchange(&updates(&[9]), &[0, 1], 1).is_err());
    }
}
