//! Non-IID splitting of a dataset across clients.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::registry::{Registry, StrategySpec};
use crate::rng::{derive_seed, rng_from, stream, SimRng};

pub const DEFAULT_DIRICHLET_ALPHA: f64 = 0.5;
pub const DEFAULT_SHARDS_PER_CLIENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPartition {
    pub owner: u32,
    /// Ascending, unique.
    pub sample_indices: Vec<usize>,
}

impl DataPartition {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }
}

pub trait PartitionStrategy: Send + Sync {
    fn spec(&self) -> StrategySpec;

    /// Raw assignment of sample indices to `n_clients` buckets. Buckets may be
    /// empty; [`partition_noniid`] repairs that afterwards.
    fn assign(&self, dataset: &Dataset, n_clients: usize, rng: &mut SimRng) -> Vec<Vec<usize>>;
}

/// Per class, client shares are drawn from a symmetric Dirichlet(alpha) and
/// the class's shuffled samples are cut at the cumulative shares.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    pub alpha: f64,
}

impl PartitionStrategy for Dirichlet {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("dirichlet", vec![self.alpha])
    }

    fn assign(&self, dataset: &Dataset, n_clients: usize, rng: &mut SimRng) -> Vec<Vec<usize>> {
        let gamma = Gamma::new(self.alpha, 1.0).expect("alpha validated at construction");
        let mut buckets = vec![Vec::new(); n_clients];
        for mut members in dataset.indices_by_class() {
            members.shuffle(rng);
            let draws: Vec<f64> = (0..n_clients).map(|_| rng.sample(gamma)).collect();
            let total: f64 = draws.iter().sum();
            let shares: Vec<f64> = if total > 0.0 && total.is_finite() {
                draws.iter().map(|d| d / total).collect()
            } else {
                vec![1.0 / n_clients as f64; n_clients]
            };
            let m = members.len();
            let mut cumulative = 0.0;
            let mut start = 0;
            for (client, share) in shares.iter().enumerate() {
                cumulative += share;
                let end = if client + 1 == n_clients {
                    m
                } else {
                    ((cumulative * m as f64).round() as usize).clamp(start, m)
                };
                buckets[client].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        buckets
    }
}

/// Label-sorted shards dealt `per_client` at a time.
#[derive(Debug, Clone)]
pub struct Shards {
    pub per_client: usize,
}

impl PartitionStrategy for Shards {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("shards", vec![self.per_client as f64])
    }

    fn assign(&self, dataset: &Dataset, n_clients: usize, rng: &mut SimRng) -> Vec<Vec<usize>> {
        let sorted: Vec<usize> = dataset.indices_by_class().into_iter().flatten().collect();
        let n_shards = n_clients * self.per_client;
        let (base, extra) = (sorted.len() / n_shards, sorted.len() % n_shards);
        let mut shards = Vec::with_capacity(n_shards);
        let mut start = 0;
        for s in 0..n_shards {
            let size = base + usize::from(s < extra);
            shards.push(&sorted[start..start + size]);
            start += size;
        }
        let mut order: Vec<usize> = (0..n_shards).collect();
        order.shuffle(rng);
        order
            .chunks(self.per_client)
            .map(|ids| ids.iter().flat_map(|&s| shards[s].iter().copied()).collect())
            .collect()
    }
}

pub fn partition_registry() -> Registry<dyn PartitionStrategy> {
    let mut reg: Registry<dyn PartitionStrategy> = Registry::new("partition policy");
    reg.register("dirichlet", |spec| {
        let alpha = spec.arg_or(DEFAULT_DIRICHLET_ALPHA)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("dirichlet alpha must be > 0, got {alpha}")));
        }
        Ok(Box::new(Dirichlet { alpha }))
    });
    reg.register("shards", |spec| {
        let k = spec.arg_or(DEFAULT_SHARDS_PER_CLIENT as f64)?;
        if !(k >= 1.0 && k.fract() == 0.0) {
            return Err(Error::Config(format!(
                "shards per client must be a positive integer, got {k}"
            )));
        }
        Ok(Box::new(Shards {
            per_client: k as usize,
        }))
    });
    reg
}

/// Splits `dataset` across `n_clients` owners (ids `0..n_clients`). The result
/// is disjoint, covers every sample, and gives each client at least one
/// sample: empty buckets take the highest index of the currently largest
/// bucket.
pub fn partition_noniid(
    dataset: &Dataset,
    n_clients: usize,
    strategy: &dyn PartitionStrategy,
    seed: u64,
) -> Result<Vec<DataPartition>> {
    if n_clients == 0 {
        return Err(Error::Config("need at least one client to partition for".into()));
    }
    if n_clients > dataset.n_samples() {
        return Err(Error::Config(format!(
            "{n_clients} clients but only {} samples",
            dataset.n_samples()
        )));
    }
    let mut rng = rng_from(derive_seed(seed, &[stream::PARTITION]));
    let mut buckets = strategy.assign(dataset, n_clients, &mut rng);
    debug_assert_eq!(buckets.len(), n_clients);
    for b in buckets.iter_mut() {
        b.sort_unstable();
    }
    while let Some(empty) = buckets.iter().position(|b| b.is_empty()) {
        let donor = (0..n_clients)
            .max_by(|&a, &b| buckets[a].len().cmp(&buckets[b].len()).then(b.cmp(&a)))
            .expect("n_clients >= 1");
        let moved = buckets[donor].pop().expect("donor holds >= 2 samples");
        buckets[empty].push(moved);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(owner, sample_indices)| DataPartition {
            owner: owner as u32,
            sample_indices,
        })
        .collect())
}
