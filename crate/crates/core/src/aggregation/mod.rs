//! Model-combination math: FedAvg, cluster aggregation, ring all-gather
//! among servers, global model generation and cross-constellation mixing.

mod fedavg;
mod global;
mod ring;

pub use fedavg::{cluster_aggregate, fedavg, weighted_mean, ClusterUpdate};
pub use global::{
    combine_global, combiner_registry, default_mix_weight, relay_mix, ArithmeticMean, Combiner,
    GlobalModel, WeightedMean,
};
pub use ring::{expected_ring_steps, ring_exchange, RingExchange};
