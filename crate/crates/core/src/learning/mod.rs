//! Supervised-learning core run by every federated client: data synthesis
//! and ingestion, non-IID partitioning, SGD training and evaluation.

mod dataset;
mod model;
mod partition;
mod train;

pub use dataset::{
    gen_synthetic_dataset, load_dataset_csv, split_stratified, write_dataset_csv, Dataset,
};
pub use model::{
    evaluate, forward_backward, init_model, Activation, EvalReport, ModelSpec, ParamVector,
};
pub use partition::{
    partition_noniid, partition_registry, DataPartition, Dirichlet, PartitionStrategy, Shards,
    DEFAULT_DIRICHLET_ALPHA, DEFAULT_SHARDS_PER_CLIENT,
};
pub use train::{local_train, TrainConfig, TrainStats};
