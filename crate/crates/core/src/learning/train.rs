use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::batch_gradient;
use super::{evaluate, DataPartition, Dataset, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_round: u32,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Sample-weighted mean loss over the last epoch. With zero epochs this
    /// is the loss of the untouched input model on the partition.
    pub final_avg_loss: f64,
    pub n_samples: usize,
    pub work_units: u64,
}

/// Mini-batch SGD over one client's partition.
///
/// Each epoch reshuffles the partition; the final batch of an epoch may be
/// short. Inside a batch, rows are reduced in ascending dataset order, so a
/// single full-batch epoch is exactly one [`forward_backward`](super::forward_backward)
/// step on the partition.
pub fn local_train(
    params: &ParamVector,
    spec: &ModelSpec,
    dataset: &Dataset,
    partition: &DataPartition,
    config: &TrainConfig,
) -> Result<(ParamVector, TrainStats)> {
    config.validate()?;
    params.check_len(spec)?;
    spec.check_dataset(dataset)?;
    if partition.is_empty() {
        return Err(Error::Protocol(format!(
            "client {} has an empty partition",
            partition.owner
        )));
    }
    let n = partition.len();
    let batches_per_epoch = n.div_ceil(config.batch_size) as u64;
    let work_units =
        u64::from(config.epochs_per_round) * batches_per_epoch * spec.param_count() as u64;

    if config.epochs_per_round == 0 {
        let local = dataset.subset(&partition.sample_indices)?;
        let report = evaluate(params, spec, &local)?;
        return Ok((
            params.clone(),
            TrainStats {
                final_avg_loss: report.avg_loss,
                n_samples: n,
                work_units: 0,
            },
        ));
    }

    let mut rng = rng_from(config.seed);
    let mut current = params.clone();
    let mut order = partition.sample_indices.clone();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut epoch_loss = 0.0;
    for _ in 0..config.epochs_per_round {
        order.shuffle(&mut rng);
        epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend_from_slice(chunk);
            batch.sort_unstable();
            let rows = batch.iter().map(|&i| (dataset.row(i), dataset.label(i)));
            let (loss, grad) = batch_gradient(current.as_slice(), spec, rows);
            epoch_loss += loss * batch.len() as f64;
            for (p, g) in current.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *p -= config.learning_rate * g;
            }
        }
    }
    if !current.is_finite() {
        return Err(Error::Protocol(format!(
            "training diverged on client {} (non-finite parameters)",
            partition.owner
        )));
    }
    Ok((
        current,
        TrainStats {
            final_avg_loss: epoch_loss / n as f64,
            n_samples: n,
            work_units,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{forward_backward, gen_synthetic_dataset, init_model, Activation};

    fn all(ds: &Dataset) -> DataPartition {
        DataPartition {
            owner: 0,
            sample_indices: (0..ds.n_samples()).collect(),
        }
    }

    fn cfg(lr: f64, batch: usize, epochs: u32) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            batch_size: batch,
            epochs_per_round: epochs,
            seed: 5,
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let ds = gen_synthetic_dataset(40, 3, 2, 3.0, 1).unwrap();
        let spec = ModelSpec::new(vec![3, 4, 2], Activation::Relu).unwrap();
        let p = init_model(&spec, 1).unwrap();
        let (out, stats) = local_train(&p, &spec, &ds, &all(&ds), &cfg(0.1, 8, 0)).unwrap();
        assert!(out.bit_eq(&p));
        assert_eq!(stats.work_units, 0);
        assert!(stats.final_avg_loss.is_finite());
    }

    #[test]
    fn full_batch_epoch_is_one_gradient_step() {
        let ds = gen_synthetic_dataset(30, 4, 3, 2.0, 2).unwrap();
        let spec = ModelSpec::new(vec![4, 5, 3], Activation::Tanh).unwrap();
        let p = init_model(&spec, 3).unwrap();
        let part = DataPartition {
            owner: 0,
            sample_indices: vec![1, 4, 5, 9, 12, 20, 29],
        };
        let (out, stats) = local_train(&p, &spec, &ds, &part, &cfg(0.05, 64, 1)).unwrap();

        let sub = ds.subset(&part.sample_indices).unwrap();
        let (loss, grad) = forward_backward(&p, &spec, sub.features(), sub.labels()).unwrap();
        let expected: Vec<f64> = p
            .as_slice()
            .iter()
            .zip(grad.as_slice())
            .map(|(w, g)| w - 0.05 * g)
            .collect();
        assert!(out.bit_eq(&ParamVector::new(expected).unwrap()));
        assert_eq!(stats.final_avg_loss, loss * 7.0 / 7.0);
        assert_eq!(stats.work_units, spec.param_count() as u64);
    }

    #[test]
    fn work_units_count_short_batches() {
        let ds = gen_synthetic_dataset(70, 2, 2, 2.0, 2).unwrap();
        let spec = ModelSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let p = init_model(&spec, 3).unwrap();
        let (_, stats) = local_train(&p, &spec, &ds, &all(&ds), &cfg(0.01, 32, 3)).unwrap();
        assert_eq!(stats.work_units, 3 * 3 * 6);
        assert_eq!(stats.n_samples, 70);
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let ds = gen_synthetic_dataset(40, 2, 2, 6.0, 4).unwrap();
        let spec = ModelSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let p = init_model(&spec, 1).unwrap();
        let before = evaluate(&p, &spec, &ds).unwrap().avg_loss;
        let (_, stats) = local_train(&p, &spec, &ds, &all(&ds), &cfg(0.1, 8, 50)).unwrap();
        assert!(stats.final_avg_loss < before);
    }

    #[test]
    fn empty_partition_is_rejected() {
        let ds = gen_synthetic_dataset(10, 2, 2, 2.0, 2).unwrap();
        let spec = ModelSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let p = init_model(&spec, 3).unwrap();
        let empty = DataPartition {
            owner: 3,
            sample_indices: vec![],
        };
        assert!(matches!(
            local_train(&p, &spec, &ds, &empty, &cfg(0.1, 4, 1)),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn input_params_are_not_modified_and_runs_repeat() {
        let ds = gen_synthetic_dataset(50, 3, 3, 2.0, 8).unwrap();
        let spec = ModelSpec::new(vec![3, 6, 3], Activation::Relu).unwrap();
        let p = init_model(&spec, 3).unwrap();
        let snapshot = p.clone();
        let a = local_train(&p, &spec, &ds, &all(&ds), &cfg(0.05, 7, 4)).unwrap();
        let b = local_train(&p, &spec, &ds, &all(&ds), &cfg(0.05, 7, 4)).unwrap();
        assert!(p.bit_eq(&snapshot));
        assert!(a.0.bit_eq(&b.0));
    }
}
