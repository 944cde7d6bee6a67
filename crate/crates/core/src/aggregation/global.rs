use serde::{Deserialize, Serialize};

use super::{weighted_mean, ClusterUpdate};
use crate::error::{Error, Result};
use crate::learning::ParamVector;
use crate::registry::{Registry, StrategySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub params: ParamVector,
    pub round_index: u32,
    pub constellation_id: u32,
}

/// Rule turning the collected cluster updates into one global model.
pub trait Combiner: Send + Sync {
    fn spec(&self) -> StrategySpec;

    /// Relative weight of one cluster update.
    fn weight(&self, update: &ClusterUpdate) -> f64;
}

/// FedAvg across clusters: weight by sample count.
pub struct WeightedMean;

impl Combiner for WeightedMean {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("weighted_mean", vec![])
    }

    fn weight(&self, update: &ClusterUpdate) -> f64 {
        update.n_samples as f64
    }
}

pub struct ArithmeticMean;

impl Combiner for ArithmeticMean {
    fn spec(&self) -> StrategySpec {
        StrategySpec::new("arithmetic_mean", vec![])
    }

    fn weight(&self, _: &ClusterUpdate) -> f64 {
        1.0
    }
}

pub fn combiner_registry() -> Registry<dyn Combiner> {
    let mut reg: Registry<dyn Combiner> = Registry::new("combiner");
    reg.register("weighted_mean", |s| {
        s.no_args()?;
        Ok(Box::new(WeightedMean))
    });
    reg.register("arithmetic_mean", |s| {
        s.no_args()?;
        Ok(Box::new(ArithmeticMean))
    });
    reg
}

/// Combines one server's collection. Input is sorted by origin first, so
/// servers holding the same set produce bit-identical models.
pub fn combine_global(
    collected: &[ClusterUpdate],
    combiner: &dyn Combiner,
    round_index: u32,
    constellation_id: u32,
) -> Result<GlobalModel> {
    if collected.is_empty() {
        return Err(Error::Contract("no cluster updates to combine".into()));
    }
    if let Some(u) = collected.iter().find(|u| u.round_index != round_index) {
        return Err(Error::Protocol(format!(
            "update from {} belongs to round {}, expected {round_index}",
            u.origin_haps, u.round_index
        )));
    }
    let mut sorted: Vec<&ClusterUpdate> = collected.iter().collect();
    sorted.sort_by_key(|u| u.origin_haps);
    let weighted: Vec<(&ParamVector, f64)> =
        sorted.iter().map(|u| (&u.params, combiner.weight(u))).collect();
    Ok(GlobalModel {
        params: weighted_mean(&weighted)?,
        round_index,
        constellation_id,
    })
}

/// Share given to foreign constellations when none is configured: their
/// fraction of all clusters, capped at one half.
pub fn default_mix_weight(local_clusters: usize, foreign_clusters: usize) -> f64 {
    let total = local_clusters + foreign_clusters;
    if total == 0 {
        return 0.0;
    }
    (foreign_clusters as f64 / total as f64).min(0.5)
}

/// `(1 - mix_weight) * local + mix_weight * mean(foreign)`.
pub fn relay_mix(local: &GlobalModel, foreign: &[GlobalModel], mix_weight: f64) -> Result<GlobalModel> {
    if !(0.0..=1.0).contains(&mix_weight) {
        return Err(Error::Contract(format!("mix weight {mix_weight} outside [0, 1]")));
    }
    if foreign.is_empty() || mix_weight == 0.0 {
        return Ok(local.clone());
    }
    let foreign_weighted: Vec<(&ParamVector, f64)> = foreign.iter().map(|g| (&g.params, 1.0)).collect();
    let foreign_mean = weighted_mean(&foreign_weighted)?;
    let params = weighted_mean(&[(&local.params, 1.0 - mix_weight), (&foreign_mean, mix_weight)])?;
    Ok(GlobalModel {
        params,
        round_index: local.round_index,
        constellation_id: local.constellation_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn update(origin: u32, v: Vec<f64>, n: u64, round: u32) -> ClusterUpdate {
        ClusterUpdate {
            params: ParamVector::new(v).unwrap(),
            n_samples: n,
            origin_haps: origin,
            round_index: round,
        }
    }

    fn global(v: Vec<f64>) -> GlobalModel {
        GlobalModel {
            params: ParamVector::new(v).unwrap(),
            round_index: 3,
            constellation_id: 0,
        }
    }

    #[test]
    fn identical_updates_are_idempotent() {
        let ups: Vec<_> = (0..5).map(|o| update(o, vec![0.3, -1.7], 10 + u64::from(o), 1)).collect();
        for c in [&WeightedMean as &dyn Combiner, &ArithmeticMean] {
            let g = combine_global(&ups, c, 1, 0).unwrap();
            assert!(g.params.bit_eq(&ups[0].params));
        }
    }

    #[test]
    fn equal_counts_make_combiners_agree() {
        let ups: Vec<_> = (0..4)
            .map(|o| update(o, vec![f64::from(o) * 0.37, 1.0 / f64::from(o + 1)], 25, 0))
            .collect();
        let a = combine_global(&ups, &WeightedMean, 0, 0).unwrap();
        let b = combine_global(&ups, &ArithmeticMean, 0, 0).unwrap();
        assert!(a.params.max_abs_diff(&b.params) <= 1e-15);
    }

    #[test]
    fn weighted_matches_naive_sum() {
        let ups = vec![
            update(3, vec![0.5, 2.0, -1.0], 7, 2),
            update(1, vec![1.5, -2.0, 0.25], 13, 2),
            update(4, vec![-0.5, 0.0, 4.0], 1, 2),
            update(0, vec![0.0, 0.1, 0.2], 40, 2),
            update(2, vec![9.0, 3.0, -3.0], 2, 2),
        ];
        let g = combine_global(&ups, &WeightedMean, 2, 0).unwrap();
        let total: f64 = ups.iter().map(|u| u.n_samples as f64).sum();
        for j in 0..3 {
            let naive: f64 = ups
                .iter()
                .map(|u| u.params.as_slice()[j] * u.n_samples as f64)
                .sum::<f64>()
                / total;
            assert!((g.params.as_slice()[j] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_rounds_are_rejected() {
        let ups = vec![update(0, vec![1.0], 1, 0), update(1, vec![1.0], 1, 1)];
        assert!(matches!(combine_global(&ups, &WeightedMean, 0, 0), Err(Error::Protocol(_))));
        assert!(combine_global(&[], &WeightedMean, 0, 0).is_err());
    }

    #[test]
    fn relay_mix_cases() {
        let local = global(vec![1.0, -2.0]);
        let foreign = global(vec![3.0, 4.0]);
        assert!(relay_mix(&local, &[], 0.4).unwrap().params.bit_eq(&local.params));
        assert!(relay_mix(&local, std::slice::from_ref(&foreign), 0.0).unwrap().params.bit_eq(&local.params));
        let half = relay_mix(&local, std::slice::from_ref(&foreign), 0.5).unwrap();
        assert_eq!(half.params.as_slice(), &[2.0, 1.0]);
        assert_eq!(half.round_index, 3);
        assert!(relay_mix(&local, &[foreign], 1.5).is_err());
    }

    #[test]
    fn mix_weight_default_is_capped() {
        assert_eq!(default_mix_weight(5, 5), 0.5);
        assert_eq!(default_mix_weight(3, 1), 0.25);
        assert_eq!(default_mix_weight(1, 9), 0.5);
    }

    #[test]
    fn registry_knows_both_combiners() {
        let reg = combiner_registry();
        assert_eq!(reg.names(), vec!["arithmetic_mean", "weighted_mean"]);
        assert!(reg.create_from_str("logarithmic").is_err());
    }
}
