use std::path::PathBuf;


use crate::error::{Error, Result};
use crate::learning::{Activation, ModelSpec, TrainConfig};
use crate::network::Medium;
use crate::registry::StrategySpec;

/// Node population of one constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleCounts {
    pub ground_clients: usize,
    pub leo_clients: usize,
    pub base_stations: usize,
    pub haps: usize,
    pub uav_relays: usize,
    pub geo_meo_relays: usize,
}

/// One-way per-hop delays in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayConfig {
    /// Client to serving node (HAPS, or the BS when it is the server).
    pub channel_s: f64,
    pub bs_haps_s: f64,
    /// Both ground-UAV and UAV-HAPS hops.
    pub uav_s: f64,
    pub haps_haps_s: f64,
    /// HAPS to GEO/MEO relay.
    pub relay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub rf_rate_bps: f64,
    pub fso_rate_bps: f64,
    /// `fso` everywhere except the RF satellite baseline.
    pub satellite_aerial_medium: Medium,
    /// FDMA budget of every receiving node.
    pub total_bandwidth_hz: f64,
}

/// Per-link SNRs are drawn uniformly from these ranges at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrConfig {
    pub threshold_db: f64,
    pub ground_haps_min_db: f64,
    pub ground_haps_max_db: f64,
    pub ground_bs_min_db: f64,
    pub ground_bs_max_db: f64,
    pub ground_uav_min_db: f64,
    pub ground_uav_max_db: f64,
    /// SNR annotated on RF satellite-aerial links.
    pub leo_rf_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub work_rate: f64,
    pub max_epochs: u32,
    pub energy_per_work_j: f64,
    pub tx_power_w: f64,
    /// `None` means unlimited.
    pub battery_budget_j: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeoConfig {
    pub profile: ClientProfile,
    pub window_period_s: f64,
    pub window_width_s: f64,
    pub window_offset_s: f64,
    /// Added per LEO index to stagger passes.
    pub window_offset_step_s: f64,
    pub visibility_horizon_s: f64,
}

/// Compute/power profile shared by BSs, HAPS, UAVs and GEO/MEO relays.
#[derive(Debug, Clone, PartialEq)]
pub struct InfrastructureProfile {
    pub work_rate: f64,
    pub energy_per_work_j: f64,
    pub tx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_round: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Used when `source` is csv.
    pub csv_path: PathBuf,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_separation: f64,
    pub test_fraction: f64,
    /// Mean training samples per client. For synthetic data the training
    /// pool is generated at this size times the client count (the test split
    /// keeps `n_samples * test_fraction`); for csv data each partition is
    /// capped at it. 0 spreads the whole training pool over the clients.
    pub samples_per_client: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub selection: StrategySpec,
    pub scheduling: StrategySpec,
    /// 0 means unlimited.
    pub max_clients_per_cluster: usize,
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub rounds: u32,
    pub neighbor_radius: usize,
    pub multi_constellation: bool,
    pub combiner: StrategySpec,
    /// `None` applies the default foreign-weight rule.
    pub relay_mix_weight: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub counts: RoleCounts,
    pub delay: DelayConfig,
    pub link: LinkConfig,
    pub snr: SnrConfig,
    pub ground: ClientProfile,
    pub leo: LeoConfig,
    pub infrastructure: InfrastructureProfile,
    pub train: TrainSettings,
    pub model: ModelSettings,
    pub dataset: DatasetConfig,
    pub partition: StrategySpec,
    pub policy: PolicyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            seed: 1,
            rounds: 10,
            neighbor_radius: 1,
            multi_constellation: false,
            combiner: StrategySpec::new("weighted_mean", vec![]),
            relay_mix_weight: None,
            target_accuracy: None,
            counts: RoleCounts {
                ground_clients: 200,
                leo_clients: 5,
                base_stations: 5,
                haps: 5,
                uav_relays: 5,
                geo_meo_relays: 1,
            },
            delay: DelayConfig {
                channel_s: 0.008,
                bs_haps_s: 0.008,
                uav_s: 0.008,
                haps_haps_s: 0.008,
                relay_s: 0.12,
            },
            link: LinkConfig {
                rf_rate_bps: 20e6,
                fso_rate_bps: 1e9,
                satellite_aerial_medium: Medium::Fso,
                total_bandwidth_hz: 20e6,
            },
            snr: SnrConfig {
                threshold_db: 10.0,
                ground_haps_min_db: 0.0,
                ground_haps_max_db: 20.0,
                ground_bs_min_db: 5.0,
                ground_bs_max_db: 25.0,
                ground_uav_min_db: 5.0,
                ground_uav_max_db: 25.0,
                leo_rf_db: 20.0,
            },
            ground: ClientProfile {
                work_rate: 1e8,
                max_epochs: 120,
                energy_per_work_j: 1e-8,
                tx_power_w: 0.2,
                battery_budget_j: None,
            },
            leo: LeoConfig {
                profile: ClientProfile {
                    work_rate: 5e7,
                    max_epochs: 30,
                    energy_per_work_j: 5e-8,
                    tx_power_w: 5.0,
                    battery_budget_j: None,
                },
                window_period_s: 5700.0,
                window_width_s: 600.0,
                window_offset_s: 0.0,
                window_offset_step_s: 0.0,
                visibility_horizon_s: 86_400.0,
            },
            infrastructure: InfrastructureProfile {
                work_rate: 1e9,
                energy_per_work_j: 1e-9,
                tx_power_w: 10.0,
            },
            train: TrainSettings {
                learning_rate: 0.01,
                batch_size: 32,
                epochs_per_round: 120,
            },
            model: ModelSettings {
                hidden: vec![32],
                activation: Activation::Relu,
            },
            dataset: DatasetConfig {
                source: DatasetSource::Synthetic,
                csv_path: PathBuf::new(),
                n_samples: 4000,
                n_features: 32,
                n_classes: 10,
                class_separation: 3.0,
                test_fraction: 0.2,
                samples_per_client: 32,
            },
            partition: StrategySpec::new("dirichlet", vec![0.5]),
            policy: PolicyConfig {
                selection: StrategySpec::new("snr_threshold", vec![]),
                scheduling: StrategySpec::new("equal", vec![]),
                max_clients_per_cluster: 0,
            },
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::Scenario {
        key: key.to_string(),
        line: None,
        message: message.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be >= 0, got {v}")))
    }
}

fn ordered(key: &str, lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(invalid(key, format!("empty range [{lo}, {hi}]")))
    }
}

fn check_profile(prefix: &str, p: &ClientProfile) -> Result<()> {
    positive(&format!("{prefix}.work_rate"), p.work_rate)?;
    if p.max_epochs == 0 {
        return Err(invalid(&format!("{prefix}.max_epochs"), "must be >= 1"));
    }
    nonnegative(&format!("{prefix}.energy_per_work_j"), p.energy_per_work_j)?;
    nonnegative(&format!("{prefix}.tx_power_w"), p.tx_power_w)?;
    if let Some(b) = p.battery_budget_j {
        nonnegative(&format!("{prefix}.battery_budget_j"), b)?;
    }
    Ok(())
}

impl ScenarioConfig {
    /// Checks every field; the first violation is reported with its key path.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if self.neighbor_radius == 0 {
            return Err(invalid("neighbor_radius", "must be >= 1"));
        }
        if let Some(w) = self.relay_mix_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid("relay_mix_weight", format!("must lie in [0, 1], got {w}")));
            }
        }
        if let Some(a) = self.target_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(invalid("target_accuracy", format!("must lie in [0, 1], got {a}")));
            }
        }

        let c = &self.counts;
        if c.ground_clients + c.leo_clients == 0 {
            return Err(invalid("counts", "scenario has no clients"));
        }
        if c.haps == 0 {
            if c.leo_clients > 0 {
                return Err(invalid("counts.haps", "LEO clients need at least one HAPS"));
            }
            if c.base_stations == 0 {
                return Err(invalid(
                    "counts.base_stations",
                    "without HAPS a base station must act as server",
                ));
            }
            if c.uav_relays > 0 {
                return Err(invalid("counts.uav_relays", "UAV relays forward to HAPS; none configured"));
            }
        }
        if self.multi_constellation && c.geo_meo_relays == 0 {
            return Err(invalid(
                "counts.geo_meo_relays",
                "multi-constellation mode needs a GEO/MEO relay",
            ));
        }

        let d = &self.delay;
        positive("delay.channel_s", d.channel_s)?;
        positive("delay.bs_haps_s", d.bs_haps_s)?;
        positive("delay.uav_s", d.uav_s)?;
        positive("delay.haps_haps_s", d.haps_haps_s)?;
        positive("delay.relay_s", d.relay_s)?;

        positive("link.rf_rate_bps", self.link.rf_rate_bps)?;
        positive("link.fso_rate_bps", self.link.fso_rate_bps)?;
        positive("link.total_bandwidth_hz", self.link.total_bandwidth_hz)?;

        let s = &self.snr;
        if !s.threshold_db.is_finite() {
            return Err(invalid("snr.threshold_db", "must be finite"));
        }
        ordered("snr.ground_haps_min_db", s.ground_haps_min_db, s.ground_haps_max_db)?;
        ordered("snr.ground_bs_min_db", s.ground_bs_min_db, s.ground_bs_max_db)?;
        ordered("snr.ground_uav_min_db", s.ground_uav_min_db, s.ground_uav_max_db)?;
        if !s.leo_rf_db.is_finite() {
            return Err(invalid("snr.leo_rf_db", "must be finite"));
        }

        check_profile("ground", &self.ground)?;
        check_profile("leo", &self.leo.profile)?;
        if self.leo.profile.max_epochs > self.ground.max_epochs {
            return Err(invalid(
                "leo.max_epochs",
                "LEO clients may not run more epochs than ground clients",
            ));
        }
        positive("leo.window_period_s", self.leo.window_period_s)?;
        positive("leo.window_width_s", self.leo.window_width_s)?;
        if self.leo.window_width_s > self.leo.window_period_s {
            return Err(invalid("leo.window_width_s", "must not exceed the period"));
        }
        if !self.leo.window_offset_s.is_finite() {
            return Err(invalid("leo.window_offset_s", "must be finite"));
        }
        if !self.leo.window_offset_step_s.is_finite() {
            return Err(invalid("leo.window_offset_step_s", "must be finite"));
        }
        positive("leo.visibility_horizon_s", self.leo.visibility_horizon_s)?;

        positive("infrastructure.work_rate", self.infrastructure.work_rate)?;
        nonnegative("infrastructure.energy_per_work_j", self.infrastructure.energy_per_work_j)?;
        nonnegative("infrastructure.tx_power_w", self.infrastructure.tx_power_w)?;

        positive("train.learning_rate", self.train.learning_rate)?;
        if self.train.batch_size == 0 {
            return Err(invalid("train.batch_size", "must be >= 1"));
        }
        if self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden", "layer widths must be positive"));
        }

        let ds = &self.dataset;
        if ds.source == DatasetSource::Csv && ds.csv_path.as_os_str().is_empty() {
            return Err(invalid("dataset.csv_path", "required when source is csv"));
        }
        if ds.source == DatasetSource::Synthetic {
            if ds.n_features == 0 {
                return Err(invalid("dataset.n_features", "must be >= 1"));
            }
            if ds.n_classes < 2 {
                return Err(invalid("dataset.n_classes", "must be >= 2"));
            }
            if ds.n_samples < ds.n_classes {
                return Err(invalid("dataset.n_samples", "must be >= n_classes"));
            }
            positive("dataset.class_separation", ds.class_separation)?;
        }
        if !(ds.test_fraction > 0.0 && ds.test_fraction < 1.0) {
            return Err(invalid(
                "dataset.test_fraction",
                format!("must lie in (0, 1), got {}", ds.test_fraction),
            ));
        }

        let known = |key: &str, spec: &StrategySpec, names: Vec<&'static str>| -> Result<()> {
            if names.contains(&spec.name.as_str()) {
                Ok(())
            } else {
                Err(invalid(
                    key,
                    format!("unknown strategy `{}` (valid: {})", spec.name, names.join(", ")),
                ))
            }
        };
        let reg = crate::learning::partition_registry();
        known("partition.policy", &self.partition, reg.names())?;
        reg.create(&self.partition)
            .map_err(|e| invalid("partition.policy", e.to_string()))?;
        let reg = crate::aggregation::combiner_registry();
        known("combiner", &self.combiner, reg.names())?;
        reg.create(&self.combiner).map_err(|e| invalid("combiner", e.to_string()))?;
        let reg = crate::protocol::selection_registry();
        known("policy.selection", &self.policy.selection, reg.names())?;
        reg.create(&self.policy.selection)
            .map_err(|e| invalid("policy.selection", e.to_string()))?;
        let reg = crate::protocol::scheduling_registry();
        known("policy.scheduling", &self.policy.scheduling, reg.names())?;
        reg.create(&self.policy.scheduling)
            .map_err(|e| invalid("policy.scheduling", e.to_string()))?;
        Ok(())
    }

    /// Whether HAPS act as FL servers; otherwise base stations do.
    pub fn haps_served(&self) -> bool {
        self.counts.haps > 0
    }

    pub fn model_spec(&self, n_features: usize, n_classes: usize) -> Result<ModelSpec> {
        let mut sizes = Vec::with_capacity(self.model.hidden.len() + 2);
        sizes.push(n_features);
        sizes.extend_from_slice(&self.model.hidden);
        sizes.push(n_classes);
        ModelSpec::new(sizes, self.model.activation)
    }

    /// Training settings for one client run; `epochs` already capped.
    pub fn train_config(&self, epochs: u32, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs_per_round: epochs,
            seed,
        }
    }
}
