use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::network::Medium;

pub const BUILTIN_NAMES: [&str; 4] = [
    "terrestrial_only",
    "satellite_rf",
    "satellite_fso",
    "distributed_haps",
];

fn with_delay(mut cfg: ScenarioConfig, channel_s: f64) -> ScenarioConfig {
    cfg.delay.channel_s = channel_s;
    cfg.delay.bs_haps_s = channel_s;
    cfg.delay.uav_s = channel_s;
    cfg.delay.haps_haps_s = channel_s;
    cfg
}

fn satellite(name: &str, channel_s: f64, medium: Medium) -> ScenarioConfig {
    let mut cfg = with_delay(ScenarioConfig::default(), channel_s);
    cfg.name = name.into();
    cfg.counts.ground_clients = 0;
    cfg.counts.leo_clients = 5;
    cfg.counts.base_stations = 0;
    cfg.counts.haps = 1;
    cfg.counts.uav_relays = 0;
    cfg.counts.geo_meo_relays = 0;
    cfg.link.satellite_aerial_medium = medium;
    // Both satellite baselines move the model at the same rate; they differ
    // only in link type and channel delay.
    cfg.link.rf_rate_bps = cfg.link.fso_rate_bps;
    cfg
}

/// The four reference scenarios: ground only, the two single-HAPS satellite
/// baselines, and the distributed HAPS constellation.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let cfg = match name {
        "terrestrial_only" => {
            let mut cfg = with_delay(ScenarioConfig::default(), 0.005);
            cfg.counts.ground_clients = 20;
            cfg.counts.leo_clients = 0;
            cfg.counts.base_stations = 1;
            cfg.counts.haps = 0;
            cfg.counts.uav_relays = 0;
            cfg.counts.geo_meo_relays = 0;
            cfg.snr.ground_bs_min_db = 10.0;
            cfg
        }
        "satellite_rf" => satellite(name, 0.050, Medium::Rf),
        "satellite_fso" => satellite(name, 0.010, Medium::Fso),
        "distributed_haps" => with_delay(ScenarioConfig::default(), 0.008),
        other => {
            return Err(Error::Config(format!(
                "unknown scenario `{other}` (built-ins: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    let cfg = ScenarioConfig {
        name: name.to_string(),
        ..cfg
    };
    cfg.validate()?;
    Ok(cfg)
}
