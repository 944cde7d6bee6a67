//! Declarative experiment configuration.

mod builtins;
mod config;
mod format;

pub use builtins::{builtin_scenario, BUILTIN_NAMES};
pub use config::{
    ClientProfile, DatasetConfig, DatasetSource, DelayConfig, InfrastructureProfile, LeoConfig,
    LinkConfig, ModelSettings, PolicyConfig, RoleCounts, ScenarioConfig, SnrConfig,
    TrainSettings,
};
pub use format::{
    apply_override, config_hash, fnv1a64, load_scenario, parse_scenario, to_canonical,
};

/// A built-in name or a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> crate::Result<ScenarioConfig> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        return builtin_scenario(name_or_path);
    }
    let path = std::path::Path::new(name_or_path);
    if path.exists() {
        return load_scenario(path);
    }
    Err(crate::Error::Config(format!(
        "`{name_or_path}` is neither a built-in scenario ({}) nor a readable file",
        BUILTIN_NAMES.join(", ")
    )))
}
