use std::fs;
use std::path::Path;

use fedsense::experiment::ExperimentConfig;
use serde::Deserialize;

use crate::CliError;

/// Loads a run configuration; missing keys take the desk defaults.
pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match path {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
            parse(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))?
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

/// Parses a configuration, filling every absent key (nested ones included)
/// from [`ExperimentConfig::default`].
pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let given: toml::Table = toml::from_str(text).map_err(|e| e.message().to_string())?;
    let mut merged: toml::Table =
        toml::from_str(&render(&ExperimentConfig::default())).expect("defaults parse");
    merge(&mut merged, given);
    ExperimentConfig::deserialize(merged).map_err(|e| e.message().to_string())
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

pub fn render(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serialises to TOML")
}
