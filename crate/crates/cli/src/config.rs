//! Run configuration: defaults, JSON file, dotted overrides and seed resolution.

use std::fs;
use std::path::Path;

use nesr_core::model::ModelConfig;
use nesr_core::train::TrainConfig;
use nesr_core::{NesrError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SEED_ENV: &str = "NESR_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: String,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: "synthetic".into(),
            train_scenes: 64,
            test_scenes: 8,
            height: 64,
            width: 64,
        }
    }
}

/// Everything a subcommand reads besides its own flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives scene generation and weight initialization; resolved from
    /// `--seed`, then this field, then `NESR_SEED`, then 0.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `key.path=value` to a JSON tree; `value` is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| NesrError::Usage(format!("override '{assignment}' must look like key.path=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(NesrError::Usage(format!("override key '{key}' has an empty segment")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let map = node
            .as_object_mut()
            .ok_or_else(|| NesrError::Usage(format!("override key '{key}': '{part}' is not a section")))?;
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| NesrError::Usage(format!("override key '{key}' does not name a field")))?;
    map.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

fn config_error(source: &str, e: serde_json::Error) -> NesrError {
    NesrError::Usage(format!("invalid configuration in {source}: {e}"))
}

impl RunConfig {
    /// Defaults, then the optional JSON file, then each override in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String], seed_flag: Option<u64>) -> Result<Self> {
        let mut tree = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| NesrError::io(path, e))?;
            let parsed: RunConfig = serde_json::from_str(&text).map_err(|e| config_error(&path.display().to_string(), e))?;
            tree = serde_json::to_value(parsed)?;
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let mut config: RunConfig = serde_json::from_value(tree).map_err(|e| config_error("--set overrides", e))?;
        let seed = match (seed_flag, config.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| NesrError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?,
                Err(_) => 0,
            },
        };
        config.seed = Some(seed);
        config.train.seed = seed;
        config.model.validate().map_err(usage)?;
        config.train.validate().map_err(usage)?;
        Ok(config)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn usage(e: NesrError) -> NesrError {
    match e {
        NesrError::Config(msg) => NesrError::Usage(msg),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::resolve(
            None,
            &[
                "train.lr0=0.001".into(),
                "model.enable_nam=false".into(),
                "data.dataset=desk".into(),
                r#"train.band_sampling={"fixed":7}"#.into(),
            ],
            Some(3),
        )
        .unwrap();
        assert_eq!(c.train.lr0, 1e-3);
        assert!(!c.model.enable_nam);
        assert_eq!(c.data.dataset, "desk");
        assert_eq!(c.train.seed, 3);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        for bad in ["train.learning_rate=1", "colour=red", "train", "train..lr0=1", "seed.x=1"] {
            assert!(
                matches!(RunConfig::resolve(None, &[bad.to_string()], Some(0)), Err(NesrError::Usage(_))),
                "{bad}"
            );
        }
    }
}
