use std::fs;
use std::path::{Path, PathBuf};

use balancemix::datagen::{GeneratorConfig, NoiseSpec};
use balancemix::metrics::GroupSpec;
use balancemix::trainer::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything one experiment needs; every field has a default and the
/// resolved values are written next to the run's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Overrides the generator and training seeds when set.
    pub seed: Option<u64>,
    pub generator: GeneratorConfig,
    /// Validation instances; the training size when absent.
    pub validation_size: Option<usize>,
    pub noise: NoiseSpec,
    pub train: TrainConfig,
    /// Shot-group thresholds; 25% and 5% of the validation size when absent.
    pub groups: Option<GroupSpec>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            generator: GeneratorConfig::default(),
            validation_size: None,
            noise: NoiseSpec::none(),
            train: TrainConfig::default(),
            groups: None,
            output_dir: PathBuf::from("run"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies overrides, propagates the seed and the group thresholds, and validates.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self, CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            self.generator.seed = seed;
            self.train.seed = seed;
        }
        if let Some(mode) = overrides.mode {
            self.train.mode = mode;
        }
        if let Some(threads) = overrides.threads {
            self.train.threads = threads;
        }
        if self.groups.is_some() {
            self.train.groups = self.groups;
        }
        self.noise.validate()?;
        self.generator.validate()?;
        self.train.validate()?;
        if self.validation_size == Some(0) {
            return Err(CliError::Config("validation size must be positive".into()));
        }
        Ok(self)
    }

    pub fn validation_size(&self) -> usize {
        self.validation_size.unwrap_or(self.generator.n)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.generator.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epochs": 3}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"train": {"epoch": 3}}"#).is_err());
    }

    #[test]
    fn seed_and_groups_propagate() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 4, "groups": {"many": 10, "medium": 2}}"#).unwrap();
        let cfg = cfg
            .resolve(&Overrides {
                seed: Some(9),
                mode: Some(Mode::BceBaseline),
                threads: Some(3),
            })
            .unwrap();
        assert_eq!((cfg.generator.seed, cfg.train.seed, cfg.seed()), (9, 9, 9));
        assert_eq!(cfg.train.mode, Mode::BceBaseline);
        assert_eq!(cfg.train.threads, 3);
        assert_eq!(cfg.train.groups, Some(GroupSpec { many: 10.0, medium: 2.0 }));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad: ExperimentConfig = serde_json::from_str(r#"{"noise": {"type": "flip", "tau": 1.5}}"#).unwrap();
        assert!(matches!(bad.resolve(&Overrides::default()), Err(CliError::Core(_))));
        let bad: ExperimentConfig = serde_json::from_str(r#"{"train": {"epsilon": 0.4}}"#).unwrap();
        assert_eq!(bad.resolve(&Overrides::default()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn single_positive_ignores_tau() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"noise": {"type": "single_positive", "tau": 7}}"#).unwrap();
        assert!(cfg.resolve(&Overrides::default()).is_ok());
    }
}
