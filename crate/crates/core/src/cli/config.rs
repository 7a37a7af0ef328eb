use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::data::{gen_synthetic, load_dataset, Dataset, SyntheticSpec};
use crate::evaluation::Protocol;
use crate::networks::Variant;
use crate::training::TrainConfig;

/// Environment variable consulted when neither a flag nor the config file sets a seed.
pub const SEED_ENV: &str = "SAVAE_SEED";

/// Everything a command needs: data source, training settings, evaluation plan
/// and output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub data_path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub variants: Vec<Variant>,
    /// Cross-validation folds.
    pub k: usize,
    /// Single stratified holdout of this fraction instead of k-fold.
    pub test_fraction: Option<f64>,
    /// Ablation seeds; the run seed alone when empty.
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("runs"),
            data_path: None,
            synthetic: None,
            variants: Variant::ALL.to_vec(),
            k: 10,
            test_fraction: None,
            seeds: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

/// A parsed config file with its exact bytes, kept for the echo.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: Option<String>,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self {
                config: RunConfig::default(),
                text: None,
            }),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::User(format!("cannot read config {}: {e}", p.display()))
                })?;
                let config = RunConfig::from_toml(&text)
                    .map_err(|e| CliError::User(format!("config {}: {e}", p.display())))?;
                Ok(Self {
                    config,
                    text: Some(text),
                })
            }
        }
    }

    /// Bytes written as the config echo: the input file verbatim, or the
    /// resolved config when none was given.
    pub fn echo(&self) -> String {
        self.text.clone().unwrap_or_else(|| self.config.to_toml())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to toml")
    }

    /// Seed precedence: flag, then config file, then [`SEED_ENV`].
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<Option<u64>, CliError> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
                CliError::User(format!("{SEED_ENV}='{v}' is not an unsigned integer"))
            })?),
            Err(_) => None,
        };
        self.seed = flag.or(self.seed).or(env);
        if let Some(s) = self.seed {
            self.train.seed = s;
        }
        Ok(self.seed)
    }

    pub fn run_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn ablation_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.run_seed()]
        } else {
            self.seeds.clone()
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self.test_fraction {
            Some(test_fraction) => Protocol::Holdout { test_fraction },
            None => Protocol::CrossValidation { k: self.k },
        }
    }

    /// A `--data` flag replaces whatever source the file named.
    pub fn set_data_path(&mut self, path: PathBuf) {
        self.data_path = Some(path);
        self.synthetic = None;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data_path.is_some() == self.synthetic.is_some() {
            return Err(CliError::User(
                "exactly one data source is required: data_path or a [synthetic] table".into(),
            ));
        }
        self.train
            .validate()
            .map_err(|e| CliError::User(e.to_string()))?;
        if let Some(spec) = &self.synthetic {
            spec.validate().map_err(|e| CliError::User(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset, CliError> {
        self.validate()?;
        match (&self.data_path, &self.synthetic) {
            (Some(p), None) => {
                load_dataset(p).map_err(|e| CliError::User(format!("dataset {}: {e}", p.display())))
            }
            (None, Some(spec)) => Ok(gen_synthetic(spec)
                .map_err(|e| CliError::User(e.to_string()))?
                .0),
            _ => unreachable!("validated above"),
        }
    }
}
