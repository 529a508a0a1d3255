//! Flat run configuration: one TOML table whose keys mirror the experiment
//! fields, plus `--key=value` overrides from the command line.

use std::path::Path;

use fedround_core::ingest::{load_mnist, synth_binary, SynthConfig};
use fedround_core::nn::EarlyStopping;
use fedround_core::partition::{SchemeKind, DEFAULT_IMBALANCED_SIZES};
use fedround_core::{
    AggregationMode, BootstrapSettings, Dataset, ExecutionMode, ExperimentConfig, ModelSpec,
    PartitionScheme, TrainingConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Bundled configurations, in report row order.
pub const BUNDLED: [(&str, &str); 6] = [
    ("cml_mnist", include_str!("../configs/cml_mnist.toml")),
    ("basic_fl", include_str!("../configs/basic_fl.toml")),
    (
        "imbalanced_fl",
        include_str!("../configs/imbalanced_fl.toml"),
    ),
    ("skewed_fl", include_str!("../configs/skewed_fl.toml")),
    (
        "imbalanced_skewed_fl",
        include_str!("../configs/imbalanced_skewed_fl.toml"),
    ),
    (
        "synth_fractions",
        include_str!("../configs/synth_fractions.toml"),
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Federated,
    Centralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionVariant {
    IidFixed,
    Imbalanced,
    Skewed,
    ImbalancedSkewed,
    Fractions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run name; also the default output directory under `runs/`.
    pub name: String,
    /// Row label in comparison reports.
    pub label: String,
    pub setting: Setting,
    pub dataset: DatasetKind,
    /// Layer widths; defaults to 784-128-10 for MNIST and
    /// `synth_features`-32-2 for the synthetic task.
    pub model: Option<Vec<usize>>,

    pub partition: PartitionVariant,
    pub n_clients: usize,
    pub per_client: usize,
    pub sizes: Vec<usize>,
    pub classes: Vec<usize>,
    pub fractions: Vec<f64>,
    pub partition_seed: u64,

    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub early_stopping: bool,
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,

    pub aggregation: AggregationMode,
    pub max_rounds: u64,
    pub eval_every: u64,
    /// Master seed: weight init, client shuffles and the centralized run.
    pub seed: u64,
    pub mode: ExecutionMode,

    /// Bootstrap resamples for the final report; 0 disables intervals.
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,

    pub synth_train_samples: usize,
    pub synth_test_samples: usize,
    pub synth_features: usize,
    pub synth_separation: f64,
    pub synth_prevalence: f64,
    pub synth_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let client = TrainingConfig::federated_client();
        let es = EarlyStopping::default();
        Self {
            name: "run".into(),
            label: String::new(),
            setting: Setting::Federated,
            dataset: DatasetKind::Mnist,
            model: None,
            partition: PartitionVariant::IidFixed,
            n_clients: 10,
            per_client: 600,
            sizes: DEFAULT_IMBALANCED_SIZES.to_vec(),
            classes: (0..10).collect(),
            fractions: vec![0.5, 0.3, 0.2],
            partition_seed: 0,
            batch_size: client.batch_size,
            epochs: client.epochs,
            learning_rate: client.learning_rate,
            early_stopping: false,
            patience: es.patience,
            min_delta: es.min_delta,
            validation_fraction: es.validation_fraction,
            aggregation: AggregationMode::SampleWeighted,
            max_rounds: 500,
            eval_every: 10,
            seed: 0,
            mode: ExecutionMode::InProcess,
            bootstrap_resamples: 100,
            bootstrap_seed: 0,
            synth_train_samples: 17_903,
            synth_test_samples: 3_236,
            synth_features: 16,
            synth_separation: 2.0,
            synth_prevalence: fedround_core::ingest::DEFAULT_PREVALENCE,
            synth_seed: 0,
        }
    }
}

fn known_keys() -> Vec<String> {
    match toml::Table::try_from(RunConfig::default()) {
        Ok(t) => t.keys().cloned().chain(["model".to_owned()]).collect(),
        Err(_) => Vec::new(),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

impl RunConfig {
    /// A bundled config by name, or a TOML file path.
    pub fn load(source: &str) -> Result<Self> {
        Self::load_with(source, &[])
    }

    pub fn load_with(source: &str, overrides: &[(String, String)]) -> Result<Self> {
        let text = match BUNDLED.iter().find(|(name, _)| *name == source) {
            Some((_, text)) => (*text).to_owned(),
            None => std::fs::read_to_string(source).map_err(|e| {
                let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
                CliError::Usage(format!(
                    "cannot read config {source}: {e} (bundled configs: {})",
                    names.join(", ")
                ))
            })?,
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let known = known_keys();
        for key in table.keys() {
            if !known.contains(key) {
                return Err(CliError::Config(format!("unknown key `{key}`")));
            }
        }
        for (key, raw) in overrides {
            let key = key.replace('-', "_");
            if !known.contains(&key) {
                return Err(CliError::Config(format!("unknown key `{key}`")));
            }
            table.insert(key, parse_value(raw));
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.experiment()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn display_label(&self) -> &str {
        if self.label.is_empty() {
            &self.name
        } else {
            &self.label
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let layers = self.model.clone().unwrap_or_else(|| match self.dataset {
            DatasetKind::Mnist => ModelSpec::mnist().layer_sizes().to_vec(),
            DatasetKind::Synth => vec![self.synth_features, 32, 2],
        });
        ModelSpec::new(layers).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            early_stopping: self.early_stopping.then_some(EarlyStopping {
                patience: self.patience,
                min_delta: self.min_delta,
                validation_fraction: self.validation_fraction,
            }),
            shuffle_seed: self.seed,
        }
    }

    pub fn scheme(&self) -> PartitionScheme {
        let kind = match self.partition {
            PartitionVariant::IidFixed => SchemeKind::IidFixed {
                n_clients: self.n_clients,
                per_client: self.per_client,
            },
            PartitionVariant::Imbalanced => SchemeKind::Imbalanced {
                sizes: self.sizes.clone(),
            },
            PartitionVariant::Skewed => SchemeKind::Skewed {
                classes: self.classes.clone(),
                per_client: self.per_client,
            },
            PartitionVariant::ImbalancedSkewed => SchemeKind::ImbalancedSkewed {
                classes: self.classes.clone(),
                sizes: self.sizes.clone(),
            },
            PartitionVariant::Fractions => SchemeKind::Fractions {
                fractions: self.fractions.clone(),
            },
        };
        PartitionScheme {
            kind,
            seed: self.partition_seed,
        }
    }

    /// The federated experiment this config describes.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let exp = ExperimentConfig {
            partition: self.scheme(),
            model: self.model_spec()?,
            client_training: self.training(),
            aggregation: self.aggregation,
            max_rounds: self.max_rounds,
            eval_every: self.eval_every,
            master_seed: self.seed,
            mode: self.mode,
        };
        if self.setting == Setting::Federated {
            exp.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(exp)
    }

    pub fn bootstrap(&self) -> Option<BootstrapSettings> {
        (self.bootstrap_resamples > 0).then_some(BootstrapSettings {
            resamples: self.bootstrap_resamples,
            seed: self.bootstrap_seed,
        })
    }

    fn synth(&self, n_samples: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples,
            n_features: self.synth_features,
            class_separation: self.synth_separation,
            positive_fraction: self.synth_prevalence,
            seed,
        }
    }

    /// Training and test sets. MNIST comes from `data_dir`; the synthetic
    /// task draws train and test from independent streams of `synth_seed`.
    pub fn load_data(&self, data_dir: &Path) -> Result<(Dataset, Dataset)> {
        match self.dataset {
            DatasetKind::Mnist => {
                let m = load_mnist(data_dir).map_err(CliError::Data)?;
                Ok((m.train, m.test))
            }
            DatasetKind::Synth => {
                let seed = self.synth_seed;
                let train = synth_binary(
                    &self.synth(self.synth_train_samples, fedround_core::seed::mix(seed, 1)),
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                let test = synth_binary(
                    &self.synth(self.synth_test_samples, fedround_core::seed::mix(seed, 2)),
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                Ok((train, test))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in BUNDLED {
            let cfg = RunConfig::load(name).unwrap();
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let cfg = RunConfig::load_with(
            "basic_fl",
            &[
                ("max_rounds".into(), "5".into()),
                ("mode".into(), "networked".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.max_rounds, 5);
        assert_eq!(cfg.mode, ExecutionMode::Networked);
        let err =
            RunConfig::load_with("basic_fl", &[("max_round".into(), "5".into())]).unwrap_err();
        assert!(err.to_string().contains("max_round"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::parse("bogus = 1", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn bundled_sizes_match_the_default_ladder() {
        let cfg = RunConfig::load("imbalanced_fl").unwrap();
        assert_eq!(cfg.sizes, DEFAULT_IMBALANCED_SIZES.to_vec());
        assert_eq!(cfg.sizes.iter().sum::<usize>(), 6_000);
    }
}
