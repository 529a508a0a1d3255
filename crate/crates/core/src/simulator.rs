//! In-process orchestration of a whole federated experiment.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationMode, ClientUpdate};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, BootstrapSettings, MetricsReport};
use crate::nn::{predict, train_local, ModelSpec, TrainingConfig, Weights};
use crate::partition::{make_partition, Partition, PartitionScheme};
use crate::protocol::{PutOutcome, RoundRecord, RoundState, ServerConfig};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    InProcess,
    Networked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub partition: PartitionScheme,
    pub model: ModelSpec,
    /// Local schedule; `shuffle_seed` is replaced per client and round.
    pub client_training: TrainingConfig,
    pub aggregation: AggregationMode,
    pub max_rounds: u64,
    pub eval_every: u64,
    pub master_seed: u64,
    pub mode: ExecutionMode,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::param("max_rounds must be at least 1"));
        }
        if self.eval_every == 0 || self.eval_every > self.max_rounds {
            return Err(Error::param(format!(
                "eval_every must lie in 1..={}",
                self.max_rounds
            )));
        }
        Ok(())
    }

    /// Seed of the round-0 global weights.
    pub fn init_seed(&self) -> u64 {
        seed::mix(self.master_seed, seed::hash_str("init"))
    }

    pub fn server_config(&self, partition: &Partition) -> ServerConfig {
        ServerConfig {
            expected_clients: partition.client_ids().map(str::to_owned).collect(),
            model_spec: self.model.clone(),
            init_seed: self.init_seed(),
            aggregation_mode: self.aggregation,
            max_rounds: self.max_rounds,
        }
    }

    /// The local training schedule for one client in one round.
    pub fn client_schedule(&self, client_id: &str, round: u64) -> TrainingConfig {
        TrainingConfig {
            shuffle_seed: seed::client_round_seed(self.master_seed, client_id, round),
            ..self.client_training.clone()
        }
    }

    /// Whether global metrics are recorded after `round`.
    pub fn is_eval_round(&self, round: u64) -> bool {
        round == 1 || round.is_multiple_of(self.eval_every) || round == self.max_rounds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEval {
    pub round: u64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory<S = f64> {
    pub evaluations: Vec<RoundEval>,
    pub final_weights: Weights<S>,
    pub rounds: Vec<RoundRecord>,
    /// Wall-clock seconds spent on each round (informational).
    pub round_seconds: Vec<f64>,
}

impl<S> RunHistory<S> {
    pub fn best_macro_f1(&self) -> Option<(u64, f64)> {
        self.evaluations
            .iter()
            .filter_map(|e| e.macro_f1.map(|f| (e.round, f)))
            .fold(None, |best, (r, f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((r, f)),
            })
    }

    pub fn eval_at(&self, round: u64) -> Option<&RoundEval> {
        self.evaluations.iter().find(|e| e.round == round)
    }
}

/// Predicts on `test` and builds the full metrics report.
pub fn evaluate_model<S: Scalar>(
    w: &Weights<S>,
    test: &Dataset<S>,
    bootstrap: Option<BootstrapSettings>,
) -> Result<MetricsReport> {
    let (_, probs) = predict(w, test.batch())?;
    evaluate(&probs, w.spec().n_classes(), test.labels(), bootstrap)
}

/// Accuracy, macro F1 and AUROC of the global model after `round`.
pub fn round_eval<S: Scalar>(round: u64, w: &Weights<S>, test: &Dataset<S>) -> Result<RoundEval> {
    let report = evaluate_model(w, test, None)?;
    Ok(RoundEval {
        round,
        accuracy: report.accuracy,
        macro_f1: Some(report.macro_f1),
        auroc: report.auroc,
    })
}

/// Materializes every client's shard.
pub fn client_shards<S: Scalar>(
    partition: &Partition,
    train: &Dataset<S>,
) -> Result<BTreeMap<String, Dataset<S>>> {
    partition
        .shards
        .iter()
        .map(|(id, idx)| Ok((id.clone(), train.subset(idx)?)))
        .collect()
}

/// One client's contribution to `round`, starting from `global`.
pub fn client_update<S: Scalar>(
    cfg: &ExperimentConfig,
    client_id: &str,
    round: u64,
    global: &Weights<S>,
    shard: &Dataset<S>,
) -> Result<ClientUpdate<S>> {
    let outcome =
        train_local(global, shard, &cfg.client_schedule(client_id, round)).map_err(|e| {
            Error::Client {
                client: client_id.to_owned(),
                round,
                source: Box::new(e),
            }
        })?;
    Ok(ClientUpdate {
        client_id: client_id.to_owned(),
        round,
        weights: outcome.weights,
        n_samples: outcome.n_samples,
    })
}

/// Runs every round without sockets. Clients of one round train in
/// parallel; the round closes once all of them have reported.
pub fn run_experiment<S: Scalar>(
    cfg: &ExperimentConfig,
    train: &Dataset<S>,
    test: &Dataset<S>,
) -> Result<RunHistory<S>> {
    run_experiment_with(cfg, train, test, |_| {})
}

/// As [`run_experiment`], calling `on_eval` after each evaluated round.
pub fn run_experiment_with<S: Scalar>(
    cfg: &ExperimentConfig,
    train: &Dataset<S>,
    test: &Dataset<S>,
    mut on_eval: impl FnMut(&RoundEval),
) -> Result<RunHistory<S>> {
    cfg.validate()?;
    let partition = make_partition(&cfg.partition, train.labels())?;
    let shards = client_shards(&partition, train)?;
    let mut state: RoundState<S> = RoundState::new(&cfg.server_config(&partition))?;

    let mut evaluations = Vec::new();
    let mut round_seconds = Vec::with_capacity(cfg.max_rounds as usize);
    while !state.is_finished() {
        let started = Instant::now();
        let (round, global) = state.weights();
        let updates: Vec<ClientUpdate<S>> = shards
            .par_iter()
            .map(|(id, shard)| client_update(cfg, id, round, global, shard))
            .collect::<Result<_>>()?;
        for update in updates {
            match state.put(update)? {
                PutOutcome::Accepted { .. } => {}
                PutOutcome::Rejected(reason) => {
                    return Err(Error::Consistency(format!(
                        "in-process update rejected: {reason}"
                    )))
                }
            }
        }
        round_seconds.push(started.elapsed().as_secs_f64());

        let round = state.round();
        if cfg.is_eval_round(round) {
            let eval = round_eval(round, state.weights().1, test)?;
            tracing::info!(round, accuracy = eval.accuracy, "evaluated global model");
            on_eval(&eval);
            evaluations.push(eval);
        }
    }

    Ok(RunHistory {
        evaluations,
        final_weights: state.weights().1.clone(),
        rounds: state.history().to_vec(),
        round_seconds,
    })
}
