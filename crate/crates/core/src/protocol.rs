//! Server-side round state machine.
//!
//! A fixed set of clients is expected every round. Each may contribute one
//! update per round; the update that completes the set triggers FedAVG, the
//! result becomes the new global model and the round counter moves on by
//! one. The HTTP layer wraps a `RoundState` in a single lock, so each method
//! here is one atomic step.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::aggregation::{fed_avg, AggregationMode, ClientUpdate};
use crate::error::{Error, Result};
use crate::nn::{init_weights, ModelSpec, Weights};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub expected_clients: BTreeSet<String>,
    pub model_spec: ModelSpec,
    pub init_seed: u64,
    pub aggregation_mode: AggregationMode,
    pub max_rounds: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The update is tagged with a round other than the open one, or
    /// training has already finished.
    StaleRound,
    AlreadyParticipated,
    UnknownClient,
    ShapeMismatch,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::StaleRound => "stale_round",
            RejectReason::AlreadyParticipated => "already_participated",
            RejectReason::UnknownClient => "unknown_client",
            RejectReason::ShapeMismatch => "shape_mismatch",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    /// `aggregated` is set when this update closed the round.
    Accepted {
        aggregated: bool,
    },
    Rejected(RejectReason),
}

/// One closed round: who took part and when the new global model was installed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// The round that was closed; the server moved to `round + 1`.
    pub round: u64,
    pub participants: Vec<String>,
    pub samples: Vec<usize>,
    pub aggregated_at_ms: u128,
}

#[derive(Debug, Clone)]
pub struct RoundState<S = f64> {
    round: u64,
    global: Weights<S>,
    pending: BTreeMap<String, ClientUpdate<S>>,
    expected: BTreeSet<String>,
    mode: AggregationMode,
    max_rounds: u64,
    history: Vec<RoundRecord>,
    snapshot_every: Option<u64>,
    snapshots: BTreeMap<u64, Weights<S>>,
}

impl<S: Scalar> RoundState<S> {
    pub fn new(cfg: &ServerConfig) -> Result<Self> {
        Self::with_weights(cfg, init_weights(&cfg.model_spec, cfg.init_seed))
    }

    /// Starts at round 0 from the given global weights.
    pub fn with_weights(cfg: &ServerConfig, initial: Weights<S>) -> Result<Self> {
        if cfg.expected_clients.is_empty() {
            return Err(Error::param(
                "the server needs at least one expected client",
            ));
        }
        if initial.spec() != &cfg.model_spec {
            return Err(Error::Shape {
                expected: cfg.model_spec.n_params(),
                got: initial.len(),
            });
        }
        Ok(Self {
            round: 0,
            global: initial,
            pending: BTreeMap::new(),
            expected: cfg.expected_clients.clone(),
            mode: cfg.aggregation_mode,
            max_rounds: cfg.max_rounds,
            history: Vec::new(),
            snapshot_every: None,
            snapshots: BTreeMap::new(),
        })
    }

    /// Keep a copy of the global weights after every `every`-th round, after
    /// round 1 and after the final round.
    pub fn keep_snapshots(&mut self, every: u64) {
        self.snapshot_every = Some(every.max(1));
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn max_rounds(&self) -> u64 {
        self.max_rounds
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.max_rounds
    }

    /// Current round together with the weights it tags.
    pub fn weights(&self) -> (u64, &Weights<S>) {
        (self.round, &self.global)
    }

    pub fn expected_clients(&self) -> &BTreeSet<String> {
        &self.expected
    }

    pub fn pending_clients(&self) -> impl Iterator<Item = &str> {
        self.pending.keys().map(String::as_str)
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn snapshots(&self) -> &BTreeMap<u64, Weights<S>> {
        &self.snapshots
    }

    /// Removes and returns the snapshots kept so far.
    pub fn take_snapshots(&mut self) -> BTreeMap<u64, Weights<S>> {
        std::mem::take(&mut self.snapshots)
    }

    /// The identity and round checks of [`put`](Self::put), without the
    /// payload: `None` if `client_id` may still contribute to `round`.
    pub fn admission(&self, client_id: &str, round: u64) -> Option<RejectReason> {
        if !self.expected.contains(client_id) {
            Some(RejectReason::UnknownClient)
        } else if round != self.round || self.is_finished() {
            Some(RejectReason::StaleRound)
        } else if self.pending.contains_key(client_id) {
            Some(RejectReason::AlreadyParticipated)
        } else {
            None
        }
    }

    pub fn put(&mut self, update: ClientUpdate<S>) -> Result<PutOutcome> {
        if let Some(reason) = self.admission(&update.client_id, update.round) {
            return Ok(PutOutcome::Rejected(reason));
        }
        if update.weights.spec() != self.global.spec() || update.n_samples == 0 {
            return Ok(PutOutcome::Rejected(RejectReason::ShapeMismatch));
        }
        self.pending.insert(update.client_id.clone(), update);
        if self.pending.len() < self.expected.len() {
            return Ok(PutOutcome::Accepted { aggregated: false });
        }
        self.aggregate()?;
        Ok(PutOutcome::Accepted { aggregated: true })
    }

    fn aggregate(&mut self) -> Result<()> {
        let updates: Vec<ClientUpdate<S>> =
            std::mem::take(&mut self.pending).into_values().collect();
        let next = fed_avg(&updates, self.mode)?;
        self.history.push(RoundRecord {
            round: self.round,
            participants: updates.iter().map(|u| u.client_id.clone()).collect(),
            samples: updates.iter().map(|u| u.n_samples).collect(),
            aggregated_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        });
        self.global = next;
        self.round += 1;
        if let Some(every) = self.snapshot_every {
            if self.round.is_multiple_of(every) || self.round == 1 || self.round == self.max_rounds
            {
                self.snapshots.insert(self.round, self.global.clone());
            }
        }
        tracing::debug!(round = self.round, "aggregated");
        Ok(())
    }
}
