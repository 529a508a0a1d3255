//! Blocking HTTP client and the participation loop each client process runs.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use fedround_core::simulator::{client_update, round_eval, ExperimentConfig, RoundEval};
use fedround_core::{Dataset, ModelSpec, PutOutcome, RejectReason, Weights};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use crate::error::{Error, Result};
use crate::wire::{PutBody, PutReply, RoundBody, WeightsBody};

const BODY_LIMIT: u64 = 256 << 20;

/// Bounded exponential backoff for transport failures and 5xx replies.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 8,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_backoff)
    }
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub server_url: String,
    pub client_id: String,
    pub poll_interval: Duration,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
    /// Checked between polls; set it to make the loop return early.
    pub stop: Arc<AtomicBool>,
    /// Fault injection: quit silently instead of contributing to this round.
    pub leave_before_round: Option<u64>,
}

impl ClientOptions {
    pub fn new(server_url: impl Into<String>, client_id: impl Into<String>) -> Self {
        Self {
            server_url: server_url.into(),
            client_id: client_id.into(),
            poll_interval: Duration::from_millis(500),
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(120),
            stop: Arc::new(AtomicBool::new(false)),
            leave_before_round: None,
        }
    }
}

/// One round of one client's participation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRoundLog {
    pub round: u64,
    pub n_samples: usize,
    pub train_seconds: f64,
    /// The downloaded global model scored on the shared test set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_eval: Option<RoundEval>,
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

pub struct Client {
    agent: Agent,
    base: String,
    retry: RetryPolicy,
    client_id: String,
}

impl Client {
    pub fn new(opts: &ClientOptions) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(opts.request_timeout))
            .build()
            .into();
        Self {
            agent,
            base: opts.server_url.trim_end_matches('/').to_owned(),
            retry: opts.retry.clone(),
            client_id: opts.client_id.clone(),
        }
    }

    fn with_retry<T>(
        &self,
        url: &str,
        mut call: impl FnMut() -> std::result::Result<T, Failure>,
    ) -> Result<T> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    attempt += 1;
                    if attempt >= self.retry.max_attempts {
                        return Err(Error::Unreachable {
                            url: url.to_owned(),
                            attempts: attempt,
                            msg,
                        });
                    }
                    let wait = self.retry.delay(attempt - 1);
                    tracing::debug!(url, attempt, ?wait, %msg, "retrying");
                    thread::sleep(wait);
                }
            }
        }
    }

    fn decode<T: DeserializeOwned>(
        url: &str,
        resp: &mut ureq::http::Response<ureq::Body>,
    ) -> std::result::Result<T, Failure> {
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_json()
            .map_err(|e| {
                Failure::Fatal(Error::Protocol {
                    url: url.to_owned(),
                    msg: e.to_string(),
                })
            })
    }

    fn get<T: DeserializeOwned>(&self, url: &str) -> Result<T> {
        self.with_retry(url, || {
            let mut resp = self
                .agent
                .get(url)
                .call()
                .map_err(|e| Failure::Retry(e.to_string()))?;
            let status = resp.status();
            if status.is_server_error() {
                return Err(Failure::Retry(format!("status {status}")));
            }
            if !status.is_success() {
                return Err(Failure::Fatal(Error::Protocol {
                    url: url.to_owned(),
                    msg: format!("status {status}"),
                }));
            }
            Self::decode(url, &mut resp)
        })
    }

    pub fn get_round(&self) -> Result<u64> {
        let url = format!("{}/round?client_id={}", self.base, self.client_id);
        Ok(self.get::<RoundBody>(&url)?.round)
    }

    pub fn get_weights(&self, spec: &ModelSpec) -> Result<(u64, Weights<f64>)> {
        let url = format!("{}/weight", self.base);
        let body: WeightsBody = self.get(&url)?;
        Ok((
            body.round,
            Weights::from_values(spec.clone(), body.weights)?,
        ))
    }

    pub fn put_weights(
        &self,
        round: u64,
        n_samples: usize,
        weights: &Weights<f64>,
    ) -> Result<PutOutcome> {
        let url = format!("{}/weight", self.base);
        let body = PutBody {
            client_id: self.client_id.clone(),
            round,
            n_samples,
            weights: weights.values().to_vec(),
        };
        self.with_retry(&url, || {
            let mut resp = self
                .agent
                .put(&url)
                .send_json(&body)
                .map_err(|e| Failure::Retry(e.to_string()))?;
            let status = resp.status();
            if status.is_server_error() {
                return Err(Failure::Retry(format!("status {status}")));
            }
            let reply: PutReply = Self::decode(&url, &mut resp)?;
            match (status.as_u16(), reply.accepted, reply.reason.as_deref()) {
                (200, true, _) => Ok(PutOutcome::Accepted { aggregated: false }),
                (409, false, Some(reason)) => parse_reason(reason)
                    .map(PutOutcome::Rejected)
                    .ok_or_else(|| {
                        Failure::Fatal(Error::Protocol {
                            url: url.clone(),
                            msg: format!("unknown rejection reason {reason:?}"),
                        })
                    }),
                _ => Err(Failure::Fatal(Error::Protocol {
                    url: url.clone(),
                    msg: format!("status {status} with body {reply:?}"),
                })),
            }
        })
    }
}

fn parse_reason(s: &str) -> Option<RejectReason> {
    [
        RejectReason::StaleRound,
        RejectReason::AlreadyParticipated,
        RejectReason::UnknownClient,
        RejectReason::ShapeMismatch,
    ]
    .into_iter()
    .find(|r| r.as_str() == s)
}

/// Participates in every round until the server reaches
/// `experiment.max_rounds`: download, train on `shard`, upload, then wait
/// for the round to close. With `test`, each downloaded global model is
/// scored before training.
pub fn client_loop(
    opts: &ClientOptions,
    experiment: &ExperimentConfig,
    shard: &Dataset<f64>,
    test: Option<&Dataset<f64>>,
) -> Result<Vec<ClientRoundLog>> {
    let mut log = Vec::new();
    if experiment.max_rounds == 0 {
        return Ok(log);
    }
    let client = Client::new(opts);
    let id = opts.client_id.as_str();
    let mut done_round: Option<u64> = None;
    while !opts.stop.load(Ordering::Relaxed) {
        let round = client.get_round()?;
        if round >= experiment.max_rounds {
            break;
        }
        if done_round == Some(round) {
            thread::sleep(opts.poll_interval);
            continue;
        }
        if opts.leave_before_round == Some(round) {
            tracing::warn!(client = id, round, "leaving the federation");
            break;
        }
        let (round, global) = client.get_weights(&experiment.model)?;
        if round >= experiment.max_rounds {
            break;
        }
        let global_eval = test.map(|t| round_eval(round, &global, t)).transpose()?;
        let started = Instant::now();
        let update = client_update(experiment, id, round, &global, shard)?;
        let train_seconds = started.elapsed().as_secs_f64();
        match client.put_weights(round, update.n_samples, &update.weights)? {
            PutOutcome::Accepted { .. }
            | PutOutcome::Rejected(RejectReason::AlreadyParticipated) => {
                tracing::debug!(client = id, round, "update delivered");
                done_round = Some(round);
                log.push(ClientRoundLog {
                    round,
                    n_samples: update.n_samples,
                    train_seconds,
                    global_eval,
                });
            }
            // The round closed while we trained; fetch the new one.
            PutOutcome::Rejected(RejectReason::StaleRound) => {}
            PutOutcome::Rejected(reason) => {
                return Err(Error::Rejected {
                    client: id.to_owned(),
                    round,
                    reason,
                })
            }
        }
    }
    Ok(log)
}
