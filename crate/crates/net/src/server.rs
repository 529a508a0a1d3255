//! The round server: a [`RoundState`] behind one mutex, served over HTTP.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use fedround_core::protocol::RoundRecord;
use fedround_core::{ClientUpdate, PutOutcome, RejectReason, RoundState, ServerConfig, Weights};
use serde::Deserialize;
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::wire::{PutBody, PutReply, RoundBody, WeightsBody};

/// Largest accepted request body; a 784-128-10 model is about 2.5 MB of JSON.
const BODY_LIMIT: usize = 256 << 20;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub bind: SocketAddr,
    /// Clients silent for longer than this are logged (never evicted).
    pub watchdog_timeout: Duration,
    /// Keep global weights after round 1, every `n`-th round and the last.
    pub snapshot_every: Option<u64>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            watchdog_timeout: Duration::from_secs(300),
            snapshot_every: None,
        }
    }
}

struct Shared {
    state: RoundState<f64>,
    last_seen: BTreeMap<String, Instant>,
}

impl Shared {
    fn touch(&mut self, client_id: &str) {
        if self.state.expected_clients().contains(client_id) {
            self.last_seen.insert(client_id.to_owned(), Instant::now());
        }
    }

    fn waiting_on(&self) -> Vec<String> {
        let pending: Vec<&str> = self.state.pending_clients().collect();
        self.state
            .expected_clients()
            .iter()
            .filter(|c| !pending.contains(&c.as_str()))
            .cloned()
            .collect()
    }

    fn silent(&self, timeout: Duration) -> Vec<String> {
        if self.state.is_finished() {
            return Vec::new();
        }
        self.waiting_on()
            .into_iter()
            .filter(|c| self.last_seen.get(c).is_some_and(|t| t.elapsed() > timeout))
            .collect()
    }
}

type AppState = Arc<Mutex<Shared>>;

fn lock(state: &AppState) -> MutexGuard<'_, Shared> {
    // A panic inside a handler cannot leave RoundState half-updated: every
    // mutation happens in RoundState::put after all fallible checks.
    state.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Default, Deserialize)]
struct RoundQuery {
    client_id: Option<String>,
}

async fn get_round(State(state): State<AppState>, Query(q): Query<RoundQuery>) -> Json<RoundBody> {
    let mut shared = lock(&state);
    if let Some(id) = q.client_id {
        shared.touch(&id);
    }
    Json(RoundBody {
        round: shared.state.round(),
    })
}

async fn get_weight(State(state): State<AppState>) -> Json<WeightsBody> {
    let shared = lock(&state);
    let (round, w) = shared.state.weights();
    Json(WeightsBody {
        round,
        weights: w.values().to_vec(),
    })
}

async fn put_weight(
    State(state): State<AppState>,
    Json(body): Json<PutBody>,
) -> (StatusCode, Json<PutReply>) {
    let mut shared = lock(&state);
    shared.touch(&body.client_id);
    let spec = shared.state.weights().1.spec().clone();
    let outcome = match Weights::from_values(spec, body.weights) {
        Ok(weights) => shared.state.put(ClientUpdate {
            client_id: body.client_id,
            round: body.round,
            weights,
            n_samples: body.n_samples,
        }),
        Err(_) => Ok(PutOutcome::Rejected(
            shared
                .state
                .admission(&body.client_id, body.round)
                .unwrap_or(RejectReason::ShapeMismatch),
        )),
    };
    match outcome {
        Ok(PutOutcome::Accepted { .. }) => (
            StatusCode::OK,
            Json(PutReply {
                accepted: true,
                reason: None,
            }),
        ),
        Ok(PutOutcome::Rejected(reason)) => (
            StatusCode::CONFLICT,
            Json(PutReply {
                accepted: false,
                reason: Some(reason.as_str().to_owned()),
            }),
        ),
        Err(e) => {
            tracing::error!(error = %e, "aggregation failed");
            (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(PutReply {
                    accepted: false,
                    reason: Some(e.to_string()),
                }),
            )
        }
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/round", get(get_round))
        .route("/weight", get(get_weight).put(put_weight))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// A server running on its own thread. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: AppState,
    watchdog_timeout: Duration,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn spawn(cfg: &ServerConfig, opts: ServerOptions) -> Result<Self> {
        Self::spawn_with_state(RoundState::new(cfg)?, opts)
    }

    pub fn spawn_with_state(mut state: RoundState<f64>, opts: ServerOptions) -> Result<Self> {
        if let Some(every) = opts.snapshot_every {
            state.keep_snapshots(every);
        }
        let listener = TcpListener::bind(opts.bind).map_err(|source| Error::Bind {
            addr: opts.bind,
            source,
        })?;
        let addr = listener.local_addr().map_err(|source| Error::Bind {
            addr: opts.bind,
            source,
        })?;
        listener
            .set_nonblocking(true)
            .map_err(|source| Error::Bind { addr, source })?;

        let started = Instant::now();
        let last_seen = state
            .expected_clients()
            .iter()
            .map(|c| (c.clone(), started))
            .collect();
        let shared = Arc::new(Mutex::new(Shared { state, last_seen }));
        let (tx, rx) = oneshot::channel();
        let app = router(shared.clone());
        let watch = shared.clone();
        let timeout = opts.watchdog_timeout;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|source| Error::Bind { addr, source })?;
        let thread = std::thread::Builder::new()
            .name("fedround-server".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            tracing::error!(error = %e, "cannot adopt listener");
                            return;
                        }
                    };
                    tokio::spawn(watchdog(watch, timeout));
                    let served = axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await;
                    if let Err(e) = served {
                        tracing::error!(error = %e, "server stopped");
                    }
                });
            })
            .map_err(|source| Error::Bind { addr, source })?;
        tracing::info!(%addr, "server listening");
        Ok(Self {
            addr,
            shared,
            watchdog_timeout: timeout,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn round(&self) -> u64 {
        lock(&self.shared).state.round()
    }

    pub fn is_finished(&self) -> bool {
        lock(&self.shared).state.is_finished()
    }

    pub fn weights(&self) -> (u64, Weights<f64>) {
        let shared = lock(&self.shared);
        let (r, w) = shared.state.weights();
        (r, w.clone())
    }

    pub fn history(&self) -> Vec<RoundRecord> {
        lock(&self.shared).state.history().to_vec()
    }

    pub fn take_snapshots(&self) -> BTreeMap<u64, Weights<f64>> {
        lock(&self.shared).state.take_snapshots()
    }

    /// Expected clients that have not reported for the open round.
    pub fn waiting_on(&self) -> Vec<String> {
        lock(&self.shared).waiting_on()
    }

    /// Clients the open round waits on that have not been heard from
    /// within the watchdog timeout.
    pub fn silent_clients(&self) -> Vec<String> {
        lock(&self.shared).silent(self.watchdog_timeout)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

async fn watchdog(shared: AppState, timeout: Duration) {
    let mut tick = tokio::time::interval((timeout / 2).max(Duration::from_millis(10)));
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last_warned = Vec::new();
    loop {
        tick.tick().await;
        let (round, silent) = {
            let s = lock(&shared);
            (s.state.round(), s.silent(timeout))
        };
        if !silent.is_empty() && silent != last_warned {
            tracing::warn!(round, clients = ?silent, "clients silent past watchdog timeout");
        }
        last_warned = silent;
    }
}
