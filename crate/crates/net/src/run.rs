//! Whole experiments over loopback HTTP: one server, one thread per client.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use fedround_core::partition::make_partition;
use fedround_core::simulator::{client_shards, round_eval, ExperimentConfig, RunHistory};
use fedround_core::Dataset;

use crate::client::{client_loop, ClientOptions, RetryPolicy};
use crate::error::{Error, Result};
use crate::server::{ServerHandle, ServerOptions};

#[derive(Debug, Clone)]
pub struct NetworkOptions {
    pub bind: SocketAddr,
    pub poll_interval: Duration,
    pub retry: RetryPolicy,
    /// Abort when the round counter has not moved for this long.
    pub stall_timeout: Duration,
    /// Fault injection: this client leaves just before the given round.
    pub drop_client: Option<(String, u64)>,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            poll_interval: Duration::from_millis(500),
            retry: RetryPolicy::default(),
            stall_timeout: Duration::from_secs(600),
            drop_client: None,
        }
    }
}

type ClientThread = (String, thread::JoinHandle<Result<()>>);

fn stop_all(stop: &AtomicBool, clients: Vec<ClientThread>) {
    stop.store(true, Ordering::Relaxed);
    for (_, handle) in clients {
        let _ = handle.join();
    }
}

/// Same contract as the in-process simulator, but every update travels
/// through the HTTP endpoints. Global metrics are computed from server-side
/// snapshots, so they match the in-process run round for round.
pub fn run_networked(
    cfg: &ExperimentConfig,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    opts: &NetworkOptions,
) -> Result<RunHistory<f64>> {
    cfg.validate()?;
    let partition = make_partition(&cfg.partition, train.labels())?;
    let shards = client_shards(&partition, train)?;
    let server = ServerHandle::spawn(
        &cfg.server_config(&partition),
        ServerOptions {
            bind: opts.bind,
            watchdog_timeout: opts.stall_timeout / 2,
            snapshot_every: Some(cfg.eval_every),
        },
    )?;
    let url = server.url();
    let stop = Arc::new(AtomicBool::new(false));

    let mut clients: Vec<ClientThread> = Vec::with_capacity(shards.len());
    for (id, shard) in shards {
        let mut copts = ClientOptions::new(url.clone(), id.clone());
        copts.poll_interval = opts.poll_interval;
        copts.retry = opts.retry.clone();
        copts.stop = stop.clone();
        copts.leave_before_round = opts
            .drop_client
            .as_ref()
            .filter(|(c, _)| *c == id)
            .map(|(_, r)| *r);
        let experiment = cfg.clone();
        let handle = thread::Builder::new()
            .name(id.clone())
            .spawn(move || client_loop(&copts, &experiment, &shard, None).map(drop))
            .map_err(|e| Error::Protocol {
                url: url.clone(),
                msg: format!("cannot start client thread: {e}"),
            })?;
        clients.push((id, handle));
    }

    let started_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut evaluations = Vec::new();
    let mut last_round = 0;
    let mut last_progress = Instant::now();
    let tick = (opts.poll_interval / 5).clamp(Duration::from_millis(5), Duration::from_millis(100));
    loop {
        for (round, w) in server.take_snapshots() {
            if cfg.is_eval_round(round) {
                let eval = round_eval(round, &w, test)?;
                tracing::info!(round, accuracy = eval.accuracy, "evaluated global model");
                evaluations.push(eval);
            }
        }
        if server.is_finished() {
            break;
        }
        if let Some(i) = clients.iter().position(|(_, h)| h.is_finished()) {
            let (id, handle) = clients.swap_remove(i);
            match handle.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => {
                    stop_all(&stop, clients);
                    return Err(Error::ClientFailed {
                        client: id,
                        source: Box::new(e),
                    });
                }
                Err(_) => {
                    stop_all(&stop, clients);
                    return Err(Error::ClientPanicked(id));
                }
            }
        }
        let round = server.round();
        if round != last_round {
            last_round = round;
            last_progress = Instant::now();
        } else if last_progress.elapsed() > opts.stall_timeout {
            let silent = server.waiting_on();
            tracing::error!(round, clients = ?silent, "watchdog timeout");
            stop_all(&stop, clients);
            return Err(Error::Stalled {
                round,
                waited: last_progress.elapsed(),
                silent,
            });
        }
        thread::sleep(tick);
    }

    for (id, handle) in clients {
        match handle.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                tracing::warn!(client = %id, error = %e, "client ended with an error after the last round")
            }
            Err(_) => return Err(Error::ClientPanicked(id)),
        }
    }

    let rounds = server.history();
    let mut prev = started_ms;
    let round_seconds = rounds
        .iter()
        .map(|r| {
            let dt = r.aggregated_at_ms.saturating_sub(prev) as f64 / 1e3;
            prev = r.aggregated_at_ms;
            dt
        })
        .collect();
    let final_weights = server.weights().1;
    server.shutdown();
    Ok(RunHistory {
        evaluations,
        final_weights,
        rounds,
        round_seconds,
    })
}
