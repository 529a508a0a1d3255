//! The subcommands, callable as library functions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fedround_core::nn::{init_weights, train_local, TrainOutcome};
use fedround_core::partition::{client_ids, make_partition, Partition};
use fedround_core::simulator::{evaluate_model, run_experiment, RunHistory};
use fedround_core::{ExecutionMode, MetricsReport, ServerConfig, Weights};
use fedround_net::{
    client_loop, run_networked, ClientOptions, NetworkOptions, ServerHandle, ServerOptions,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Setting};
use crate::error::{CliError, Result};
use crate::manifest::{
    inspect_mnist, write_atomic, write_json, DataManifest, RunManifest, MANIFEST_FILE,
};
use crate::report::{self, render_confusion, RunSummary, METRICS_FILE};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const CONFUSION_FILE: &str = "confusion.txt";
pub const PARTITION_FILE: &str = "partition.json";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const TRAINING_FILE: &str = "training.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub model: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
    pub values: Vec<f64>,
}

impl WeightsFile {
    fn new(w: &Weights, round: Option<u64>) -> Self {
        Self {
            model: w.spec().layer_sizes().to_vec(),
            round,
            values: w.values().to_vec(),
        }
    }
}

/// Summary of a centralized run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_samples: usize,
    pub epochs_run: usize,
    pub best_validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub report: MetricsReport,
    /// Federated runs only.
    pub history: Option<RunHistory>,
    /// Centralized runs only.
    pub training: Option<TrainingSummary>,
    pub seconds: f64,
}

pub fn prepare(data_dir: &Path, out: Option<&Path>) -> Result<(PathBuf, DataManifest)> {
    let manifest = inspect_mnist(data_dir)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| data_dir.join(MANIFEST_FILE));
    write_json(&path, &manifest)?;
    Ok((path, manifest))
}

pub fn partition(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<Partition> {
    let (train, _) = cfg.load_data(data_dir)?;
    let p = make_partition(&cfg.scheme(), train.labels())
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_json(out, &p)?;
    Ok(p)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| CliError::output(path, e.into()))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Trains as configured and writes the run directory.
pub fn run(
    cfg: &RunConfig,
    data_dir: &Path,
    out: &Path,
    net: &NetworkOptions,
) -> Result<RunOutcome> {
    let started = Instant::now();
    let experiment = cfg.experiment()?;
    let (train, test) = cfg.load_data(data_dir)?;
    let outputs: Vec<&str> = match cfg.setting {
        Setting::Federated => vec![
            PARTITION_FILE,
            HISTORY_FILE,
            WEIGHTS_FILE,
            METRICS_FILE,
            CONFUSION_FILE,
        ],
        Setting::Centralized => vec![TRAINING_FILE, WEIGHTS_FILE, METRICS_FILE, CONFUSION_FILE],
    };
    let manifest = RunManifest::new(
        cfg,
        (cfg.setting == Setting::Federated).then(|| experiment.clone()),
        data_dir,
        &outputs,
    )?;
    fs::create_dir_all(out).map_err(|e| CliError::output(out, e))?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;

    let (weights, history, training) = match cfg.setting {
        Setting::Centralized => {
            let w0 = init_weights(&experiment.model, experiment.init_seed());
            let t = Instant::now();
            let TrainOutcome {
                weights,
                n_samples,
                epochs_run,
                best_validation_accuracy,
            } = train_local(&w0, &train, &cfg.training())?;
            let summary = TrainingSummary {
                n_samples,
                epochs_run,
                best_validation_accuracy,
                seconds: t.elapsed().as_secs_f64(),
            };
            tracing::info!(
                epochs_run,
                ?best_validation_accuracy,
                "centralized training finished"
            );
            write_json(&out.join(TRAINING_FILE), &summary)?;
            (weights, None, Some(summary))
        }
        Setting::Federated => {
            let p = make_partition(&experiment.partition, train.labels())?;
            write_json(&out.join(PARTITION_FILE), &p)?;
            let history = match experiment.mode {
                ExecutionMode::InProcess => run_experiment(&experiment, &train, &test)?,
                ExecutionMode::Networked => run_networked(&experiment, &train, &test, net)?,
            };
            write_lines(&out.join(HISTORY_FILE), &history.evaluations)?;
            (history.final_weights.clone(), Some(history), None)
        }
    };

    let final_round = history.as_ref().map(|h| h.rounds.len() as u64);
    write_json(
        &out.join(WEIGHTS_FILE),
        &WeightsFile::new(&weights, final_round),
    )?;
    let report = evaluate_model(&weights, &test, cfg.bootstrap())?;
    write_json(&out.join(METRICS_FILE), &report)?;
    write_atomic(
        &out.join(CONFUSION_FILE),
        render_confusion(cfg.display_label(), &report.confusion).as_bytes(),
    )?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        manifest,
        report,
        history,
        training,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Grace period after the last round so polling clients see it before exit.
const LINGER: Duration = Duration::from_secs(3);

pub fn serve(cfg: &RunConfig, opts: ServerOptions, out: Option<&Path>) -> Result<()> {
    let experiment = cfg.experiment()?;
    let server_cfg = ServerConfig {
        expected_clients: client_ids(experiment.partition.kind.n_clients())
            .into_iter()
            .collect(),
        model_spec: experiment.model.clone(),
        init_seed: experiment.init_seed(),
        aggregation_mode: experiment.aggregation,
        max_rounds: experiment.max_rounds,
    };
    let server = ServerHandle::spawn(&server_cfg, opts)?;
    println!("listening on {}", server.url());
    let mut last = u64::MAX;
    while !server.is_finished() {
        let round = server.round();
        if round != last {
            tracing::info!(round, "round open");
            last = round;
        }
        std::thread::sleep(Duration::from_millis(200));
    }
    std::thread::sleep(LINGER);
    if let Some(dir) = out {
        let (round, w) = server.weights();
        write_json(&dir.join(WEIGHTS_FILE), &WeightsFile::new(&w, Some(round)))?;
        write_lines(&dir.join(ROUNDS_FILE), &server.history())?;
    }
    server.shutdown();
    Ok(())
}

pub struct ClientArgs<'a> {
    pub server_url: &'a str,
    pub client_id: &'a str,
    /// Previously written partition; recomputed from the config if absent.
    pub partition: Option<&'a Path>,
    /// Score each downloaded global model on the test set.
    pub evaluate: bool,
    pub log: Option<&'a Path>,
    pub poll_interval: Duration,
}

pub fn client(cfg: &RunConfig, data_dir: &Path, args: &ClientArgs<'_>) -> Result<()> {
    let experiment = cfg.experiment()?;
    let (train, test) = cfg.load_data(data_dir)?;
    let partition: Partition = match args.partition {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => make_partition(&experiment.partition, train.labels())?,
    };
    let idx = partition
        .shard(args.client_id)
        .ok_or_else(|| CliError::Usage(format!("no shard for client {}", args.client_id)))?;
    let shard = train.subset(idx)?;
    let mut opts = ClientOptions::new(args.server_url, args.client_id);
    opts.poll_interval = args.poll_interval;
    let log = client_loop(&opts, &experiment, &shard, args.evaluate.then_some(&test))?;
    match args.log {
        Some(path) => write_lines(path, &log)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            for entry in &log {
                let _ = writeln!(
                    stdout,
                    "{}",
                    serde_json::to_string(entry).unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

pub fn report(dirs: &[PathBuf], json: Option<&Path>) -> Result<(String, Vec<RunSummary>)> {
    if dirs.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one run directory".into(),
        ));
    }
    let runs = report::collect(dirs)?;
    if let Some(path) = json {
        write_json(path, &runs)?;
    }
    Ok((report::render(&runs), runs))
}
