//! Argument parsing and dispatch for the `fedround` binary.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use fedround_net::{NetworkOptions, ServerOptions};

use crate::commands::{self, ClientArgs};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fedround",
    version,
    about = "Federated averaging experiments on MNIST and a synthetic binary task",
    after_help = "Config keys can be overridden with --key=value after the subcommand, e.g. --max_rounds=5."
)]
struct Cli {
    /// Log progress at debug level (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    InProcess,
    Networked,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Bundled config name or path to a TOML file.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArg {
    #[arg(long, env = "FEDROUND_DATA_DIR", default_value = "data/mnist")]
    data_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the MNIST files and write a digest manifest.
    Prepare {
        #[command(flatten)]
        data: DataArg,
        /// Manifest path; defaults to <data-dir>/manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the client shards of a config as JSON.
    Partition {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and write its run directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArg,
        /// Run directory; defaults to runs/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Serve the round protocol for a federated config.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory for final weights and round records.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seconds of client silence before the watchdog logs it.
        #[arg(long, default_value_t = 300)]
        watchdog_secs: u64,
    },
    /// Take part in a served experiment as one client.
    Client {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        server_url: String,
        #[arg(long)]
        client_id: String,
        /// Partition JSON written by `partition`; recomputed if omitted.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Score each downloaded global model on the test set.
        #[arg(long)]
        eval: bool,
        /// Per-round log (JSON lines); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
    },
    /// Compare finished runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn long_flags() -> Vec<String> {
    fn walk(cmd: &clap::Command, out: &mut Vec<String>) {
        out.extend(
            cmd.get_arguments()
                .filter_map(|a| a.get_long().map(str::to_owned)),
        );
        for sub in cmd.get_subcommands() {
            walk(sub, out);
        }
    }
    let mut out = vec!["help".to_owned(), "version".to_owned()];
    walk(&Cli::command(), &mut out);
    out
}

/// Separates `--key=value` config overrides from ordinary flags.
pub fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let flags = long_flags();
    let mut kept = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut passthrough = false;
    for arg in args {
        let pair = arg
            .to_str()
            .filter(|_| !passthrough)
            .and_then(|s| s.strip_prefix("--"))
            .and_then(|s| s.split_once('='))
            .filter(|(k, _)| !flags.iter().any(|f| f == k))
            .map(|(k, v)| (k.to_owned(), v.to_owned()));
        match pair {
            Some(p) => overrides.push(p),
            None => {
                passthrough |= arg == "--";
                kept.push(arg);
            }
        }
    }
    (kept, overrides)
}

fn load(
    args: &ConfigArgs,
    mut overrides: Vec<(String, String)>,
    mode: Option<Mode>,
) -> Result<RunConfig> {
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(rounds) = args.rounds {
        overrides.push(("max_rounds".into(), rounds.to_string()));
    }
    if let Some(mode) = mode {
        let m = match mode {
            Mode::InProcess => "\"in_process\"",
            Mode::Networked => "\"networked\"",
        };
        overrides.push(("mode".into(), m.into()));
    }
    RunConfig::load_with(&args.config, &overrides)
}

fn init_tracing(verbose: bool) {
    use tracing_subscriber::EnvFilter;
    let default = if verbose { "debug" } else { "info" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn dispatch(cli: Cli, overrides: Vec<(String, String)>) -> Result<()> {
    if !overrides.is_empty()
        && matches!(
            cli.command,
            Command::Prepare { .. } | Command::Report { .. }
        )
    {
        return Err(CliError::Usage(format!(
            "unexpected argument --{}",
            overrides[0].0
        )));
    }
    match cli.command {
        Command::Prepare { data, out } => {
            let (path, manifest) = commands::prepare(&data.data_dir, out.as_deref())?;
            for f in &manifest.files {
                println!("{}  {}  {} items", f.sha256, f.name, f.items);
            }
            println!("wrote {}", path.display());
        }
        Command::Partition { config, data, out } => {
            let cfg = load(&config, overrides, None)?;
            let out = out.unwrap_or_else(|| {
                Path::new("runs")
                    .join(&cfg.name)
                    .join(commands::PARTITION_FILE)
            });
            let p = commands::partition(&cfg, &data.data_dir, &out)?;
            for (id, shard) in &p.shards {
                println!("{id}  {} samples", shard.len());
            }
            println!("wrote {}", out.display());
        }
        Command::Run {
            config,
            data,
            out,
            mode,
        } => {
            let cfg = load(&config, overrides, mode)?;
            let out = out.unwrap_or_else(|| Path::new("runs").join(&cfg.name));
            let outcome = commands::run(&cfg, &data.data_dir, &out, &NetworkOptions::default())?;
            let summary = crate::report::summarize(&cfg.name, cfg.display_label(), &outcome.report);
            print!("{}", crate::report::render(std::slice::from_ref(&summary)));
            println!("wrote {} in {:.1}s", out.display(), outcome.seconds);
        }
        Command::Serve {
            config,
            bind,
            out,
            watchdog_secs,
        } => {
            let cfg = load(&config, overrides, None)?;
            let opts = ServerOptions {
                bind,
                watchdog_timeout: Duration::from_secs(watchdog_secs),
                snapshot_every: None,
            };
            commands::serve(&cfg, opts, out.as_deref())?;
        }
        Command::Client {
            config,
            data,
            server_url,
            client_id,
            partition,
            eval,
            out,
            poll_ms,
        } => {
            let cfg = load(&config, overrides, None)?;
            let args = ClientArgs {
                server_url: &server_url,
                client_id: &client_id,
                partition: partition.as_deref(),
                evaluate: eval,
                log: out.as_deref(),
                poll_interval: Duration::from_millis(poll_ms),
            };
            commands::client(&cfg, &data.data_dir, &args)?;
        }
        Command::Report { runs, json } => {
            let (text, _) = commands::report(&runs, json.as_deref())?;
            print!("{text}");
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with(args: Vec<OsString>) -> i32 {
    let (args, overrides) = split_overrides(args);
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => crate::error::EXIT_USAGE,
            };
        }
    };
    init_tracing(cli.verbose);
    match dispatch(cli, overrides) {
        Ok(()) => 0,
        Err(e) => {
            match e.round() {
                Some(round) => eprintln!("error (round {round}): {e}"),
                None => eprintln!("error: {e}"),
            }
            e.exit_code()
        }
    }
}
