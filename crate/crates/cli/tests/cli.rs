use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use fedround_cli::commands::WeightsFile;
use fedround_cli::manifest::RunManifest;
use fedround_cli::report::{parse_table, render_table, RunSummary};
use fedround_core::ingest::MNIST_FILES;
use fedround_core::MetricsReport;

fn fedround(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedround"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("FEDROUND_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    MNIST_FILES
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn prepare_validates_and_is_repeatable() {
    let Some(data) = mnist_dir() else { return };
    let tmp = tempfile::tempdir().unwrap();
    let data = data.to_str().unwrap();
    let a = fedround(
        tmp.path(),
        &["prepare", "--data-dir", data, "--out", "a.json"],
    );
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = fedround(
        tmp.path(),
        &["prepare", "--data-dir", data, "--out", "b.json"],
    );
    assert_eq!(b.status.code(), Some(0));
    let ma = std::fs::read(tmp.path().join("a.json")).unwrap();
    assert_eq!(ma, std::fs::read(tmp.path().join("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&ma).unwrap();
    assert_eq!(v["files"].as_array().unwrap().len(), 4);
}

#[test]
fn truncated_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    std::fs::create_dir(&data).unwrap();
    let mut bytes = vec![0, 0, 8, 3, 0, 0, 0xea, 0x60, 0, 0, 0, 28, 0, 0, 0, 28];
    bytes.extend(std::iter::repeat_n(0u8, 1000));
    std::fs::write(data.join(MNIST_FILES[0]), bytes).unwrap();
    let o = fedround(
        tmp.path(),
        &["prepare", "--data-dir", data.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(MNIST_FILES[0]), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_bad_usage_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedround(
        tmp.path(),
        &["run", "--config", "synth_fractions", "--max_round=3"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("max_round"));
    let o = fedround(tmp.path(), &["run", "--config", "no_such_config"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fedround(tmp.path(), &["run"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fedround(tmp.path(), &["report", "missing-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_round() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedround(
        tmp.path(),
        &[
            "run",
            "--config",
            "synth_fractions",
            "--max_rounds=2",
            "--learning_rate=1e300",
            "--out",
            "r",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("round 0"), "{}", stderr(&o));
}

fn synth_run(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        "synth_fractions",
        "--max_rounds=2",
        "--bootstrap_resamples=50",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    fedround(dir, &args)
}

#[test]
fn synthetic_run_writes_a_full_binary_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = synth_run(tmp.path(), "r", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = tmp.path().join("r");
    for f in [
        "manifest.json",
        "config.toml",
        "partition.json",
        "history.jsonl",
        "weights.json",
        "metrics.json",
        "confusion.txt",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let report: MetricsReport = read_json(&run.join("metrics.json"));
    assert_eq!(report.n_classes, 2);
    assert!(report.auprc.is_some() && report.auroc.is_some());
    for key in [
        "accuracy",
        "macro_f1",
        "auroc",
        "auprc",
        "f1_class_0",
        "f1_class_1",
    ] {
        let ci = report.ci[key];
        assert!(ci.lo <= ci.hi, "{key}");
    }
    let history = std::fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let partition: serde_json::Value = read_json(&run.join("partition.json"));
    let sizes: Vec<usize> = ["client-00", "client-01", "client-02"]
        .iter()
        .map(|c| partition["shards"][c].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![8_951, 5_370, 3_582]);
}

#[test]
fn seed_override_reaches_manifest_and_weights() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(synth_run(tmp.path(), "a", &[]).status.code(), Some(0));
    assert_eq!(
        synth_run(tmp.path(), "b", &["--seed", "7"]).status.code(),
        Some(0)
    );
    assert_eq!(synth_run(tmp.path(), "c", &[]).status.code(), Some(0));
    let manifest = |d: &str| RunManifest::read(&tmp.path().join(d)).unwrap();
    assert_eq!(manifest("a").seeds.master, 0);
    assert_eq!(manifest("b").seeds.master, 7);
    assert_eq!(manifest("a"), manifest("c"));
    let weights = |d: &str| read_json::<WeightsFile>(&tmp.path().join(d).join("weights.json"));
    assert_ne!(weights("a"), weights("b"));
    assert_eq!(weights("a"), weights("c"));
    let metrics = |d: &str| std::fs::read(tmp.path().join(d).join("metrics.json")).unwrap();
    assert_eq!(metrics("a"), metrics("c"));
}

#[test]
fn report_orders_rows_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let names = [
        ("imbalanced_skewed_fl", "Imbalanced and skewed FL"),
        ("basic_fl", "Basic FL"),
        ("skewed_fl", "Skewed FL"),
        ("cml_mnist", "CML"),
        ("imbalanced_fl", "Imbalanced FL"),
    ];
    for (name, label) in names {
        let n = format!("--name={name}");
        let l = format!("--label=\"{label}\"");
        let o = synth_run(tmp.path(), name, &[&n, &l, "--max_rounds=1"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let mut args = vec!["report", "--json", "report.json"];
    args.extend(names.iter().map(|(n, _)| *n));
    let o = fedround(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let labels: Vec<String> = parse_table(&text)
        .unwrap()
        .into_iter()
        .map(|r| r.label)
        .collect();
    assert_eq!(
        labels,
        [
            "CML",
            "Basic FL",
            "Imbalanced FL",
            "Skewed FL",
            "Imbalanced and skewed FL"
        ]
    );

    let runs: Vec<RunSummary> = read_json(&tmp.path().join("report.json"));
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    let parsed = parse_table(&render_table(&rows)).unwrap();
    for (a, b) in rows.iter().zip(&parsed) {
        assert_eq!(
            (&a.label, a.accuracy, a.auroc, a.f1, a.auprc),
            (&b.label, b.accuracy, b.auroc, b.f1, b.auprc)
        );
    }

    let one = fedround(tmp.path(), &["report", "basic_fl"]);
    assert_eq!(
        parse_table(&String::from_utf8(one.stdout).unwrap())
            .unwrap()
            .len(),
        1
    );
}

#[test]
fn mnist_runs_produce_reports() {
    let Some(data) = mnist_dir() else { return };
    let tmp = tempfile::tempdir().unwrap();
    let data = data.to_str().unwrap();
    let o = fedround(
        tmp.path(),
        &[
            "run",
            "--config",
            "basic_fl",
            "--data-dir",
            data,
            "--rounds",
            "2",
            "--bootstrap_resamples=10",
            "--out",
            "fl",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let history = std::fs::read_to_string(tmp.path().join("fl/history.jsonl")).unwrap();
    assert!(history.lines().count() >= 1);

    let o = fedround(
        tmp.path(),
        &[
            "run",
            "--config",
            "cml_mnist",
            "--data-dir",
            data,
            "--epochs=1",
            "--bootstrap_resamples=10",
            "--out",
            "cml",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: MetricsReport = read_json(&tmp.path().join("cml/metrics.json"));
    assert_eq!(report.confusion.len(), 10);
    assert!(report.auroc.is_some());
    for key in ["accuracy", "macro_f1", "auroc"] {
        assert!(report.ci.contains_key(key), "{key}");
    }
    let manifest = RunManifest::read(&tmp.path().join("cml")).unwrap();
    assert_eq!(manifest.inputs.len(), 4);
}

#[test]
fn serve_and_client_processes_match_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let bind = format!("127.0.0.1:{port}");
    let url = format!("http://{bind}");
    let common = ["--config", "synth_fractions", "--max_rounds=2"];

    let mut server = Command::new(env!("CARGO_BIN_EXE_fedround"))
        .args(["serve", "--bind", &bind, "--out", "served"])
        .args(common)
        .current_dir(tmp.path())
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let clients: Vec<_> = ["client-00", "client-01", "client-02"]
        .iter()
        .map(|id| {
            Command::new(env!("CARGO_BIN_EXE_fedround"))
                .args([
                    "client",
                    "--server-url",
                    &url,
                    "--client-id",
                    id,
                    "--poll-ms",
                    "20",
                ])
                .args(["--out", &format!("{id}.jsonl")])
                .args(common)
                .current_dir(tmp.path())
                .env("RUST_LOG", "warn")
                .spawn()
                .unwrap()
        })
        .collect();
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    assert!(server.wait().unwrap().success());

    let o = synth_run(tmp.path(), "local", &[]);
    assert_eq!(o.status.code(), Some(0));
    let served: WeightsFile = read_json(&tmp.path().join("served/weights.json"));
    let local: WeightsFile = read_json(&tmp.path().join("local/weights.json"));
    assert_eq!(served.round, Some(2));
    let bits = |w: &WeightsFile| w.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&served), bits(&local));
    let log = std::fs::read_to_string(tmp.path().join("client-01.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}
