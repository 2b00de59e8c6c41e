use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedlab_cli::pipeline::{IngestReport, SweepRow};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fedlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedlab"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("FEDLAB_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn toy(sub: &str, out: &Path, extra: &[&str]) -> Output {
    let config = fixture("toy.toml");
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fedlab(&args, &[])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("report"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn full_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = toy("run", dir, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = fedlab(&["report", "--out", dir.to_str().unwrap()], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = report_bytes(&a);
    assert_eq!(ra.len(), 7 * 2 + 1);
    assert_eq!(ra, report_bytes(&b));
    for rel in ["attack/summary.json", "attack/imia.jsonl", "train/checkpoint.bin", "train/traces/round-00002.trace"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let table = std::fs::read_to_string(a.join("report/attack_f1.csv")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["random", "kmeans", "imia"]);
    assert!(!a.join("FAILED").exists());
}

#[test]
fn replay_reproduces_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = toy("run", &out, &["--set", "sweep.lambda=[]", "--set", "sweep.mu=[]"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fedlab(&["replay", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("matches"));
    assert!(out.join("replay/attack/imia.jsonl").exists());
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let stages = "stages=[\"train\", \"attack\"]";
    let (a, b) = (tmp.path().join("par"), tmp.path().join("seq"));
    assert!(toy("run", &a, &["--set", stages, "--set", "execution=\"parallel\""]).status.success());
    let o = fedlab(
        &[
            "run",
            "--config",
            fixture("toy.toml").to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--set",
            stages,
            "--set",
            "execution=\"sequential\"",
        ],
        &[("FEDLAB_WORKERS", "2")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for rel in ["attack/summary.json", "train/summary.json", "train/checkpoint.bin"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn mu_grid_gives_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mu");
    let o = toy(
        "run",
        &out,
        &[
            "--set",
            "stages=[\"train\", \"attack\", \"sweep\"]",
            "--set",
            "sweep.lambda=[]",
            "--set",
            "sweep.gamma=[]",
            "--set",
            "sweep.mu=[0.0, 0.1, 0.4, 0.7, 1.0]",
            "--set",
            "train.global_rounds=1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<SweepRow> = serde_json::from_str(&std::fs::read_to_string(out.join("sweep/mu.json")).unwrap()).unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    assert_eq!(values, [0.0, 0.1, 0.4, 0.7, 1.0]);
}

#[test]
fn ingest_reports_movielens_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ml100k.toml");
    let out = tmp.path().join("ingest");
    let o = fedlab(&["ingest", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: IngestReport = serde_json::from_str(&std::fs::read_to_string(out.join("ingest/stats.json")).unwrap()).unwrap();
    assert_eq!((report.stats.users, report.stats.items, report.stats.interactions), (943, 1682, 100_000));
    assert!(!out.join("train").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let cases: [&[&str]; 4] = [
        &["--set", "train.epochs=3"],
        &["--set", "dataset.path=\"missing.data\""],
        &["--set", "stages=[\"attack\", \"ingest\"]"],
        &["--set", "attack.imia.gamma=1.5"],
    ];
    for extra in cases {
        let o = toy("run", &out, extra);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
    }
    let o = fedlab(&["run", "--config", "/nonexistent.toml"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = fedlab(&["frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = fedlab(
        &["ingest", "--config", fixture("toy.toml").to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[("FEDLAB_WORKERS", "many")],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FEDLAB_WORKERS"));
}

#[test]
fn runtime_failures_exit_with_two_and_leave_a_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("partial");
    let o = toy("run", &out, &["--set", "stages=[\"ingest\", \"attack\"]"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let marker = std::fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.contains("attack"), "{marker}");
    assert!(out.join("ingest/stats.json").exists());
    assert!(out.join("config.toml").exists());

    // The next successful run clears the marker.
    assert!(toy("train", &out, &[]).status.success());
    assert!(!out.join("FAILED").exists());
}

#[test]
fn report_on_an_empty_run_names_the_missing_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedlab(&["report", "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for stage in ["attack", "sweep (lambda)", "analyze (cost)"] {
        assert!(err.contains(stage), "{err}");
    }
}

#[test]
fn snapshot_reproduces_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("snap");
    assert!(toy("ingest", &out, &["--set", "train.lr=0.02"]).status.success());
    let snapshot = out.join("config.toml");
    let cfg = fedlab_cli::ExperimentConfig::load(&snapshot, &[]).unwrap();
    assert_eq!(cfg.train.lr, 0.02);
    assert!(cfg.dataset.path.is_absolute());
    assert_eq!(cfg.out, out);
}
