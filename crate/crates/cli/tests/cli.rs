use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use taxi_alert::commands::{
    cmd_build_dataset, cmd_calibrate, cmd_evaluate, cmd_explain, cmd_predict, cmd_simulate, cmd_train, decide,
    Decision, Selector,
};
use taxi_alert::config::{RunConfig, DEFAULT_FIRST_DAY};
use taxiout::dataset::{read_dataset_file, write_dataset_file, Split};
use taxiout::rasterize::FrameTensor;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxi-alert"))
        .args(args)
        .output()
        .expect("spawn taxi-alert")
}

fn cfg_in(dir: &Path, days: usize) -> RunConfig {
    RunConfig {
        out_dir: dir.to_path_buf(),
        days,
        ..Default::default()
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Fifteen simulated days, trained for two epochs and calibrated. Shared by the
/// tests that need a model.
fn pipeline() -> &'static (tempfile::TempDir, RunConfig) {
    static P: OnceLock<(tempfile::TempDir, RunConfig)> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(dir.path(), 15);
        cfg.train.max_epochs = 2;
        cfg.train.patience = 1;
        cfg.boost.trees = 30;
        cmd_simulate(&cfg).unwrap();
        cmd_build_dataset(&cfg).unwrap();
        cmd_train(&cfg).unwrap();
        cmd_calibrate(&cfg).unwrap();
        (dir, cfg)
    })
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bin(&["--days", "1", "--seed", "7", "--out-dir", d.path().to_str().unwrap(), "simulate"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (read_dir_bytes(&a.path().join("logs")), read_dir_bytes(&b.path().join("logs")));
    assert_eq!(fa.len(), 2);
    assert_eq!(fa, fb);
}

#[test]
fn zero_days_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let out = bin(&["--days", "0", "--out-dir", d.path().to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--days"));
    assert!(!d.path().join("logs").exists());
}

#[test]
fn bad_config_field_is_named_and_exit_is_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let out = bin(&["--coverage", "1.5", "--out-dir", d.path().to_str().unwrap(), "simulate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("coverage"));
}

#[test]
fn one_day_gives_136_samples_on_a_20x33_grid() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().to_str().unwrap();
    assert!(bin(&["--days", "1", "--out-dir", p, "simulate"]).status.success());
    let out = bin(&["--days", "1", "--grid", "20x33", "--out-dir", p, "build-dataset"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = read_dataset_file(&d.path().join("dataset.txds")).unwrap();
    assert_eq!(ds.manifest.enumerated_samples, 136);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("136 samples enumerated"));
    assert_eq!((ds.manifest.grid.h, ds.manifest.grid.w), (20, 33));
    assert!(d.path().join("build-dataset/run.json").exists());
}

#[test]
fn build_dataset_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = cfg_in(d.path(), 2);
        cmd_simulate(&cfg).unwrap();
        cmd_build_dataset(&cfg).unwrap();
    }
    assert_eq!(
        std::fs::read(a.path().join("dataset.txds")).unwrap(),
        std::fs::read(b.path().join("dataset.txds")).unwrap()
    );
}

#[test]
fn missing_log_is_named() {
    let d = tempfile::tempdir().unwrap();
    let cfg = cfg_in(d.path(), 2);
    cmd_simulate(&cfg).unwrap();
    let gone = d.path().join("logs/day_001.jsonl");
    std::fs::remove_file(&gone).unwrap();
    let err = format!("{:#}", cmd_build_dataset(&cfg).unwrap_err());
    assert!(err.contains("day_001.jsonl"), "{err}");
}

#[test]
fn max_epochs_one_writes_one_history_row() {
    let (dir, base) = pipeline();
    let out_dir = dir.path().join("one_epoch");
    let p = out_dir.to_str().unwrap();
    let ds = base.dataset_path();
    let out = bin(&["--out-dir", p, "--dataset", ds.to_str().unwrap(), "--max-epochs", "1", "train"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("best validation loss"));
    let csv = std::fs::read_to_string(out_dir.join("train/history.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
}

#[test]
fn calibrate_reports_are_consistent() {
    let (_dir, cfg) = pipeline();
    let rd = cfg.report_dir("calibrate");
    let roc = std::fs::read_to_string(rd.join("roc.csv")).unwrap();
    let fprs: Vec<f64> = roc
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(fprs.len() > 2);
    assert!(fprs.windows(2).all(|w| w[1] <= w[0]), "fpr must not increase with tau");

    let svg = std::fs::read_to_string(rd.join("roc.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray"));
    assert_eq!(svg.matches("<circle").count(), 1);

    let conf = std::fs::read_to_string(rd.join("confusion.csv")).unwrap();
    let row: Vec<f64> = conf.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (tn, fp, fn_, tp) = (row[0], row[1], row[2], row[3]);
    assert!((row[4] - tn / (tn + fp)).abs() < 5e-4);
    assert!((row[5] - tp / (tp + fn_)).abs() < 5e-4);
    assert!(std::fs::read_to_string(rd.join("auc.txt")).unwrap().starts_with("auc,"));
}

#[test]
fn explain_writes_thirty_pairs() {
    let (_dir, cfg) = pipeline();
    let sel = Selector {
        split: Some(Split::Test),
        index: Some(0),
        t0: None,
    };
    let s = cmd_explain(cfg, &sel, 1).unwrap();
    assert_eq!(s.files.len(), 60);
    let dir = cfg.report_dir("explain");
    for k in 0..30 {
        assert!(dir.join(format!("frame_{k:02}.svg")).exists());
        assert!(dir.join(format!("cam_{k:02}.svg")).exists());
    }
    let none = Selector {
        split: Some(Split::Test),
        index: Some(usize::MAX),
        t0: None,
    };
    assert!(cmd_explain(cfg, &none, 1).is_err());
}

#[test]
fn all_zero_sample_gives_blank_overlays() {
    let (dir, base) = pipeline();
    let mut ds = read_dataset_file(&base.dataset_path()).unwrap();
    let (h, w) = (ds.manifest.grid.h, ds.manifest.grid.w);
    let s = &mut ds.samples[0];
    s.frames = vec![FrameTensor::zeros(h, w); 30];
    s.metadata.iter_mut().for_each(|m| m.iter_mut().for_each(|v| *v = 0.0));
    let zpath = dir.path().join("zero.txds");
    write_dataset_file(&zpath, &ds).unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().join("zero_explain"),
        dataset: Some(zpath),
        model: Some(base.model_path()),
        ..base.clone()
    };
    let sel = Selector {
        split: None,
        index: Some(0),
        t0: None,
    };
    cmd_explain(&cfg, &sel, 1).unwrap();
    for k in 0..30 {
        let svg = std::fs::read_to_string(cfg.report_dir("explain").join(format!("cam_{k:02}.svg"))).unwrap();
        assert!(!svg.contains("rgb("), "minute {k} has heat");
    }
}

#[test]
fn predict_needs_thirty_minutes_and_is_repeatable() {
    let (_dir, cfg) = pipeline();
    let log = cfg.logs_dir().join("day_003.jsonl");
    let day = DEFAULT_FIRST_DAY + 3 * 86_400;
    let err = cmd_predict(cfg, &log, day + 29 * 60, None).unwrap_err();
    assert!(format!("{err:#}").contains("history"), "{err:#}");
    let a = cmd_predict(cfg, &log, day + 30 * 60, None).unwrap();
    let b = cmd_predict(cfg, &log, day + 30 * 60, None).unwrap();
    assert_eq!(a.p.to_bits(), b.p.to_bits());
    assert_eq!(a.window_start, day);
    assert_eq!(a.decision, decide(a.p, cfg.tau));
}

#[test]
fn predict_binary_prints_decision() {
    let (_dir, cfg) = pipeline();
    let log: PathBuf = cfg.logs_dir().join("day_004.jsonl");
    let clock = (DEFAULT_FIRST_DAY + 4 * 86_400 + 12 * 3600).to_string();
    let run_json = cfg.report_dir("calibrate").join("run.json");
    let args = ["--config", run_json.to_str().unwrap(), "--tau", "0", "predict", "--log", log.to_str().unwrap(), "--clock", &clock];
    let out = bin(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("-> ALERT"));
}

#[test]
fn alert_rule() {
    assert_eq!(decide(0.7, 0.5), Decision::Alert);
    assert_eq!(decide(0.3, 0.5), Decision::NoAlert);
}

#[test]
fn evaluate_any_split() {
    let (_dir, cfg) = pipeline();
    let s = cmd_evaluate(cfg, Split::Validation).unwrap();
    let c = s.confusion;
    assert_eq!(c.total(), s.samples as u64);
    assert!(cfg.report_dir("evaluate").join("summary.json").exists());
}
