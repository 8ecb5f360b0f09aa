use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use taxiout::calibrate::{
    auc_line, confusion_at, equal_error_threshold, fit_gbt, predict_proba, roc_curve, roc_svg, write_confusion_csv,
    write_roc_csv, BoostModel, ConfusionMatrix, RocCurve, DEFAULT_SWEEP,
};
use taxiout::dataset::{
    build_day, build_samples, live_window, read_dataset_file, read_manifest_file, split_dataset, write_dataset_file,
    Dataset, DatasetManifest, DatasetParams, DayInputs, SampleWindow, Split,
};
use taxiout::ingest::{read_track_log, TrackLog};
use taxiout::nn::{
    embed_all, forward, grad_cam, read_model_file, train, write_history_csv, write_model_file, EpochRecord, ModelInput,
    ModelParams, Prediction, WindowSet,
};
use taxiout::rasterize::{fit_extent, GridSpec};
use taxiout::surface_sim::{simulate_day, CongestionParams, DemandSchedule, ProjectionJitter};

use crate::config::{RunConfig, SECONDS_PER_DAY};
use crate::render::{cam_range, cam_svg, frame_svg};

pub const LOG_MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: usize,
    pub seed: u64,
    pub day_start: i64,
    pub file: String,
    pub records: usize,
}

/// Index of a simulated log directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogManifest {
    pub airport_id: String,
    pub schedule: DemandSchedule,
    pub congestion: CongestionParams,
    pub days: Vec<LogEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn read_log_file(path: &Path) -> Result<TrackLog> {
    let f = File::open(path).with_context(|| format!("missing log file {}", path.display()))?;
    read_track_log(BufReader::new(f)).with_context(|| format!("parsing log {}", path.display()))
}

fn jitter(cfg: &RunConfig) -> ProjectionJitter {
    ProjectionJitter {
        amplitude: cfg.projection_jitter,
        seed: cfg.seed,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub logs_dir: PathBuf,
    pub manifest: LogManifest,
}

/// Simulates `days` days; day `d` uses seed `seed + d`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let layout_cfg = cfg.layout_config()?;
    let layout = cfg.airport_layout()?;
    let schedule = cfg.demand_schedule()?;
    let dir = cfg.logs_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut days = Vec::with_capacity(cfg.days);
    for d in 0..cfg.days {
        let seed = cfg.seed.wrapping_add(d as u64);
        let day_start = cfg.first_day + d as i64 * SECONDS_PER_DAY;
        let log = simulate_day(&layout, &schedule, &cfg.congestion, seed, day_start)
            .with_context(|| format!("simulating day {d}"))?;
        let file = format!("day_{d:03}.jsonl");
        let mut w = create_file(&dir.join(&file))?;
        log.write_to(&mut w)?;
        w.flush()?;
        days.push(LogEntry {
            index: d,
            seed,
            day_start,
            file,
            records: log.len(),
        });
    }
    let manifest = LogManifest {
        airport_id: layout_cfg.airport_id,
        schedule,
        congestion: cfg.congestion.clone(),
        days,
    };
    write_json(&dir.join(LOG_MANIFEST), &manifest)?;
    cfg.write_record("simulate")?;
    Ok(SimulateSummary { logs_dir: dir, manifest })
}

pub fn read_log_manifest(dir: &Path) -> Result<LogManifest> {
    let path = dir.join(LOG_MANIFEST);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading log manifest {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing log manifest {}", path.display()))
}

/// Fits the grid over every logged position, then builds, splits and writes samples.
pub fn cmd_build_dataset(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let dir = cfg.logs_dir();
    let logs = read_log_manifest(&dir)?;
    ensure!(!logs.days.is_empty(), "log manifest {} lists no days", dir.display());
    let paths: Vec<PathBuf> = logs.days.iter().map(|e| dir.join(&e.file)).collect();
    for p in &paths {
        ensure!(p.exists(), "missing log file {}", p.display());
    }
    let mut points = Vec::new();
    for p in &paths {
        let log = read_log_file(p)?;
        points.extend(log.points().map(|t| (t.lat, t.lon)));
    }
    let extent = fit_extent(&points, cfg.coverage).context("fitting grid extent")?;
    drop(points);
    let grid = GridSpec::new(extent, cfg.grid.h, cfg.grid.w)?;
    let inputs = DayInputs {
        grid: &grid,
        norms: &cfg.norms,
        schedule: &logs.schedule,
        jitter: jitter(cfg),
        metadata_dim: cfg.metadata_dim,
    };
    let mut samples = Vec::new();
    for (entry, p) in logs.days.iter().zip(&paths) {
        let log = read_log_file(p)?;
        let day = build_day(&log, entry.day_start, &inputs).with_context(|| format!("building day {}", p.display()))?;
        samples.extend(build_samples(&day, cfg.threshold_minutes, cfg.stride_minutes)?);
    }
    let split = split_dataset(samples, cfg.fractions, cfg.purge_gap_minutes)?;
    let params = DatasetParams {
        airport_id: logs.airport_id.clone(),
        grid,
        norms: cfg.norms,
        metadata_dim: cfg.metadata_dim,
        threshold_minutes: cfg.threshold_minutes,
        stride_minutes: cfg.stride_minutes,
        purge_gap_minutes: cfg.purge_gap_minutes,
        coverage: cfg.coverage,
        fractions: cfg.fractions,
    };
    let dataset = Dataset::from_split(params, split);
    let path = cfg.dataset_path();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    write_dataset_file(&path, &dataset).with_context(|| format!("writing dataset {}", path.display()))?;
    cfg.write_record("build-dataset")?;
    write_json(&cfg.report_dir("build-dataset").join("manifest.json"), &dataset.manifest)?;
    Ok(dataset.manifest)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset_path();
    read_dataset_file(&path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_model(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<ModelParams> {
    let path = cfg.model_path();
    let params = read_model_file(&path).with_context(|| format!("reading model {}", path.display()))?;
    check_spec_matches(&params, manifest)?;
    Ok(params)
}

fn check_spec_matches(params: &ModelParams, manifest: &DatasetManifest) -> Result<()> {
    let s = &params.spec;
    ensure!(
        s.height == manifest.grid.h && s.width == manifest.grid.w && s.metadata_dim == manifest.metadata_dim,
        "model expects a {}x{} grid with {} metadata features, dataset has {}x{} with {}",
        s.height,
        s.width,
        s.metadata_dim,
        manifest.grid.h,
        manifest.grid.w,
        manifest.metadata_dim
    );
    Ok(())
}

fn load_boost(cfg: &RunConfig) -> Result<BoostModel> {
    let path = cfg.boost_path();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading boost model {}", path.display()))?;
    BoostModel::from_json(&text).with_context(|| format!("parsing boost model {}", path.display()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub class_weights: (f64, f64),
    pub history: Vec<EpochRecord>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let spec = cfg.model_spec();
    ensure!(
        spec.height == ds.manifest.grid.h && spec.width == ds.manifest.grid.w && spec.metadata_dim == ds.manifest.metadata_dim,
        "model spec does not match the dataset grid or metadata dimension"
    );
    let std = &ds.manifest.standardization;
    let train_set = WindowSet {
        windows: ds.split(Split::Train),
        standardization: std,
    };
    let val_set = WindowSet {
        windows: ds.split(Split::Validation),
        standardization: std,
    };
    let tc = cfg.train_config();
    let outcome = train(&spec, &train_set, &val_set, &tc, |r| {
        eprintln!(
            "epoch {:>3}  train_loss {:.5}  val_loss {:.5}  val_tpr {:.3}  val_tnr {:.3}",
            r.epoch, r.train_loss, r.val_loss, r.val_tpr, r.val_tnr
        )
    })?;
    let model_path = cfg.model_path();
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    write_model_file(&model_path, &outcome.params)?;
    cfg.write_record("train")?;
    let mut w = create_file(&cfg.report_dir("train").join("history.csv"))?;
    write_history_csv(&mut w, &outcome.history)?;
    w.flush()?;
    let best = outcome.history[outcome.best_epoch - 1];
    println!("best validation loss {:.6} at epoch {}", best.val_loss, outcome.best_epoch);
    Ok(TrainSummary {
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: best.val_loss,
        class_weights: outcome.class_weights,
        history: outcome.history,
    })
}

/// Network embeddings and alert probabilities for a run of windows.
fn embeddings(
    params: &ModelParams,
    windows: &[SampleWindow],
    manifest: &DatasetManifest,
    single_thread: bool,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<u8>)> {
    let set = WindowSet {
        windows,
        standardization: &manifest.standardization,
    };
    let out = embed_all(params, &set, single_thread)?;
    let labels = windows.iter().map(|w| w.label).collect();
    let (emb, probs) = out.into_iter().map(|(e, p)| (e, p.p_alert)).unzip();
    Ok((emb, probs, labels))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub fit_samples: usize,
    pub test_samples: usize,
    pub test_auc: f64,
    pub nn_test_auc: f64,
    pub tau_star: f64,
    pub confusion: ConfusionMatrix,
    pub tnr: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

fn write_roc_reports(dir: &Path, curve: &RocCurve, tau: Option<f64>, confusion: &ConfusionMatrix, title: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create_file(&dir.join("roc.csv"))?;
    write_roc_csv(&mut w, curve)?;
    w.flush()?;
    std::fs::write(dir.join("auc.txt"), format!("{}\n", auc_line(curve)))?;
    std::fs::write(dir.join("roc.svg"), roc_svg(curve, tau, title))?;
    let mut w = create_file(&dir.join("confusion.csv"))?;
    write_confusion_csv(&mut w, confusion)?;
    w.flush()?;
    Ok(())
}

/// Fits the boost model on train+validation embeddings and sweeps thresholds on test.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationSummary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let params = load_model(cfg, &ds.manifest)?;
    let (train, val) = (ds.manifest.range(Split::Train), ds.manifest.range(Split::Validation));
    ensure!(train.start + train.count == val.start, "train and validation splits are not contiguous");
    let fit_windows = &ds.samples[train.start..val.start + val.count];
    let single = cfg.single_thread;
    let (fit_emb, _, fit_labels) = embeddings(&params, fit_windows, &ds.manifest, single)?;
    let boost = fit_gbt(&fit_emb, &fit_labels, &cfg.boost).context("fitting boost model")?;
    let boost_path = cfg.boost_path();
    if let Some(parent) = boost_path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    std::fs::write(&boost_path, boost.to_json() + "\n").with_context(|| format!("writing {}", boost_path.display()))?;

    let (test_emb, nn_probs, labels) = embeddings(&params, ds.split(Split::Test), &ds.manifest, single)?;
    let probs: Vec<f64> = test_emb
        .iter()
        .map(|e| predict_proba(&boost, e))
        .collect::<Result<_, _>>()?;
    let curve = roc_curve(&probs, &labels, DEFAULT_SWEEP).context("test split ROC")?;
    let nn_curve = roc_curve(&nn_probs, &labels, DEFAULT_SWEEP)?;
    let tau_star = equal_error_threshold(&curve).ok_or_else(|| anyhow!("empty ROC curve"))?;
    let confusion = confusion_at(&probs, &labels, tau_star)?;
    cfg.write_record("calibrate")?;
    let dir = cfg.report_dir("calibrate");
    write_roc_reports(&dir, &curve, Some(tau_star), &confusion, "Test split ROC")?;
    let summary = CalibrationSummary {
        fit_samples: fit_windows.len(),
        test_samples: labels.len(),
        test_auc: curve.auc,
        nn_test_auc: nn_curve.auc,
        tau_star,
        confusion,
        tnr: confusion.tnr(),
        tpr: confusion.tpr(),
        fpr: confusion.fpr(),
        fnr: confusion.fnr(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "test AUC {:.4} (network alone {:.4}); tau* {:.4}: TNR {:.3} TPR {:.3}",
        summary.test_auc, summary.nn_test_auc, tau_star, summary.tnr, summary.tpr
    );
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub split: Split,
    pub samples: usize,
    pub tau: f64,
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Confusion at the configured tau, plus ROC when both classes are present.
pub fn cmd_evaluate(cfg: &RunConfig, split: Split) -> Result<EvaluateSummary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let params = load_model(cfg, &ds.manifest)?;
    let boost = load_boost(cfg)?;
    let windows = ds.split(split);
    ensure!(!windows.is_empty(), "split {split:?} is empty");
    let (emb, _, labels) = embeddings(&params, windows, &ds.manifest, cfg.single_thread)?;
    let probs: Vec<f64> = emb
        .iter()
        .map(|e| predict_proba(&boost, e))
        .collect::<Result<_, _>>()?;
    let confusion = confusion_at(&probs, &labels, cfg.tau)?;
    cfg.write_record("evaluate")?;
    let dir = cfg.report_dir("evaluate");
    let auc = match roc_curve(&probs, &labels, DEFAULT_SWEEP) {
        Ok(curve) => {
            write_roc_reports(&dir, &curve, None, &confusion, &format!("{split:?} split ROC"))?;
            Some(curve.auc)
        }
        Err(_) => {
            let mut w = create_file(&dir.join("confusion.csv"))?;
            write_confusion_csv(&mut w, &confusion)?;
            w.flush()?;
            None
        }
    };
    let summary = EvaluateSummary {
        split,
        samples: labels.len(),
        tau: cfg.tau,
        auc,
        confusion,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{split:?}: {} samples, TNR {:.3}, TPR {:.3} at tau {}",
        summary.samples,
        confusion.tnr(),
        confusion.tpr(),
        cfg.tau
    );
    Ok(summary)
}

/// Picks one sample of a split by position or by window start.
#[derive(Clone, Debug, Default)]
pub struct Selector {
    pub split: Option<Split>,
    pub index: Option<usize>,
    pub t0: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub t0: i64,
    pub label: u8,
    pub prediction: Prediction,
    pub target: usize,
    pub final_centroid: Option<(f64, f64)>,
    pub files: Vec<String>,
}

pub fn cmd_explain(cfg: &RunConfig, selector: &Selector, target: usize) -> Result<ExplainSummary> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let params = load_model(cfg, &ds.manifest)?;
    let windows = match selector.split {
        Some(s) => ds.split(s),
        None => &ds.samples[..],
    };
    let window = match (selector.index, selector.t0) {
        (Some(i), None) => windows.get(i),
        (None, Some(t0)) => windows.iter().find(|w| w.t0 == t0),
        (None, None) => bail!("explain needs --index or --t0"),
        (Some(_), Some(_)) => bail!("use only one of --index and --t0"),
    }
    .ok_or_else(|| anyhow!("selector matches no sample"))?;
    let input = ModelInput::from_window(window, &ds.manifest.standardization);
    let prediction = forward(&params, &input)?.prediction;
    let cam = grad_cam(&params, &input, target)?;
    let range = cam_range(&cam);
    cfg.write_record("explain")?;
    let dir = cfg.report_dir("explain");
    let mut files = Vec::new();
    for (k, frame) in window.frames.iter().enumerate() {
        let minute = (window.t0 + k as i64 * 60).rem_euclid(SECONDS_PER_DAY) / 60;
        let label = format!("{:02}:{:02}", minute / 60, minute % 60);
        let frame_name = format!("frame_{k:02}.svg");
        let cam_name = format!("cam_{k:02}.svg");
        std::fs::write(dir.join(&frame_name), frame_svg(frame, &format!("tarmac {label}")))?;
        std::fs::write(dir.join(&cam_name), cam_svg(&cam, k, range, frame, &format!("Grad-CAM {label}")))?;
        files.push(frame_name);
        files.push(cam_name);
    }
    let summary = ExplainSummary {
        t0: window.t0,
        label: window.label,
        prediction,
        target,
        final_centroid: cam.centroid(cam.t - 1),
        files,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "t0 {} label {} p_alert {:.4}; wrote {} files to {}",
        summary.t0,
        summary.label,
        prediction.p_alert,
        summary.files.len(),
        dir.display()
    );
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Alert,
    NoAlert,
}

pub fn decide(p: f64, tau: f64) -> Decision {
    if p > tau {
        Decision::Alert
    } else {
        Decision::NoAlert
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictSummary {
    pub clock: i64,
    pub window_start: i64,
    pub p_alert_network: f64,
    pub p: f64,
    pub tau: f64,
    pub decision: Decision,
}

/// Scores the 30 minutes before `clock` in a live log. `day_start` defaults to
/// the UTC midnight before the clock.
pub fn cmd_predict(cfg: &RunConfig, log_path: &Path, clock: i64, day_start: Option<i64>) -> Result<PredictSummary> {
    cfg.validate()?;
    let manifest = read_manifest_file(&cfg.dataset_path())
        .with_context(|| format!("reading dataset header {}", cfg.dataset_path().display()))?;
    let params = load_model(cfg, &manifest)?;
    let boost = load_boost(cfg)?;
    let schedule = cfg.demand_schedule()?;
    let log = read_log_file(log_path)?;
    let day_start = day_start.unwrap_or(clock - clock.rem_euclid(SECONDS_PER_DAY));
    let inputs = DayInputs {
        grid: &manifest.grid,
        norms: &manifest.norms,
        schedule: &schedule,
        jitter: jitter(cfg),
        metadata_dim: manifest.metadata_dim,
    };
    let window = live_window(&log, day_start, clock, &inputs)?;
    let input = ModelInput::from_window(&window, &manifest.standardization);
    let cache = forward(&params, &input)?;
    let p = predict_proba(&boost, cache.embedding())?;
    let summary = PredictSummary {
        clock,
        window_start: window.t0,
        p_alert_network: cache.prediction.p_alert,
        p,
        tau: cfg.tau,
        decision: decide(p, cfg.tau),
    };
    cfg.write_record("predict")?;
    write_json(&cfg.report_dir("predict").join("prediction.json"), &summary)?;
    println!(
        "p {:.6} tau {} -> {}",
        p,
        cfg.tau,
        match summary.decision {
            Decision::Alert => "ALERT",
            Decision::NoAlert => "NO_ALERT",
        }
    );
    Ok(summary)
}
