use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use taxiout::calibrate::BoostConfig;
use taxiout::dataset::{DEFAULT_FRACTIONS, DEFAULT_PURGE_GAP_MINUTES, DEFAULT_STRIDE_MINUTES, DEFAULT_THRESHOLD_MINUTES};
use taxiout::metadata::DEFAULT_DIM;
use taxiout::nn::{ModelSpec, TrainConfig};
use taxiout::rasterize::{Norms, DEFAULT_COVERAGE};
use taxiout::surface_sim::{build_layout, AirportLayout, CongestionParams, DemandSchedule, LayoutConfig};

/// 2024-01-01T00:00:00Z.
pub const DEFAULT_FIRST_DAY: i64 = 1_704_067_200;
pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub h: usize,
    pub w: usize,
}

impl std::str::FromStr for GridShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
        let h = h.trim().parse().map_err(|_| format!("bad grid height {h:?}"))?;
        let w = w.trim().parse().map_err(|_| format!("bad grid width {w:?}"))?;
        Ok(Self { h, w })
    }
}

/// Every knob of a pipeline run. Missing keys take their defaults; relative artifact
/// paths default to locations under `out_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub layout: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub logs_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub boost_model: Option<PathBuf>,

    pub days: usize,
    pub first_day: i64,
    pub congestion: CongestionParams,
    pub projection_jitter: u32,

    pub threshold_minutes: f64,
    pub stride_minutes: usize,
    pub purge_gap_minutes: i64,
    pub coverage: f64,
    pub grid: GridShape,
    pub metadata_dim: usize,
    pub fractions: [f64; 3],
    pub norms: Norms,

    pub spec: Option<ModelSpec>,
    pub train: TrainConfig,
    pub boost: BoostConfig,
    /// Operational alert threshold on the calibrated probability.
    pub tau: f64,
    pub single_thread: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            layout: None,
            schedule: None,
            logs_dir: None,
            dataset: None,
            model: None,
            boost_model: None,
            days: 60,
            first_day: DEFAULT_FIRST_DAY,
            congestion: CongestionParams::default(),
            projection_jitter: 2,
            threshold_minutes: DEFAULT_THRESHOLD_MINUTES,
            stride_minutes: DEFAULT_STRIDE_MINUTES,
            purge_gap_minutes: DEFAULT_PURGE_GAP_MINUTES,
            coverage: DEFAULT_COVERAGE,
            grid: GridShape { h: 20, w: 33 },
            metadata_dim: DEFAULT_DIM,
            fractions: DEFAULT_FRACTIONS,
            norms: Norms::default(),
            spec: None,
            train: TrainConfig {
                max_epochs: 12,
                patience: 2,
                ..TrainConfig::default()
            },
            boost: BoostConfig::default(),
            tau: 0.5,
            single_thread: false,
        }
    }
}

/// What every command writes as `run.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
}

impl RunConfig {
    /// Reads a config document, or the `config` member of a `run.json` record.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let inner = match value {
            serde_json::Value::Object(ref m) if m.contains_key("command") && m.contains_key("config") => m["config"].clone(),
            v => v,
        };
        serde_json::from_value(inner).with_context(|| format!("invalid config {}", path.display()))
    }

    fn under_out(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(default))
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.under_out(&self.logs_dir, "logs")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.under_out(&self.dataset, "dataset.txds")
    }

    pub fn model_path(&self) -> PathBuf {
        self.under_out(&self.model, "model.txom")
    }

    pub fn boost_path(&self) -> PathBuf {
        self.under_out(&self.boost_model, "boost.json")
    }

    /// Report directory of one command, `out_dir/<command>`.
    pub fn report_dir(&self, command: &str) -> PathBuf {
        self.out_dir.join(command)
    }

    pub fn layout_config(&self) -> Result<LayoutConfig> {
        match &self.layout {
            None => Ok(LayoutConfig::toy_lga()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading layout {}", p.display()))?;
                LayoutConfig::from_json(&text).with_context(|| format!("layout {}", p.display()))
            }
        }
    }

    pub fn airport_layout(&self) -> Result<AirportLayout> {
        Ok(build_layout(&self.layout_config()?)?)
    }

    pub fn demand_schedule(&self) -> Result<DemandSchedule> {
        match &self.schedule {
            None => Ok(DemandSchedule::toy_default()),
            Some(p) => {
                let f = std::fs::File::open(p).with_context(|| format!("opening schedule {}", p.display()))?;
                DemandSchedule::from_csv(f).with_context(|| format!("schedule {}", p.display()))
            }
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.spec
            .clone()
            .unwrap_or_else(|| ModelSpec::default_for(self.grid.h, self.grid.w, self.metadata_dim))
    }

    /// Training config with the global seed and thread mode applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            single_thread: self.single_thread || self.train.single_thread,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            bail!("days: must be at least 1");
        }
        if self.first_day.rem_euclid(60) != 0 {
            bail!("first_day: must be minute-aligned");
        }
        if !(self.threshold_minutes > 0.0) {
            bail!("threshold_minutes: must be positive");
        }
        if self.stride_minutes == 0 {
            bail!("stride_minutes: must be positive");
        }
        if self.purge_gap_minutes < 0 {
            bail!("purge_gap_minutes: must be non-negative");
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            bail!("coverage: must be in (0, 1]");
        }
        if self.grid.h == 0 || self.grid.w == 0 {
            bail!("grid: extents must be positive");
        }
        if self.metadata_dim == 0 || self.metadata_dim > taxiout::metadata::FULL_DIM {
            bail!("metadata_dim: must be in 1..={}", taxiout::metadata::FULL_DIM);
        }
        if !(0.0..=1.0).contains(&self.tau) {
            bail!("tau: must be in [0, 1]");
        }
        if !(self.norms.speed_kn > 0.0 && self.norms.taxi_s > 0.0) {
            bail!("norms: must be positive");
        }
        self.train_config().validate().context("train")?;
        self.boost.validate().context("boost")?;
        let spec = self.model_spec();
        if spec.height != self.grid.h || spec.width != self.grid.w || spec.metadata_dim != self.metadata_dim {
            bail!("spec: input extents must match grid and metadata_dim");
        }
        spec.validate().context("spec")?;
        for (name, p) in [("layout", &self.layout), ("schedule", &self.schedule)] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("{name}: {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn write_record(&self, command: &str) -> Result<PathBuf> {
        let dir = self.report_dir(command);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let record = RunRecord {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: self.clone(),
        };
        let path = dir.join("run.json");
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
