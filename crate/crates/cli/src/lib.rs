//! Pipeline commands behind the `taxi-alert` binary.

pub mod commands;
pub mod config;
pub mod render;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use taxiout::dataset::Split;

use crate::commands::Selector;
use crate::config::{GridShape, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "taxi-alert", version, about = "Taxi-out alerting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags overriding fields of the JSON config.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON config file, or a run.json written by an earlier command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub layout: Option<PathBuf>,
    #[arg(long, global = true)]
    pub schedule: Option<PathBuf>,
    #[arg(long, global = true)]
    pub logs_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub boost_model: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: Option<u64>,
    #[arg(long, global = true)]
    pub first_day: Option<i64>,
    #[arg(long, global = true)]
    pub mean_service_s: Option<f64>,
    #[arg(long, global = true)]
    pub day_factor_sigma: Option<f64>,
    #[arg(long, global = true)]
    pub threshold_minutes: Option<f64>,
    #[arg(long, global = true)]
    pub stride_minutes: Option<usize>,
    #[arg(long, global = true)]
    pub purge_gap_minutes: Option<i64>,
    #[arg(long, global = true)]
    pub coverage: Option<f64>,
    /// Grid shape as HxW, e.g. 20x33.
    #[arg(long, global = true)]
    pub grid: Option<GridShape>,
    #[arg(long, global = true)]
    pub metadata_dim: Option<usize>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Force the single-threaded, bit-reproducible path.
    #[arg(long, global = true)]
    pub single_thread: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate daily surface track logs.
    Simulate,
    /// Grid, rasterize, label and split the simulated logs into a dataset file.
    BuildDataset,
    /// Train the network with early stopping.
    Train,
    /// Fit the boost model and sweep thresholds on the test split.
    Calibrate,
    /// Render Grad-CAM maps and frames for one sample.
    Explain {
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        t0: Option<i64>,
        /// 1 = alert, 0 = no alert.
        #[arg(long, default_value_t = 1)]
        target: usize,
    },
    /// Score the 30 minutes before a clock time in a live log.
    Predict {
        #[arg(long)]
        log: PathBuf,
        /// Unix seconds.
        #[arg(long)]
        clock: i64,
        #[arg(long)]
        day_start: Option<i64>,
    },
    /// Confusion matrix and ROC of the calibrated model on one split.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v.into();
                }
            };
        }
        set!(seed => c.seed);
        set!(out_dir => c.out_dir);
        set!(layout => c.layout);
        set!(schedule => c.schedule);
        set!(logs_dir => c.logs_dir);
        set!(dataset => c.dataset);
        set!(model => c.model);
        set!(boost_model => c.boost_model);
        if let Some(d) = self.days {
            c.days = d as usize;
        }
        set!(first_day => c.first_day);
        set!(mean_service_s => c.congestion.mean_service_s);
        set!(day_factor_sigma => c.congestion.day_factor_sigma);
        set!(threshold_minutes => c.threshold_minutes);
        set!(stride_minutes => c.stride_minutes);
        set!(purge_gap_minutes => c.purge_gap_minutes);
        set!(coverage => c.coverage);
        set!(grid => c.grid);
        set!(metadata_dim => c.metadata_dim);
        set!(max_epochs => c.train.max_epochs);
        set!(patience => c.train.patience);
        if self.max_epochs.is_some() && self.patience.is_none() {
            // An inherited patience must not invalidate an explicit epoch cap.
            c.train.patience = c.train.patience.min(c.train.max_epochs);
        }
        set!(batch_size => c.train.batch_size);
        set!(learning_rate => c.train.learning_rate);
        set!(trees => c.boost.trees);
        set!(max_depth => c.boost.max_depth);
        set!(tau => c.tau);
        if self.single_thread {
            c.single_thread = true;
        }
        if self.grid.is_some() || self.metadata_dim.is_some() {
            if let Some(spec) = &mut c.spec {
                spec.height = c.grid.h;
                spec.width = c.grid.w;
                spec.metadata_dim = c.metadata_dim;
            }
        }
        Ok(c)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match &cli.command {
        Command::Simulate => {
            let s = commands::cmd_simulate(&cfg)?;
            println!("wrote {} day logs to {}", s.manifest.days.len(), s.logs_dir.display());
        }
        Command::BuildDataset => {
            let m = commands::cmd_build_dataset(&cfg)?;
            println!(
                "{} samples enumerated, {} kept ({} positive); train {} / validation {} / test {}; grid {}x{}",
                m.enumerated_samples, m.total_samples, m.total_positives, m.train.count, m.validation.count, m.test.count, m.grid.h, m.grid.w
            );
        }
        Command::Train => {
            commands::cmd_train(&cfg)?;
        }
        Command::Calibrate => {
            commands::cmd_calibrate(&cfg)?;
        }
        Command::Explain {
            split,
            index,
            t0,
            target,
        } => {
            let sel = Selector {
                split: split.map(Into::into),
                index: *index,
                t0: *t0,
            };
            commands::cmd_explain(&cfg, &sel, *target)?;
        }
        Command::Predict { log, clock, day_start } => {
            commands::cmd_predict(&cfg, log, *clock, *day_start)?;
        }
        Command::Evaluate { split } => {
            commands::cmd_evaluate(&cfg, (*split).into())?;
        }
    }
    Ok(())
}
