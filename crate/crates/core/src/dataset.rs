//! Labeled 30-minute windows, time-ordered splits and the dataset file.
//!
//! A sample starting at minute `t0` sees frames and metadata for minutes
//! `t0 .. t0 + 29` and is positive when the average taxi-out time exceeds the
//! threshold at any minute in `(t0 + 30, t0 + 90]`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{build_snapshots, IngestError, TrackLog};
use crate::metadata::{avg_taxi_out_series, metadata_at, EventHistory, MetadataContext, FULL_DIM};
use crate::rasterize::{
    rasterize_frame, read_frame_body, read_frame_header, write_frames, FrameIoError, FrameTensor, GridSpec, Norms,
};
use crate::surface_sim::{DemandSchedule, ProjectionJitter};
use crate::{MINUTE, WINDOW_MINUTES};

pub const DATASET_MAGIC: [u8; 4] = *b"TXDS";
pub const FORMAT_VERSION: u32 = 1;
pub const MINUTES_PER_DAY: usize = 1440;
/// Label horizon: minutes after `t0` of the first and last labeled minute.
pub const HORIZON_START: usize = 31;
pub const HORIZON_END: usize = 90;
/// Minutes of day data needed to label every window of the day (00:00 .. 24:00).
pub const DAY_COVERAGE_MINUTES: usize = MINUTES_PER_DAY + 1;

pub const DEFAULT_THRESHOLD_MINUTES: f64 = 20.0;
pub const DEFAULT_STRIDE_MINUTES: usize = 10;
pub const DEFAULT_PURGE_GAP_MINUTES: i64 = 90;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];
pub const MIN_SAMPLES_TO_SPLIT: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("series covers {have} minutes but labeling t0={t0} needs {need}")]
    SeriesTooShort { t0: usize, have: usize, need: usize },
    #[error("missing minute data: {0}")]
    MissingMinute(String),
    #[error("samples are not sorted by t0 at index {0}")]
    Unsorted(usize),
    #[error("need at least {MIN_SAMPLES_TO_SPLIT} samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("invalid split fractions {0:?}")]
    Fractions([f64; 3]),
    #[error("invalid stride {0}")]
    Stride(usize),
    #[error("need {need} minutes of history before the clock, have {have}")]
    InsufficientHistory { have: i64, need: i64 },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DatasetError::ShapeMismatch("unexpected end of data".into())
        } else {
            DatasetError::Io(e)
        }
    }
}

impl From<FrameIoError> for DatasetError {
    fn from(e: FrameIoError) -> Self {
        match e {
            FrameIoError::Io(io) => DatasetError::Io(io),
            FrameIoError::ShapeMismatch(m) => DatasetError::ShapeMismatch(m),
            other => DatasetError::CorruptHeader(other.to_string()),
        }
    }
}

/// One day's per-minute inputs, indexed by minute of day `0 ..= 1440`.
#[derive(Clone, Debug)]
pub struct DayData {
    pub day_start: i64,
    pub frames: Vec<FrameTensor>,
    /// Raw metadata rows, `metadata_dim` wide.
    pub metadata: Vec<Vec<f32>>,
    pub avg_taxi_out: Vec<f64>,
}

/// Inputs shared by every day of a dataset build.
#[derive(Clone, Copy, Debug)]
pub struct DayInputs<'a> {
    pub grid: &'a GridSpec,
    pub norms: &'a Norms,
    pub schedule: &'a DemandSchedule,
    pub jitter: ProjectionJitter,
    pub metadata_dim: usize,
}

/// Replays a day's log into frames, metadata rows and the average taxi-out series.
pub fn build_day(log: &TrackLog, day_start: i64, inputs: &DayInputs) -> Result<DayData, DatasetError> {
    let end = day_start + DAY_COVERAGE_MINUTES as i64 * MINUTE;
    let snapshots = build_snapshots(log, day_start, end)?;
    let history = EventHistory::from_log(log);
    let ctx = MetadataContext {
        schedule: inputs.schedule,
        history: &history,
        jitter: inputs.jitter,
        day_start,
    };
    Ok(DayData {
        day_start,
        frames: snapshots
            .iter()
            .map(|s| rasterize_frame(s, inputs.grid, inputs.norms))
            .collect(),
        metadata: snapshots
            .iter()
            .map(|s| metadata_at(s, &ctx).features(inputs.metadata_dim))
            .collect(),
        avg_taxi_out: avg_taxi_out_series(&snapshots),
    })
}

/// The window ending just before `clock` (frames for minutes `clock-30 .. clock-1`),
/// for live prediction. The label is unknown and set to 0.
pub fn live_window(log: &TrackLog, day_start: i64, clock: i64, inputs: &DayInputs) -> Result<SampleWindow, DatasetError> {
    let clock = clock - clock.rem_euclid(MINUTE);
    let need = WINDOW_MINUTES as i64;
    let have = (clock - day_start).div_euclid(MINUTE);
    if have < need {
        return Err(DatasetError::InsufficientHistory { have, need });
    }
    let snapshots = build_snapshots(log, day_start, clock)?;
    let history = EventHistory::from_log(log);
    let ctx = MetadataContext {
        schedule: inputs.schedule,
        history: &history,
        jitter: inputs.jitter,
        day_start,
    };
    let tail = &snapshots[snapshots.len() - WINDOW_MINUTES..];
    Ok(SampleWindow {
        t0: tail[0].clock,
        frames: tail.iter().map(|s| rasterize_frame(s, inputs.grid, inputs.norms)).collect(),
        metadata: tail
            .iter()
            .map(|s| metadata_at(s, &ctx).features(inputs.metadata_dim))
            .collect(),
        label: 0,
    })
}

/// One training unit: 30 frames, 30 metadata rows and the alert label.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    /// Unix seconds of the first frame.
    pub t0: i64,
    pub frames: Vec<FrameTensor>,
    pub metadata: Vec<Vec<f32>>,
    pub label: u8,
}

/// 1 iff the series exceeds `threshold` at some minute in `t0+31 ..= t0+90`.
pub fn label_window(avg_series: &[f64], t0: usize, threshold: f64) -> Result<u8, DatasetError> {
    let need = t0 + HORIZON_END + 1;
    if avg_series.len() < need {
        return Err(DatasetError::SeriesTooShort {
            t0,
            have: avg_series.len(),
            need,
        });
    }
    let crossed = avg_series[t0 + HORIZON_START..=t0 + HORIZON_END]
        .iter()
        .any(|&v| v > threshold);
    Ok(u8::from(crossed))
}

/// Number of windows in a day at the given stride.
pub fn windows_per_day(stride: usize) -> usize {
    (MINUTES_PER_DAY - HORIZON_END) / stride + 1
}

/// Cuts a day into windows starting at 00:00 and every `stride` minutes after,
/// as long as the label horizon ends by 24:00.
pub fn build_samples(day: &DayData, threshold: f64, stride: usize) -> Result<Vec<SampleWindow>, DatasetError> {
    if stride == 0 {
        return Err(DatasetError::Stride(stride));
    }
    for (name, len) in [
        ("frames", day.frames.len()),
        ("metadata", day.metadata.len()),
        ("avg_taxi_out", day.avg_taxi_out.len()),
    ] {
        if len < DAY_COVERAGE_MINUTES {
            return Err(DatasetError::MissingMinute(format!(
                "{name} covers {len} minutes, need {DAY_COVERAGE_MINUTES}"
            )));
        }
    }
    let mut out = Vec::with_capacity(windows_per_day(stride));
    let mut t0 = 0;
    while t0 + HORIZON_END <= MINUTES_PER_DAY {
        out.push(SampleWindow {
            t0: day.day_start + t0 as i64 * MINUTE,
            frames: day.frames[t0..t0 + WINDOW_MINUTES].to_vec(),
            metadata: day.metadata[t0..t0 + WINDOW_MINUTES].to_vec(),
            label: label_window(&day.avg_taxi_out, t0, threshold)?,
        });
        t0 += stride;
    }
    Ok(out)
}

/// Per-feature mean and standard deviation of the metadata rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Fits over every metadata row of every sample. Constant features get std 1.
    pub fn fit(samples: &[SampleWindow], dim: usize) -> Self {
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        for s in samples {
            for row in &s.metadata {
                for (k, &v) in row.iter().enumerate().take(dim) {
                    let v = f64::from(v);
                    sum[k] += v;
                    sq[k] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n as f64 - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, k: usize, v: f32) -> f64 {
        (f64::from(v) - self.mean[k]) / self.std[k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Where one split lives in the serialized sample table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRange {
    pub start: usize,
    pub count: usize,
    pub negatives: usize,
    pub positives: usize,
    /// Samples dropped from the tail of this split by purging.
    pub purged: usize,
    pub first_t0: Option<i64>,
    pub last_t0: Option<i64>,
}

impl SplitRange {
    fn describe(start: usize, samples: &[SampleWindow], purged: usize) -> Self {
        let positives = samples.iter().filter(|s| s.label == 1).count();
        Self {
            start,
            count: samples.len(),
            negatives: samples.len() - positives,
            positives,
            purged,
            first_t0: samples.first().map(|s| s.t0),
            last_t0: samples.last().map(|s| s.t0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub train: Vec<SampleWindow>,
    pub validation: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
    /// Split sizes before purging.
    pub sizes_before_purge: [usize; 3],
    pub purged: [usize; 3],
    pub standardization: Standardization,
}

impl SplitResult {
    pub fn ranges(&self) -> [SplitRange; 3] {
        let a = SplitRange::describe(0, &self.train, self.purged[0]);
        let b = SplitRange::describe(a.count, &self.validation, self.purged[1]);
        let c = SplitRange::describe(a.count + b.count, &self.test, self.purged[2]);
        [a, b, c]
    }

    pub fn into_samples(self) -> Vec<SampleWindow> {
        let mut all = self.train;
        all.extend(self.validation);
        all.extend(self.test);
        all
    }
}

/// Contiguous time-ordered split.
///
/// Sizes are `round(f0 * N)` and `round((f0 + f1) * N) - round(f0 * N)`, the rest
/// going to the last split. A sample of an earlier split is then dropped when
/// `t0 + purge_gap >= first t0 of the next split`.
pub fn split_dataset(
    samples: Vec<SampleWindow>,
    fractions: [f64; 3],
    purge_gap_minutes: i64,
) -> Result<SplitResult, DatasetError> {
    if let Some(i) = samples.windows(2).position(|w| w[1].t0 < w[0].t0) {
        return Err(DatasetError::Unsorted(i + 1));
    }
    let n = samples.len();
    if n < MIN_SAMPLES_TO_SPLIT {
        return Err(DatasetError::TooFewSamples(n));
    }
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Fractions(fractions));
    }
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_train_val = (((fractions[0] + fractions[1]) * n as f64).round() as usize).max(n_train).min(n);

    let mut it = samples.into_iter();
    let mut train: Vec<SampleWindow> = it.by_ref().take(n_train).collect();
    let mut validation: Vec<SampleWindow> = it.by_ref().take(n_train_val - n_train).collect();
    let test: Vec<SampleWindow> = it.collect();
    let sizes_before_purge = [train.len(), validation.len(), test.len()];

    let gap = purge_gap_minutes * MINUTE;
    let purge = |earlier: &mut Vec<SampleWindow>, next_first: Option<i64>| -> usize {
        let Some(b) = next_first else { return 0 };
        let before = earlier.len();
        earlier.retain(|s| s.t0 + gap < b);
        before - earlier.len()
    };
    let test_first = test.first().map(|s| s.t0);
    let purged_val = purge(&mut validation, test_first);
    let val_first = validation.first().map(|s| s.t0).or(test_first);
    let purged_train = purge(&mut train, val_first);

    let dim = train.first().map_or(0, |s| s.metadata.first().map_or(0, Vec::len));
    let standardization = Standardization::fit(&train, dim);
    Ok(SplitResult {
        train,
        validation,
        test,
        sizes_before_purge,
        purged: [purged_train, purged_val, 0],
        standardization,
    })
}

/// Everything needed to interpret a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub airport_id: String,
    pub grid: GridSpec,
    pub norms: Norms,
    pub metadata_dim: usize,
    pub threshold_minutes: f64,
    pub stride_minutes: usize,
    pub purge_gap_minutes: i64,
    pub coverage: f64,
    pub fractions: [f64; 3],
    pub train: SplitRange,
    pub validation: SplitRange,
    pub test: SplitRange,
    pub standardization: Standardization,
    /// Windows enumerated before purging.
    pub enumerated_samples: usize,
    /// Windows stored in the file.
    pub total_samples: usize,
    pub total_negatives: usize,
    pub total_positives: usize,
}

/// Dataset-level parameters recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub airport_id: String,
    pub grid: GridSpec,
    pub norms: Norms,
    pub metadata_dim: usize,
    pub threshold_minutes: f64,
    pub stride_minutes: usize,
    pub purge_gap_minutes: i64,
    pub coverage: f64,
    pub fractions: [f64; 3],
}

/// Samples plus manifest, in train/validation/test order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<SampleWindow>,
}

impl Dataset {
    pub fn from_split(params: DatasetParams, split: SplitResult) -> Self {
        let [train, validation, test] = split.ranges();
        let enumerated_samples = split.sizes_before_purge.iter().sum();
        let standardization = split.standardization.clone();
        let samples = split.into_samples();
        let positives = samples.iter().filter(|s| s.label == 1).count();
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            airport_id: params.airport_id,
            grid: params.grid,
            norms: params.norms,
            metadata_dim: params.metadata_dim,
            threshold_minutes: params.threshold_minutes,
            stride_minutes: params.stride_minutes,
            purge_gap_minutes: params.purge_gap_minutes,
            coverage: params.coverage,
            fractions: params.fractions,
            train,
            validation,
            test,
            standardization,
            enumerated_samples,
            total_samples: samples.len(),
            total_negatives: samples.len() - positives,
            total_positives: positives,
        };
        Self { manifest, samples }
    }

    pub fn split(&self, which: Split) -> &[SampleWindow] {
        let r = self.manifest.range(which);
        &self.samples[r.start..r.start + r.count]
    }
}

impl DatasetManifest {
    pub fn range(&self, which: Split) -> &SplitRange {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn check(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::CorruptHeader(m.to_string()));
        if self.format_version != FORMAT_VERSION {
            return bad("unsupported format version");
        }
        if self.grid.validate().is_err() {
            return bad("invalid grid");
        }
        if self.metadata_dim == 0 || self.metadata_dim > FULL_DIM {
            return bad("invalid metadata dimension");
        }
        if self.standardization.mean.len() != self.metadata_dim
            || self.standardization.std.len() != self.metadata_dim
        {
            return bad("standardization length differs from metadata dimension");
        }
        let mut next = 0usize;
        for r in [&self.train, &self.validation, &self.test] {
            if r.start != next || r.negatives.checked_add(r.positives) != Some(r.count) {
                return bad("split ranges are inconsistent");
            }
            next = r.start.checked_add(r.count).ok_or_else(|| DatasetError::CorruptHeader("overflow".into()))?;
        }
        if next != self.total_samples
            || self.enumerated_samples < next
            || self.total_negatives.checked_add(self.total_positives) != Some(next)
        {
            return bad("sample totals are inconsistent");
        }
        Ok(())
    }
}

/// Writes `TXDS | u32 version | u64 manifest length | manifest JSON | u64 count`
/// followed by the samples. Each sample is `i64 t0 | u8 label | frame block (T=30)
/// | 30 x D f32 metadata`, all little-endian.
pub fn write_dataset<W: Write>(w: W, dataset: &Dataset) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(w);
    let m = &dataset.manifest;
    let json = serde_json::to_vec(m)?;
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(dataset.samples.len() as u64).to_le_bytes())?;
    for s in &dataset.samples {
        if s.frames.len() != WINDOW_MINUTES || s.metadata.len() != WINDOW_MINUTES {
            return Err(DatasetError::ShapeMismatch(format!("sample t0={} is not {WINDOW_MINUTES} minutes", s.t0)));
        }
        w.write_all(&s.t0.to_le_bytes())?;
        w.write_all(&[s.label])?;
        write_frames(&mut w, m.grid.h, m.grid.w, &s.frames)?;
        for row in &s.metadata {
            if row.len() != m.metadata_dim {
                return Err(DatasetError::ShapeMismatch(format!("metadata row of sample t0={} has width {}", s.t0, row.len())));
            }
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    write_dataset(std::fs::File::create(path)?, dataset)
}

/// Upper bound on the manifest document size.
const MAX_MANIFEST_BYTES: u64 = 1 << 24;

/// Streaming reader over a dataset file.
pub struct DatasetReader<R: Read> {
    inner: R,
    manifest: DatasetManifest,
    remaining: u64,
    read: usize,
    last_t0: Option<i64>,
    positives: usize,
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut inner: R) -> Result<Self, DatasetError> {
        let mut head = [0u8; 16];
        inner.read_exact(&mut head)?;
        if head[0..4] != DATASET_MAGIC {
            return Err(DatasetError::CorruptHeader("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(DatasetError::CorruptHeader(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(head[8..16].try_into().unwrap());
        if len > MAX_MANIFEST_BYTES {
            return Err(DatasetError::CorruptHeader(format!("manifest length {len} too large")));
        }
        let mut json = Vec::new();
        (&mut inner).take(len).read_to_end(&mut json)?;
        if json.len() as u64 != len {
            return Err(DatasetError::ShapeMismatch("truncated manifest".into()));
        }
        let manifest: DatasetManifest =
            serde_json::from_slice(&json).map_err(|e| DatasetError::CorruptHeader(e.to_string()))?;
        manifest.check()?;
        let mut count = [0u8; 8];
        inner.read_exact(&mut count)?;
        let remaining = u64::from_le_bytes(count);
        if remaining != manifest.total_samples as u64 {
            return Err(DatasetError::ShapeMismatch(format!(
                "file holds {remaining} samples, manifest says {}",
                manifest.total_samples
            )));
        }
        Ok(Self {
            inner,
            manifest,
            remaining,
            read: 0,
            last_t0: None,
            positives: 0,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn read_sample(&mut self) -> Result<SampleWindow, DatasetError> {
        let m = &self.manifest;
        let mut head = [0u8; 9];
        self.inner.read_exact(&mut head)?;
        let t0 = i64::from_le_bytes(head[0..8].try_into().unwrap());
        let label = head[8];
        if label > 1 {
            return Err(DatasetError::CorruptHeader(format!("label {label} at sample {}", self.read)));
        }
        let header = read_frame_header(&mut self.inner)?;
        if header.h != m.grid.h || header.w != m.grid.w || header.t != WINDOW_MINUTES {
            return Err(DatasetError::ShapeMismatch(format!(
                "sample {} has frame block {}x{}x{}, expected {}x{}x{WINDOW_MINUTES}",
                self.read, header.t, header.h, header.w, m.grid.h, m.grid.w
            )));
        }
        let frames = read_frame_body(&mut self.inner, header)?;
        let dim = m.metadata_dim;
        let mut buf = vec![0u8; 4 * dim * WINDOW_MINUTES];
        self.inner.read_exact(&mut buf)?;
        let values: Vec<f32> = buf.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let metadata = values.chunks(dim).map(<[f32]>::to_vec).collect();
        Ok(SampleWindow {
            t0,
            frames,
            metadata,
            label,
        })
    }

    /// Next sample, or `None` after the last one. Sortedness and class counts are
    /// checked against the manifest as the table is consumed.
    pub fn next_sample(&mut self) -> Result<Option<SampleWindow>, DatasetError> {
        if self.remaining == 0 {
            let m = &self.manifest;
            if self.positives != m.total_positives {
                return Err(DatasetError::CorruptHeader(format!(
                    "manifest counts {} positives, table holds {}",
                    m.total_positives, self.positives
                )));
            }
            let mut probe = [0u8; 1];
            if self.inner.read(&mut probe)? != 0 {
                return Err(DatasetError::ShapeMismatch("trailing bytes after samples".into()));
            }
            return Ok(None);
        }
        let s = self.read_sample()?;
        if self.last_t0.is_some_and(|p| s.t0 < p) {
            return Err(DatasetError::Unsorted(self.read));
        }
        self.last_t0 = Some(s.t0);
        self.positives += usize::from(s.label);
        self.remaining -= 1;
        self.read += 1;
        Ok(Some(s))
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset, DatasetError> {
    let mut reader = DatasetReader::new(r)?;
    let mut samples = Vec::with_capacity(reader.manifest().total_samples.min(1 << 16));
    while let Some(s) = reader.next_sample()? {
        samples.push(s);
    }
    let manifest = reader.manifest;
    for which in [Split::Train, Split::Validation, Split::Test] {
        let r = manifest.range(which);
        let pos = samples[r.start..r.start + r.count].iter().filter(|s| s.label == 1).count();
        if pos != r.positives {
            return Err(DatasetError::CorruptHeader(format!(
                "{which:?} split counts {} positives, table holds {pos}",
                r.positives
            )));
        }
    }
    Ok(Dataset { manifest, samples })
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset, DatasetError> {
    read_dataset(BufReader::new(std::fs::File::open(path)?))
}

/// Reads only the manifest of a dataset file.
pub fn read_manifest_file(path: &Path) -> Result<DatasetManifest, DatasetError> {
    Ok(DatasetReader::new(BufReader::new(std::fs::File::open(path)?))?.manifest)
}
