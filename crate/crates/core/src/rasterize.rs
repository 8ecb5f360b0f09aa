//! Tarmac gridding and six-channel frame construction.
//!
//! Frames are stored sparsely: at most a few dozen cells of a frame are occupied at
//! any minute, and a day of dense frames would not fit comfortably in memory.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FlightKind, FlightState, MinuteSnapshot};

pub const CHANNELS: usize = 6;
pub const ARR_OCCUPANCY: usize = 0;
pub const ARR_SPEED: usize = 1;
pub const ARR_TAXI: usize = 2;
pub const DEP_OCCUPANCY: usize = 3;
pub const DEP_SPEED: usize = 4;
pub const DEP_TAXI: usize = 5;

pub const FRAME_MAGIC: [u8; 4] = *b"FTNS";
pub const DEFAULT_COVERAGE: f64 = 0.995;
/// Half-width used to pad a degenerate extent.
pub const EXTENT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("no points supplied")]
    EmptyPoints,
    #[error("coverage {0} must lie in (0, 1]")]
    Coverage(f64),
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("expected {expected} channels, found {found}")]
    Channels { expected: usize, found: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value {value} at offset {index} is negative or non-finite")]
    InvalidValue { index: u64, value: f32 },
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for FrameIoError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            FrameIoError::ShapeMismatch("unexpected end of data".into())
        } else {
            FrameIoError::Io(e)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

/// Tarmac binning geometry: `h` latitude bins by `w` longitude bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub h: usize,
    pub w: usize,
}

impl GridSpec {
    pub fn new(extent: Extent, h: usize, w: usize) -> Result<Self, RasterError> {
        let grid = Self {
            lat_min: extent.lat_min,
            lat_max: extent.lat_max,
            lon_min: extent.lon_min,
            lon_max: extent.lon_max,
            h,
            w,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(RasterError::InvalidGrid("extent must be finite and non-empty".into()));
        }
        if self.h == 0 || self.w == 0 {
            return Err(RasterError::InvalidGrid("H and W must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    /// Latitude and longitude of a cell center.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let dlat = (self.lat_max - self.lat_min) / self.h as f64;
        let dlon = (self.lon_max - self.lon_min) / self.w as f64;
        (
            self.lat_min + (i as f64 + 0.5) * dlat,
            self.lon_min + (j as f64 + 0.5) * dlon,
        )
    }
}

/// Sort-based quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box covering the central `coverage` quantile interval of each coordinate.
///
/// A degenerate axis is padded by [`EXTENT_EPSILON`] on both sides.
pub fn fit_extent(points: &[(f64, f64)], coverage: f64) -> Result<Extent, RasterError> {
    if points.is_empty() {
        return Err(RasterError::EmptyPoints);
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(RasterError::Coverage(coverage));
    }
    if let Some(i) = points.iter().position(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(RasterError::NonFinite(i));
    }
    let tail = (1.0 - coverage) / 2.0;
    let axis = |select: fn(&(f64, f64)) -> f64| {
        let mut v: Vec<f64> = points.iter().map(select).collect();
        v.sort_by(f64::total_cmp);
        let (mut lo, mut hi) = (quantile(&v, tail), quantile(&v, 1.0 - tail));
        if lo >= hi {
            lo -= EXTENT_EPSILON;
            hi += EXTENT_EPSILON;
        }
        (lo, hi)
    };
    let (lat_min, lat_max) = axis(|p| p.0);
    let (lon_min, lon_max) = axis(|p| p.1);
    Ok(Extent {
        lat_min,
        lat_max,
        lon_min,
        lon_max,
    })
}

/// Cell `(i, j)` containing a point, or `None` outside the extent.
///
/// Bins are half-open except the last one along each axis, which also owns the
/// upper edge.
pub fn cell_of(grid: &GridSpec, lat: f64, lon: f64) -> Option<(usize, usize)> {
    let axis = |v: f64, lo: f64, hi: f64, n: usize| -> Option<usize> {
        if !(v >= lo && v <= hi) {
            return None;
        }
        let idx = ((v - lo) / ((hi - lo) / n as f64)).floor() as usize;
        Some(idx.min(n - 1))
    };
    Some((
        axis(lat, grid.lat_min, grid.lat_max, grid.h)?,
        axis(lon, grid.lon_min, grid.lon_max, grid.w)?,
    ))
}

/// Scale factors mapping ground speed and cumulative taxi time to O(1) values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub speed_kn: f64,
    pub taxi_s: f64,
}

impl Default for Norms {
    fn default() -> Self {
        Self {
            speed_kn: 50.0,
            taxi_s: 3600.0,
        }
    }
}

/// One minute's `H x W x 6` tarmac image, stored as sorted non-zero entries.
///
/// Entry keys are flat `(i * W + j) * 6 + c` offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTensor {
    h: usize,
    w: usize,
    entries: Vec<(u32, f32)>,
}

impl FrameTensor {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            entries: Vec::new(),
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.h * self.w * CHANNELS
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    fn offset(&self, i: usize, j: usize, c: usize) -> u32 {
        assert!(i < self.h && j < self.w && c < CHANNELS, "frame index out of range");
        ((i * self.w + j) * CHANNELS + c) as u32
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        let key = self.offset(i, j, c);
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(p) => self.entries[p].1,
            Err(_) => 0.0,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f32) {
        let key = self.offset(i, j, c);
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(p) if value == 0.0 => {
                self.entries.remove(p);
            }
            Ok(p) => self.entries[p].1 = value,
            Err(_) if value == 0.0 => {}
            Err(p) => self.entries.insert(p, (key, value)),
        }
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.len()];
        for &(k, v) in &self.entries {
            out[k as usize] = v;
        }
        out
    }

    pub fn from_dense(h: usize, w: usize, values: &[f32]) -> Self {
        assert_eq!(values.len(), h * w * CHANNELS, "dense frame has wrong length");
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, &v)| (k as u32, v))
            .collect();
        Self { h, w, entries }
    }

    /// Sum of one channel over all cells.
    pub fn channel_sum(&self, c: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| *k as usize % CHANNELS == c)
            .map(|(_, v)| f64::from(*v))
            .sum()
    }

    /// Checks the channel invariants: occupancy in {0, 1}, all values non-negative,
    /// speed/taxi channels zero wherever the matching occupancy channel is zero.
    pub fn check_invariants(&self) -> Result<(), String> {
        for &(k, v) in &self.entries {
            let c = k as usize % CHANNELS;
            let cell = k as usize / CHANNELS;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("negative or non-finite value {v} at offset {k}"));
            }
            match c {
                ARR_OCCUPANCY | DEP_OCCUPANCY if v != 1.0 => {
                    return Err(format!("occupancy value {v} at cell {cell}"));
                }
                ARR_SPEED | ARR_TAXI | DEP_SPEED | DEP_TAXI => {
                    let occ = if c < DEP_OCCUPANCY { ARR_OCCUPANCY } else { DEP_OCCUPANCY };
                    let key = (cell * CHANNELS + occ) as u32;
                    if self.entries.binary_search_by_key(&key, |e| e.0).is_err() {
                        return Err(format!("channel {c} set at unoccupied cell {cell}"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn collision_key(s: &FlightState) -> (i64, u64, &str) {
    // Non-negative finite speeds order the same way as their bit patterns.
    (s.cumulative_taxi, s.last_speed.max(0.0).to_bits(), s.flight_id.as_str())
}

/// Rasterizes the visible flights of one snapshot.
///
/// When two flights of the same kind share a cell, the one with the largest
/// cumulative taxi time wins (then higher speed, then larger flight id), so the
/// result does not depend on the order of `snapshot.active`.
pub fn rasterize_frame(snapshot: &MinuteSnapshot, grid: &GridSpec, norms: &Norms) -> FrameTensor {
    let mut winners: HashMap<(usize, usize, FlightKind), &FlightState> = HashMap::new();
    for state in &snapshot.active {
        let Some((i, j)) = cell_of(grid, state.last_lat, state.last_lon) else {
            continue;
        };
        winners
            .entry((i, j, state.kind))
            .and_modify(|cur| {
                if collision_key(state) > collision_key(cur) {
                    *cur = state;
                }
            })
            .or_insert(state);
    }
    let mut frame = FrameTensor::zeros(grid.h, grid.w);
    for ((i, j, kind), s) in winners {
        let base = match kind {
            FlightKind::Arrival => ARR_OCCUPANCY,
            FlightKind::Departure => DEP_OCCUPANCY,
        };
        frame.set(i, j, base, 1.0);
        frame.set(i, j, base + 1, (s.last_speed / norms.speed_kn) as f32);
        frame.set(i, j, base + 2, (s.cumulative_taxi as f64 / norms.taxi_s) as f32);
    }
    frame
}

/// Per-cell hit counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HitHeatmap {
    pub h: usize,
    pub w: usize,
    /// Row-major `h x w` counts.
    pub counts: Vec<u64>,
}

impl HitHeatmap {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.w + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn heatmap(points: &[(f64, f64)], grid: &GridSpec) -> HitHeatmap {
    let mut counts = vec![0u64; grid.cells()];
    for &(lat, lon) in points {
        if let Some((i, j)) = cell_of(grid, lat, lon) {
            counts[i * grid.w + j] += 1;
        }
    }
    HitHeatmap {
        h: grid.h,
        w: grid.w,
        counts,
    }
}

/// Writes frames as `FTNS | H | W | C | T` (little-endian u32s) followed by
/// `T*H*W*6` little-endian f32 values in `(t, i, j, c)` order.
pub fn write_frames<W: Write>(mut w: W, h: usize, width: usize, frames: &[FrameTensor]) -> std::io::Result<()> {
    let mut header = Vec::with_capacity(20);
    header.extend_from_slice(&FRAME_MAGIC);
    for v in [h, width, CHANNELS, frames.len()] {
        header.extend_from_slice(&(v as u32).to_le_bytes());
    }
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(h * width * CHANNELS * 4);
    for frame in frames {
        assert!(frame.h == h && frame.w == width, "frame shape differs from header");
        buf.clear();
        let mut next = 0u32;
        for &(k, v) in &frame.entries {
            for _ in next..k {
                buf.extend_from_slice(&0f32.to_le_bytes());
            }
            buf.extend_from_slice(&v.to_le_bytes());
            next = k + 1;
        }
        for _ in next as usize..frame.len() {
            buf.extend_from_slice(&0f32.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Header of a frame block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub h: usize,
    pub w: usize,
    pub t: usize,
}

pub fn read_frame_header<R: Read>(r: &mut R) -> Result<FrameHeader, FrameIoError> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != FRAME_MAGIC {
        return Err(FrameIoError::BadMagic(magic));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (h, w, c, t) = (field(0), field(1), field(2), field(3));
    if c as usize != CHANNELS {
        return Err(FrameIoError::Channels {
            expected: CHANNELS,
            found: c,
        });
    }
    if h == 0 || w == 0 {
        return Err(FrameIoError::ShapeMismatch(format!("empty frame shape {h}x{w}")));
    }
    let cells = (h as u64) * (w as u64) * CHANNELS as u64;
    if cells > u64::from(u32::MAX) {
        return Err(FrameIoError::ShapeMismatch(format!("frame shape {h}x{w} too large")));
    }
    Ok(FrameHeader {
        h: h as usize,
        w: w as usize,
        t: t as usize,
    })
}

/// Reads `count` frames of the given shape, streaming so that memory use follows
/// the data actually present.
pub fn read_frame_body<R: Read>(
    r: &mut R,
    header: FrameHeader,
) -> Result<Vec<FrameTensor>, FrameIoError> {
    let per_frame = header.h * header.w * CHANNELS;
    let mut frames = Vec::new();
    let mut chunk = vec![0u8; 4 * 4096];
    let mut global = 0u64;
    for _ in 0..header.t {
        let mut frame = FrameTensor::zeros(header.h, header.w);
        let mut done = 0usize;
        while done < per_frame {
            let n = (per_frame - done).min(4096);
            r.read_exact(&mut chunk[..4 * n])?;
            for (k, bytes) in chunk[..4 * n].chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(bytes.try_into().unwrap());
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(FrameIoError::InvalidValue {
                        index: global + k as u64,
                        value: v,
                    });
                }
                if v != 0.0 {
                    frame.entries.push(((done + k) as u32, v));
                }
            }
            done += n;
            global += n as u64;
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn read_frames<R: Read>(mut r: R) -> Result<(FrameHeader, Vec<FrameTensor>), FrameIoError> {
    let header = read_frame_header(&mut r)?;
    let frames = read_frame_body(&mut r, header)?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(FrameIoError::ShapeMismatch("trailing bytes after frames".into()));
    }
    Ok((header, frames))
}
