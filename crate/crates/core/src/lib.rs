//! Taxi-out alerting pipeline.
//!
//! Synthetic surface traffic is generated by [`surface_sim`], parsed into per-minute
//! taxiing state by [`ingest`], rasterized into six-channel tarmac frames by
//! [`rasterize`], summarized into per-minute statistics by [`metadata`] and cut into
//! labeled 30-minute windows by [`dataset`]. The fused Conv3D/Conv1D classifier lives
//! in [`nn`] and the boosted-tree calibrator plus threshold analysis in [`calibrate`].

pub mod calibrate;
pub mod dataset;
pub mod ingest;
pub mod metadata;
pub mod nn;
pub mod rasterize;
pub mod surface_sim;

/// Number of one-minute frames in one input window.
pub const WINDOW_MINUTES: usize = 30;

/// Seconds per minute, used for minute alignment of unix timestamps.
pub const MINUTE: i64 = 60;
