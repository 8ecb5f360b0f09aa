//! Per-minute tarmac statistics fed to the Conv1D branch.

use serde::{Deserialize, Serialize};

use crate::ingest::{EventKind, FlightKind, MinuteSnapshot, TrackLog};
use crate::surface_sim::{projected_demand, DemandSchedule, Horizon, ProjectionJitter};

/// Number of statistics in a full metadata vector.
pub const FULL_DIM: usize = 10;
pub const DEFAULT_DIM: usize = FULL_DIM;

pub const FEATURE_NAMES: [&str; FULL_DIM] = [
    "avg_taxi_in",
    "avg_taxi_out",
    "cur_arr_demand",
    "cur_dep_demand",
    "cur_arrivals",
    "cur_departures",
    "arr_demand_p1",
    "arr_demand_p2",
    "dep_demand_p1",
    "dep_demand_p2",
];

/// Tarmac statistics at one minute. Averages are in minutes and are zero when no
/// aircraft of that kind is taxiing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataVector {
    pub avg_taxi_in: f64,
    pub avg_taxi_out: f64,
    pub cur_arr_demand: f64,
    pub cur_dep_demand: f64,
    pub cur_arrivals: f64,
    pub cur_departures: f64,
    pub arr_demand_p1: f64,
    pub arr_demand_p2: f64,
    pub dep_demand_p1: f64,
    pub dep_demand_p2: f64,
}

impl MetadataVector {
    pub fn to_array(&self) -> [f64; FULL_DIM] {
        [
            self.avg_taxi_in,
            self.avg_taxi_out,
            self.cur_arr_demand,
            self.cur_dep_demand,
            self.cur_arrivals,
            self.cur_departures,
            self.arr_demand_p1,
            self.arr_demand_p2,
            self.dep_demand_p1,
            self.dep_demand_p2,
        ]
    }

    /// The first `dim` features as f32, the on-disk representation.
    pub fn features(&self, dim: usize) -> Vec<f32> {
        assert!(dim <= FULL_DIM, "metadata dimension {dim} exceeds {FULL_DIM}");
        self.to_array()[..dim].iter().map(|&v| v as f32).collect()
    }
}

/// Sorted wheels-off and wheels-on times, for per-hour running counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventHistory {
    offs: Vec<i64>,
    ons: Vec<i64>,
}

impl EventHistory {
    pub fn from_log(log: &TrackLog) -> Self {
        let mut h = Self::default();
        for e in log.events() {
            match e.event {
                EventKind::Off => h.offs.push(e.timestamp),
                EventKind::On => h.ons.push(e.timestamp),
                _ => {}
            }
        }
        h.offs.sort_unstable();
        h.ons.sort_unstable();
        h
    }

    /// Completed operations with `from <= t < until`: ON for arrivals, OFF for departures.
    pub fn count(&self, kind: FlightKind, from: i64, until: i64) -> usize {
        let v = match kind {
            FlightKind::Arrival => &self.ons,
            FlightKind::Departure => &self.offs,
        };
        let lo = v.partition_point(|&t| t < from);
        let hi = v.partition_point(|&t| t < until);
        hi.saturating_sub(lo)
    }
}

/// Everything besides the snapshot that the metadata of a minute depends on.
#[derive(Clone, Copy, Debug)]
pub struct MetadataContext<'a> {
    pub schedule: &'a DemandSchedule,
    pub history: &'a EventHistory,
    pub jitter: ProjectionJitter,
    /// Unix seconds of 00:00 of the schedule's day.
    pub day_start: i64,
}

fn mean_minutes<'a>(it: impl Iterator<Item = &'a crate::ingest::FlightState>) -> f64 {
    let (sum, n) = it.fold((0i64, 0usize), |(s, n), f| (s + f.cumulative_taxi, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / 60.0 / n as f64
    }
}

/// Average taxi-out time in minutes over all taxiing departures.
pub fn avg_taxi_out(snapshot: &MinuteSnapshot) -> f64 {
    mean_minutes(snapshot.taxiing().filter(|f| f.kind == FlightKind::Departure))
}

pub fn avg_taxi_in(snapshot: &MinuteSnapshot) -> f64 {
    mean_minutes(snapshot.taxiing().filter(|f| f.kind == FlightKind::Arrival))
}

pub fn metadata_at(snapshot: &MinuteSnapshot, ctx: &MetadataContext) -> MetadataVector {
    let since_start = snapshot.clock - ctx.day_start;
    let hour = since_start.div_euclid(3600).max(0) as usize;
    let minute_of_day = since_start.div_euclid(60).max(0) as u32;
    let hour_start = ctx.day_start + hour as i64 * 3600;
    let demand = |kind| f64::from(ctx.schedule.count(kind, hour));
    let proj = |h, kind| f64::from(projected_demand(ctx.schedule, minute_of_day, h, kind, ctx.jitter));
    MetadataVector {
        avg_taxi_in: avg_taxi_in(snapshot),
        avg_taxi_out: avg_taxi_out(snapshot),
        cur_arr_demand: demand(FlightKind::Arrival),
        cur_dep_demand: demand(FlightKind::Departure),
        cur_arrivals: ctx.history.count(FlightKind::Arrival, hour_start, snapshot.clock) as f64,
        cur_departures: ctx.history.count(FlightKind::Departure, hour_start, snapshot.clock) as f64,
        arr_demand_p1: proj(Horizon::PlusOne, FlightKind::Arrival),
        arr_demand_p2: proj(Horizon::PlusTwo, FlightKind::Arrival),
        dep_demand_p1: proj(Horizon::PlusOne, FlightKind::Departure),
        dep_demand_p2: proj(Horizon::PlusTwo, FlightKind::Departure),
    }
}

/// Per-minute average taxi-out times; the only input to labeling.
pub fn avg_taxi_out_series(snapshots: &[MinuteSnapshot]) -> Vec<f64> {
    snapshots.iter().map(avg_taxi_out).collect()
}
