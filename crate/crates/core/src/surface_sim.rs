//! Deterministic synthetic airport surface traffic.
//!
//! Departures push back from a gate, taxi the shortest path to the active runway
//! end and join a single FIFO server there with exponential service times.
//! Arrivals land on the active runway, exit at the opposite end and taxi to a gate
//! unimpeded. Every flight reports its position once per minute on minute
//! boundaries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::ingest::{EventKind, FlightEvent, FlightKind, Record, TrackLog, TrackPoint};
use crate::MINUTE;

/// RNG stream used for flight planning (pushback/landing times and gates).
pub const PLAN_STREAM: u64 = 1;
/// RNG stream used for runway service draws, consumed in queue-entry order.
pub const SERVICE_STREAM: u64 = 2;
/// RNG stream used for the per-day congestion factor.
pub const DAY_FACTOR_STREAM: u64 = 3;

const METERS_PER_DEG_LAT: f64 = 111_320.0;
const KNOTS_PER_MPS: f64 = 1.943_844;

pub const DEFAULT_LAYOUT_JSON: &str = include_str!("../data/toy_lga.json");
pub const DEFAULT_SCHEDULE_CSV: &str = include_str!("../data/toy_schedule.csv");

#[derive(Debug, Error)]
pub enum SimError {
    #[error("layout is disconnected: {0}")]
    Disconnected(String),
    #[error("edge {index} has non-positive traversal time {seconds}")]
    NonPositiveEdge { index: usize, seconds: f64 },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid congestion parameters: {0}")]
    InvalidCongestion(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunwayEndConfig {
    pub node: usize,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunwayChange {
    /// Minute of day at which the change takes effect.
    pub minute: u32,
    pub runway_end: usize,
}

/// Layout description as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub airport_id: String,
    /// Node positions as `[lat, lon]` degrees.
    pub nodes: Vec<[f64; 2]>,
    /// Undirected edges as `[a, b, seconds]`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Gate node indices.
    pub gates: Vec<usize>,
    pub runway_ends: Vec<RunwayEndConfig>,
    pub active_runway_end: usize,
    #[serde(default)]
    pub runway_changes: Vec<RunwayChange>,
    /// Along-path spacing of queued aircraft behind the runway end.
    #[serde(default = "default_queue_spacing")]
    pub queue_spacing_m: f64,
}

fn default_queue_spacing() -> f64 {
    60.0
}

impl LayoutConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    /// The shipped toy layout modeled loosely on LGA.
    pub fn toy_lga() -> Self {
        Self::from_json(DEFAULT_LAYOUT_JSON).expect("shipped layout parses")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Flat-earth distance in meters, adequate at airport scale.
    pub fn distance_m(self, other: GeoPoint) -> f64 {
        let (dn, de) = self.offset_m(other);
        dn.hypot(de)
    }

    fn offset_m(self, other: GeoPoint) -> (f64, f64) {
        let mid_lat = 0.5 * (self.lat + other.lat);
        let dn = (other.lat - self.lat) * METERS_PER_DEG_LAT;
        let de = (other.lon - self.lon) * METERS_PER_DEG_LAT * mid_lat.to_radians().cos();
        (dn, de)
    }

    fn lerp(self, other: GeoPoint, f: f64) -> GeoPoint {
        GeoPoint {
            lat: self.lat + (other.lat - self.lat) * f,
            lon: self.lon + (other.lon - self.lon) * f,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub name: String,
    pub node: usize,
    pub position: GeoPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub seconds: f64,
}

/// A validated airport surface.
#[derive(Clone, Debug, PartialEq)]
pub struct AirportLayout {
    pub airport_id: String,
    pub nodes: Vec<GeoPoint>,
    pub edges: Vec<Edge>,
    pub gates: Vec<Site>,
    pub runway_ends: Vec<Site>,
    pub active_runway_end: usize,
    pub runway_changes: Vec<RunwayChange>,
    pub queue_spacing_m: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// A shortest path through the taxi graph with cumulative times.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub nodes: Vec<usize>,
    /// Cumulative seconds at each node; `cum_seconds[0] == 0`.
    pub cum_seconds: Vec<f64>,
}

impl Route {
    pub fn total_seconds(&self) -> f64 {
        *self.cum_seconds.last().unwrap_or(&0.0)
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Validates a layout config.
pub fn build_layout(config: &LayoutConfig) -> Result<AirportLayout, SimError> {
    let n = config.nodes.len();
    if config.gates.is_empty() {
        return Err(SimError::InvalidLayout("at least one gate is required".into()));
    }
    if config.runway_ends.is_empty() {
        return Err(SimError::InvalidLayout("at least one runway end is required".into()));
    }
    for (i, p) in config.nodes.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() || p[0].abs() > 90.0 || p[1].abs() > 180.0 {
            return Err(SimError::InvalidLayout(format!("node {i} has invalid position")));
        }
    }
    let mut edges = Vec::with_capacity(config.edges.len());
    let mut adjacency = vec![Vec::new(); n];
    for (index, &(a, b, seconds)) in config.edges.iter().enumerate() {
        if a >= n || b >= n {
            return Err(SimError::InvalidLayout(format!("edge {index} references a missing node")));
        }
        if !(seconds > 0.0) || !seconds.is_finite() {
            return Err(SimError::NonPositiveEdge { index, seconds });
        }
        edges.push(Edge { a, b, seconds });
        adjacency[a].push((b, seconds));
        adjacency[b].push((a, seconds));
    }
    let position = |i: usize| GeoPoint {
        lat: config.nodes[i][0],
        lon: config.nodes[i][1],
    };
    let mut gates = Vec::new();
    for (g, &node) in config.gates.iter().enumerate() {
        if node >= n {
            return Err(SimError::InvalidLayout(format!("gate {g} references a missing node")));
        }
        gates.push(Site {
            name: format!("G{}", g + 1),
            node,
            position: position(node),
        });
    }
    let mut runway_ends = Vec::new();
    for (r, end) in config.runway_ends.iter().enumerate() {
        if end.node >= n {
            return Err(SimError::InvalidLayout(format!("runway end {r} references a missing node")));
        }
        runway_ends.push(Site {
            name: end.name.clone(),
            node: end.node,
            position: position(end.node),
        });
    }
    let n_ends = runway_ends.len();
    if config.active_runway_end >= n_ends
        || config.runway_changes.iter().any(|c| c.runway_end >= n_ends)
    {
        return Err(SimError::InvalidLayout("active runway end index out of range".into()));
    }
    if config.runway_changes.iter().any(|c| c.minute >= 1440) {
        return Err(SimError::InvalidLayout("runway change minute beyond the day".into()));
    }
    if !(config.queue_spacing_m >= 0.0) || !config.queue_spacing_m.is_finite() {
        return Err(SimError::InvalidLayout("queue spacing must be non-negative".into()));
    }
    let mut runway_changes = config.runway_changes.clone();
    runway_changes.sort_by_key(|c| c.minute);

    let layout = AirportLayout {
        airport_id: config.airport_id.clone(),
        nodes: (0..n).map(position).collect(),
        edges,
        gates,
        runway_ends,
        active_runway_end: config.active_runway_end,
        runway_changes,
        queue_spacing_m: config.queue_spacing_m,
        adjacency,
    };

    for end in &layout.runway_ends {
        let dist = layout.distances_from(end.node);
        for gate in &layout.gates {
            if dist[gate.node].is_none() {
                return Err(SimError::Disconnected(format!(
                    "gate {} cannot reach runway end {}",
                    gate.name, end.name
                )));
            }
        }
        for other in &layout.runway_ends {
            if dist[other.node].is_none() {
                return Err(SimError::Disconnected(format!(
                    "runway end {} cannot reach runway end {}",
                    end.name, other.name
                )));
            }
        }
    }
    Ok(layout)
}

impl AirportLayout {
    fn dijkstra(&self, from: usize) -> (Vec<Option<f64>>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist: Vec<Option<f64>> = vec![None; n];
        let mut prev = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[from] = Some(0.0);
        heap.push(HeapItem(0.0, from));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if dist[u].is_some_and(|best| d > best) {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if dist[v].map_or(true, |best| nd < best) {
                    dist[v] = Some(nd);
                    prev[v] = Some(u);
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        (dist, prev)
    }

    fn distances_from(&self, from: usize) -> Vec<Option<f64>> {
        self.dijkstra(from).0
    }

    /// Shortest route between two nodes.
    pub fn route(&self, from: usize, to: usize) -> Route {
        let (dist, prev) = self.dijkstra(from);
        let mut nodes = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur].expect("validated layout is connected");
            nodes.push(cur);
        }
        nodes.reverse();
        let cum_seconds = nodes.iter().map(|&v| dist[v].unwrap()).collect();
        Route { nodes, cum_seconds }
    }

    /// Unimpeded taxi-out time from a gate to a runway end.
    pub fn unimpeded_taxi_out(&self, gate: usize, runway_end: usize) -> f64 {
        self.route(self.gates[gate].node, self.runway_ends[runway_end].node)
            .total_seconds()
    }

    /// Runway end in use for departures at a minute of the day.
    pub fn active_runway_at(&self, minute_of_day: u32) -> usize {
        self.runway_changes
            .iter()
            .take_while(|c| c.minute <= minute_of_day)
            .last()
            .map_or(self.active_runway_end, |c| c.runway_end)
    }

    /// Runway end where arrivals leave the runway while `departure_end` is active.
    pub fn arrival_exit(&self, departure_end: usize) -> usize {
        (departure_end + 1) % self.runway_ends.len()
    }

    /// Bounding box of all nodes as `(lat_min, lat_max, lon_min, lon_max)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        self.nodes.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.lat), b.max(p.lat), c.min(p.lon), d.max(p.lon)),
        )
    }

    /// Position and ground speed (knots) after `elapsed` seconds along a route.
    fn position_along(&self, route: &Route, elapsed: f64) -> (GeoPoint, f64) {
        let last = route.nodes.len() - 1;
        if last == 0 {
            return (self.nodes[route.nodes[0]], 0.0);
        }
        let mut seg = 0;
        while seg + 1 < last && route.cum_seconds[seg + 1] <= elapsed {
            seg += 1;
        }
        let (a, b) = (self.nodes[route.nodes[seg]], self.nodes[route.nodes[seg + 1]]);
        let dt = route.cum_seconds[seg + 1] - route.cum_seconds[seg];
        let f = ((elapsed - route.cum_seconds[seg]) / dt).clamp(0.0, 1.0);
        let speed = a.distance_m(b) / dt * KNOTS_PER_MPS;
        (a.lerp(b, f), speed)
    }

    /// Point `back_m` meters before the end of a route, walking the path backwards.
    fn position_before_end(&self, route: &Route, back_m: f64) -> GeoPoint {
        let mut remaining = back_m;
        for w in route.nodes.windows(2).rev() {
            let (a, b) = (self.nodes[w[0]], self.nodes[w[1]]);
            let len = a.distance_m(b);
            if remaining <= len {
                return if len > 0.0 { b.lerp(a, remaining / len) } else { b };
            }
            remaining -= len;
        }
        self.nodes[route.nodes[0]]
    }
}

/// Scheduled arrivals and departures per hour of one day.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandSchedule {
    pub arrivals: [u32; 24],
    pub departures: [u32; 24],
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    arrivals: u32,
    departures: u32,
}

impl DemandSchedule {
    pub fn zero() -> Self {
        Self {
            arrivals: [0; 24],
            departures: [0; 24],
        }
    }

    pub fn toy_default() -> Self {
        Self::from_csv(DEFAULT_SCHEDULE_CSV.as_bytes()).expect("shipped schedule parses")
    }

    pub fn count(&self, direction: FlightKind, hour: usize) -> u32 {
        match direction {
            FlightKind::Arrival => self.arrivals.get(hour).copied().unwrap_or(0),
            FlightKind::Departure => self.departures.get(hour).copied().unwrap_or(0),
        }
    }

    /// Reads a 24-row `arrivals,departures` CSV table with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::zero();
        let mut rows = 0;
        for row in rdr.deserialize::<ScheduleRow>() {
            let row = row?;
            if rows >= 24 {
                return Err(SimError::InvalidSchedule("more than 24 rows".into()));
            }
            out.arrivals[rows] = row.arrivals;
            out.departures[rows] = row.departures;
            rows += 1;
        }
        if rows != 24 {
            return Err(SimError::InvalidSchedule(format!("expected 24 rows, found {rows}")));
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for h in 0..24 {
            wtr.serialize(ScheduleRow {
                arrivals: self.arrivals[h],
                departures: self.departures[h],
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Every hourly count multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            arrivals: self.arrivals.map(|c| c * factor),
            departures: self.departures.map(|c| c * factor),
        }
    }
}

/// Runway service model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CongestionParams {
    /// Mean runway service time per departure, seconds.
    pub mean_service_s: f64,
    /// Log-normal sigma of a per-day multiplier on the mean service time. Zero
    /// disables day-to-day variation.
    pub day_factor_sigma: f64,
}

impl Default for CongestionParams {
    fn default() -> Self {
        Self {
            mean_service_s: 75.0,
            day_factor_sigma: 0.35,
        }
    }
}

impl CongestionParams {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.mean_service_s > 0.0) || !self.mean_service_s.is_finite() {
            return Err(SimError::InvalidCongestion("mean_service_s must be positive".into()));
        }
        if !(self.day_factor_sigma >= 0.0) || !self.day_factor_sigma.is_finite() {
            return Err(SimError::InvalidCongestion("day_factor_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// One planned flight, relative to the start of the day.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightPlan {
    pub flight_id: String,
    pub kind: FlightKind,
    pub gate: usize,
    /// Pushback (departures) or touchdown (arrivals), seconds after day start.
    pub start_s: i64,
}

/// Draws pushback/landing times uniformly within each scheduled hour and a gate
/// uniformly per flight.
pub fn plan_day(layout: &AirportLayout, schedule: &DemandSchedule, seed: u64) -> Vec<FlightPlan> {
    let mut rng = stream_rng(seed, PLAN_STREAM);
    let mut plans = Vec::new();
    for (kind, counts, prefix) in [
        (FlightKind::Departure, &schedule.departures, "D"),
        (FlightKind::Arrival, &schedule.arrivals, "A"),
    ] {
        let mut flights: Vec<(i64, usize)> = Vec::new();
        for (hour, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let t = hour as i64 * 3600 + rng.gen_range(0..3600);
                let gate = rng.gen_range(0..layout.gates.len());
                flights.push((t, gate));
            }
        }
        flights.sort();
        for (i, (start_s, gate)) in flights.into_iter().enumerate() {
            plans.push(FlightPlan {
                flight_id: format!("{prefix}{:04}", i + 1),
                kind,
                gate,
                start_s,
            });
        }
    }
    plans
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-flight outcome recorded by the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightOutcome {
    pub flight_id: String,
    pub kind: FlightKind,
    pub runway_end: usize,
    /// Opening event (OUT / ON), unix seconds.
    pub open: i64,
    /// Closing event (OFF / IN), unix seconds.
    pub close: i64,
    pub unimpeded_s: f64,
    /// Exact OFF - OUT (or IN - ON) before rounding to whole seconds.
    pub taxi_s: f64,
    /// Time the departure reached the runway queue, unix seconds (departures only).
    pub queue_entry: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub log: TrackLog,
    pub flights: Vec<FlightOutcome>,
    /// Multiplier applied to the mean service time for this day.
    pub day_factor: f64,
}

impl SimOutput {
    /// Departures holding in the queue of `runway_end` at unix time `t`.
    pub fn queue_length(&self, runway_end: usize, t: i64) -> usize {
        self.flights
            .iter()
            .filter(|f| f.kind == FlightKind::Departure && f.runway_end == runway_end)
            .filter(|f| f.open < t && t <= f.close)
            .filter(|f| f.queue_entry.is_some_and(|a| a <= t as f64))
            .count()
    }

    pub fn mean_taxi_out(&self) -> f64 {
        let deps: Vec<f64> = self
            .flights
            .iter()
            .filter(|f| f.kind == FlightKind::Departure)
            .map(|f| f.taxi_s)
            .collect();
        if deps.is_empty() {
            0.0
        } else {
            deps.iter().sum::<f64>() / deps.len() as f64
        }
    }
}

/// Simulates one day of surface traffic starting at `day_start` (unix seconds,
/// minute aligned).
pub fn simulate_day(
    layout: &AirportLayout,
    schedule: &DemandSchedule,
    congestion: &CongestionParams,
    seed: u64,
    day_start: i64,
) -> Result<TrackLog, SimError> {
    Ok(simulate_day_detailed(layout, schedule, congestion, seed, day_start)?.log)
}

pub fn simulate_day_detailed(
    layout: &AirportLayout,
    schedule: &DemandSchedule,
    congestion: &CongestionParams,
    seed: u64,
    day_start: i64,
) -> Result<SimOutput, SimError> {
    let plans = plan_day(layout, schedule, seed);
    run_plans(layout, &plans, congestion, seed, day_start)
}

struct DepartureRun {
    plan_index: usize,
    route: Route,
    runway_end: usize,
    out: f64,
    queue_entry: f64,
    off: f64,
}

/// Runs explicit flight plans through the surface model.
pub fn run_plans(
    layout: &AirportLayout,
    plans: &[FlightPlan],
    congestion: &CongestionParams,
    seed: u64,
    day_start: i64,
) -> Result<SimOutput, SimError> {
    congestion.validate()?;
    if day_start % MINUTE != 0 {
        return Err(SimError::InvalidSchedule("day start must be minute aligned".into()));
    }
    let day_factor = if congestion.day_factor_sigma > 0.0 {
        let dist = LogNormal::new(0.0, congestion.day_factor_sigma)
            .map_err(|e| SimError::InvalidCongestion(e.to_string()))?;
        dist.sample(&mut stream_rng(seed, DAY_FACTOR_STREAM))
    } else {
        1.0
    };
    let service = Exp::new(1.0 / (congestion.mean_service_s * day_factor))
        .map_err(|e| SimError::InvalidCongestion(e.to_string()))?;
    let mut service_rng = stream_rng(seed, SERVICE_STREAM);

    let mut departures: Vec<DepartureRun> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == FlightKind::Departure)
        .map(|(plan_index, p)| {
            let minute = (p.start_s.rem_euclid(86_400) / 60) as u32;
            let runway_end = layout.active_runway_at(minute);
            let route = layout.route(layout.gates[p.gate].node, layout.runway_ends[runway_end].node);
            let out = (day_start + p.start_s) as f64;
            let queue_entry = out + route.total_seconds();
            DepartureRun {
                plan_index,
                route,
                runway_end,
                out,
                queue_entry,
                off: 0.0,
            }
        })
        .collect();

    // FIFO per runway end in queue-entry order; service draws consumed in that order.
    departures.sort_by(|a, b| {
        a.queue_entry
            .total_cmp(&b.queue_entry)
            .then(a.plan_index.cmp(&b.plan_index))
    });
    let mut server_free = vec![f64::NEG_INFINITY; layout.runway_ends.len()];
    for dep in departures.iter_mut() {
        let s: f64 = service.sample(&mut service_rng);
        let start = dep.queue_entry.max(server_free[dep.runway_end]);
        dep.off = start + s;
        server_free[dep.runway_end] = dep.off;
    }

    let mut keyed: Vec<(i64, u8, usize, Record)> = Vec::new();
    let mut flights = Vec::with_capacity(plans.len());
    let closing = |t: f64| t.ceil() as i64;

    for (order, dep) in departures.iter().enumerate() {
        let plan = &plans[dep.plan_index];
        let out = dep.out as i64;
        let off = closing(dep.off);
        // Aircraft ahead in the same queue, in FIFO order.
        let ahead: Vec<(f64, i64)> = departures[..order]
            .iter()
            .filter(|d| d.runway_end == dep.runway_end)
            .map(|d| (d.queue_entry, closing(d.off)))
            .collect();
        push_event(&mut keyed, out, plan, EventKind::Out, dep.plan_index);
        let mut m = next_minute(out);
        while m <= off {
            let elapsed = m as f64 - dep.out;
            let (position, speed) = if (m as f64) < dep.queue_entry {
                layout.position_along(&dep.route, elapsed)
            } else {
                let k = ahead
                    .iter()
                    .filter(|&&(a, c)| a <= m as f64 && m <= c)
                    .count();
                (
                    layout.position_before_end(&dep.route, k as f64 * layout.queue_spacing_m),
                    0.0,
                )
            };
            push_point(&mut keyed, m, plan, position, speed, dep.plan_index);
            m += MINUTE;
        }
        push_event(&mut keyed, off, plan, EventKind::Off, dep.plan_index);
        flights.push(FlightOutcome {
            flight_id: plan.flight_id.clone(),
            kind: FlightKind::Departure,
            runway_end: dep.runway_end,
            open: out,
            close: off,
            unimpeded_s: dep.route.total_seconds(),
            taxi_s: dep.off - dep.out,
            queue_entry: Some(dep.queue_entry),
        });
    }

    for (plan_index, plan) in plans.iter().enumerate() {
        if plan.kind != FlightKind::Arrival {
            continue;
        }
        let minute = (plan.start_s.rem_euclid(86_400) / 60) as u32;
        let exit = layout.arrival_exit(layout.active_runway_at(minute));
        let route = layout.route(layout.runway_ends[exit].node, layout.gates[plan.gate].node);
        let on = day_start + plan.start_s;
        let in_f = on as f64 + route.total_seconds();
        let in_t = closing(in_f);
        push_event(&mut keyed, on, plan, EventKind::On, plan_index);
        let mut m = next_minute(on);
        while m <= in_t {
            let (position, speed) = layout.position_along(&route, (m - on) as f64);
            push_point(&mut keyed, m, plan, position, speed, plan_index);
            m += MINUTE;
        }
        push_event(&mut keyed, in_t, plan, EventKind::In, plan_index);
        flights.push(FlightOutcome {
            flight_id: plan.flight_id.clone(),
            kind: FlightKind::Arrival,
            runway_end: exit,
            open: on,
            close: in_t,
            unimpeded_s: route.total_seconds(),
            taxi_s: route.total_seconds(),
            queue_entry: None,
        });
    }

    keyed.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    Ok(SimOutput {
        log: TrackLog {
            records: keyed.into_iter().map(|k| k.3).collect(),
        },
        flights,
        day_factor,
    })
}

fn next_minute(t: i64) -> i64 {
    (t.div_euclid(MINUTE) + 1) * MINUTE
}

fn push_event(
    out: &mut Vec<(i64, u8, usize, Record)>,
    t: i64,
    plan: &FlightPlan,
    event: EventKind,
    order: usize,
) {
    let rank = if event.is_opening() { 0 } else { 2 };
    out.push((
        t,
        rank,
        order,
        Record::Event(FlightEvent {
            timestamp: t,
            flight_id: plan.flight_id.clone(),
            kind: plan.kind,
            event,
        }),
    ));
}

fn push_point(
    out: &mut Vec<(i64, u8, usize, Record)>,
    t: i64,
    plan: &FlightPlan,
    position: GeoPoint,
    speed: f64,
    order: usize,
) {
    out.push((
        t,
        1,
        order,
        Record::Point(TrackPoint {
            timestamp: t,
            flight_id: plan.flight_id.clone(),
            kind: plan.kind,
            lat: position.lat,
            lon: position.lon,
            ground_speed: speed,
        }),
    ));
}

/// Projection horizon for demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    PlusOne,
    PlusTwo,
}

impl Horizon {
    pub fn hours(self) -> usize {
        match self {
            Horizon::PlusOne => 1,
            Horizon::PlusTwo => 2,
        }
    }
}

/// Bounded seeded noise on demand projections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionJitter {
    pub amplitude: u32,
    pub seed: u64,
}

impl Default for ProjectionJitter {
    fn default() -> Self {
        Self {
            amplitude: 2,
            seed: 0,
        }
    }
}

/// RNG used for the projection at one (minute, horizon, direction).
pub fn projection_rng(seed: u64, minute_of_day: u32, horizon: Horizon, direction: FlightKind) -> ChaCha8Rng {
    let dir = match direction {
        FlightKind::Arrival => 0u64,
        FlightKind::Departure => 1u64,
    };
    let stream = 0x5052_4f4a_0000_0000 | (u64::from(minute_of_day) << 8) | ((horizon.hours() as u64) << 1) | dir;
    stream_rng(seed, stream)
}

/// Projected demand for the hour `horizon` hours after the clock's hour.
///
/// Hours past the end of the day have zero scheduled demand.
pub fn projected_demand(
    schedule: &DemandSchedule,
    minute_of_day: u32,
    horizon: Horizon,
    direction: FlightKind,
    jitter: ProjectionJitter,
) -> u32 {
    let hour = (minute_of_day / 60) as usize + horizon.hours();
    let base = schedule.count(direction, hour);
    if jitter.amplitude == 0 {
        return base;
    }
    let amp = i64::from(jitter.amplitude);
    let noise = projection_rng(jitter.seed, minute_of_day, horizon, direction).gen_range(-amp..=amp);
    (i64::from(base) + noise).max(0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_path(seconds: f64) -> LayoutConfig {
        LayoutConfig {
            airport_id: "T".into(),
            nodes: vec![[40.0, -73.0], [40.01, -73.0]],
            edges: vec![(0, 1, seconds)],
            gates: vec![0],
            runway_ends: vec![RunwayEndConfig {
                node: 1,
                name: "R".into(),
            }],
            active_runway_end: 0,
            runway_changes: vec![],
            queue_spacing_m: 60.0,
        }
    }

    #[test]
    fn single_edge_layout_has_that_unimpeded_time() {
        let layout = build_layout(&single_path(300.0)).unwrap();
        assert_eq!(layout.unimpeded_taxi_out(0, 0), 300.0);
    }

    #[test]
    fn toy_layout_extent() {
        let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
        assert_eq!(layout.gates.len(), 8);
        assert_eq!(layout.runway_ends.len(), 2);
        let (a, b, c, d) = layout.extent();
        assert!((b - a - 0.03).abs() < 0.003, "lat span {}", b - a);
        assert!((d - c - 0.05).abs() < 0.005, "lon span {}", d - c);
    }

    #[test]
    fn unreachable_gate_is_disconnected() {
        let mut cfg = single_path(300.0);
        cfg.nodes.push([40.02, -73.0]);
        cfg.gates.push(2);
        assert!(matches!(build_layout(&cfg), Err(SimError::Disconnected(_))));
    }

    #[test]
    fn non_positive_edge_rejected() {
        assert!(matches!(
            build_layout(&single_path(0.0)),
            Err(SimError::NonPositiveEdge { index: 0, .. })
        ));
        assert!(matches!(
            build_layout(&single_path(-5.0)),
            Err(SimError::NonPositiveEdge { .. })
        ));
    }

    #[test]
    fn runway_changes_apply_in_order() {
        let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
        let change = layout.runway_changes[0];
        assert_eq!(layout.active_runway_at(0), layout.active_runway_end);
        assert_eq!(layout.active_runway_at(change.minute), change.runway_end);
    }

    #[test]
    fn zero_demand_gives_empty_log() {
        let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
        let log = simulate_day(&layout, &DemandSchedule::zero(), &CongestionParams::default(), 3, 0).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn schedule_csv_round_trip() {
        let s = DemandSchedule::toy_default();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(DemandSchedule::from_csv(&buf[..]).unwrap(), s);
        assert!(DemandSchedule::from_csv(&b"arrivals,departures\n1,2\n"[..]).is_err());
    }

    #[test]
    fn projection_hour_arithmetic() {
        let mut s = DemandSchedule::zero();
        s.arrivals[11] = 17;
        s.arrivals[12] = 5;
        let none = ProjectionJitter { amplitude: 0, seed: 0 };
        let clock = 10 * 60 + 17;
        assert_eq!(projected_demand(&s, clock, Horizon::PlusOne, FlightKind::Arrival, none), 17);
        assert_eq!(projected_demand(&s, clock, Horizon::PlusTwo, FlightKind::Arrival, none), 5);
        assert_eq!(projected_demand(&s, 23 * 60, Horizon::PlusOne, FlightKind::Arrival, none), 0);
    }

    #[test]
    fn projection_jitter_is_bounded_and_replayable() {
        let mut s = DemandSchedule::zero();
        s.departures = [10; 24];
        let j = ProjectionJitter { amplitude: 2, seed: 42 };
        for minute in 0..1380 {
            let v = projected_demand(&s, minute, Horizon::PlusOne, FlightKind::Departure, j);
            let expected = 10 + projection_rng(42, minute, Horizon::PlusOne, FlightKind::Departure).gen_range(-2i64..=2);
            assert_eq!(i64::from(v), expected);
            assert!((8..=12).contains(&v));
        }
    }
}
