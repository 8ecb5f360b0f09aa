//! Track-log file format and the per-flight taxiing state machine.
//!
//! A track log is newline-delimited JSON with two record kinds, position reports
//! and OUT/OFF/ON/IN events, sorted by timestamp. [`build_snapshots`] replays a
//! log minute by minute and yields the flights taxiing at each minute boundary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::MINUTE;

/// A flight report older than this is left out of the frame.
pub const STALE_AFTER_S: i64 = 120;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {t} precedes previous timestamp {prev}")]
    Order { line: usize, t: i64, prev: i64 },
    #[error("flight {flight}: {msg}")]
    StateMachine { flight: String, msg: String },
    #[error("invalid snapshot range [{start}, {end}): bounds must be minute-aligned and increasing")]
    Range { start: i64, end: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlightKind {
    #[serde(rename = "ARR")]
    Arrival,
    #[serde(rename = "DEP")]
    Departure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Push back from the gate.
    #[serde(rename = "OUT")]
    Out,
    /// Wheels off.
    #[serde(rename = "OFF")]
    Off,
    /// Wheels on.
    #[serde(rename = "ON")]
    On,
    /// Gate arrival.
    #[serde(rename = "IN")]
    In,
}

impl EventKind {
    /// The flight kind this event belongs to.
    pub fn flight_kind(self) -> FlightKind {
        match self {
            EventKind::Out | EventKind::Off => FlightKind::Departure,
            EventKind::On | EventKind::In => FlightKind::Arrival,
        }
    }

    /// Whether the event starts a taxi phase (OUT or ON).
    pub fn is_opening(self) -> bool {
        matches!(self, EventKind::Out | EventKind::On)
    }
}

/// One surface position report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    #[serde(rename = "t")]
    pub timestamp: i64,
    #[serde(rename = "fid")]
    pub flight_id: String,
    pub kind: FlightKind,
    pub lat: f64,
    pub lon: f64,
    #[serde(rename = "gs")]
    pub ground_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightEvent {
    #[serde(rename = "t")]
    pub timestamp: i64,
    #[serde(rename = "fid")]
    pub flight_id: String,
    pub kind: FlightKind,
    pub event: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Event(FlightEvent),
    Point(TrackPoint),
}

impl Record {
    pub fn timestamp(&self) -> i64 {
        match self {
            Record::Point(p) => p.timestamp,
            Record::Event(e) => e.timestamp,
        }
    }

    pub fn flight_id(&self) -> &str {
        match self {
            Record::Point(p) => &p.flight_id,
            Record::Event(e) => &e.flight_id,
        }
    }

    pub fn kind(&self) -> FlightKind {
        match self {
            Record::Point(p) => p.kind,
            Record::Event(e) => e.kind,
        }
    }
}

/// Time-ordered position reports and flight events.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackLog {
    pub records: Vec<Record>,
}

impl TrackLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn points(&self) -> impl Iterator<Item = &TrackPoint> {
        self.records.iter().filter_map(|r| match r {
            Record::Point(p) => Some(p),
            Record::Event(_) => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &FlightEvent> {
        self.records.iter().filter_map(|r| match r {
            Record::Event(e) => Some(e),
            Record::Point(_) => None,
        })
    }

    /// Writes the log as newline-delimited JSON.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

// Both record kinds share one shape on the wire; the presence of `event`
// decides which one a line is.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    t: i64,
    fid: String,
    kind: FlightKind,
    lat: Option<f64>,
    lon: Option<f64>,
    gs: Option<f64>,
    event: Option<EventKind>,
}

fn validate(raw: RawRecord) -> Result<Record, String> {
    if raw.fid.is_empty() {
        return Err("empty flight id".into());
    }
    match (raw.event, raw.lat, raw.lon, raw.gs) {
        (Some(event), None, None, None) => {
            if event.flight_kind() != raw.kind {
                return Err(format!("event {event:?} is not valid for a {:?} flight", raw.kind));
            }
            Ok(Record::Event(FlightEvent {
                timestamp: raw.t,
                flight_id: raw.fid,
                kind: raw.kind,
                event,
            }))
        }
        (None, Some(lat), Some(lon), Some(gs)) => {
            if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
                return Err(format!("latitude {lat} out of range"));
            }
            if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
                return Err(format!("longitude {lon} out of range"));
            }
            if !gs.is_finite() || gs < 0.0 {
                return Err(format!("ground speed {gs} must be finite and non-negative"));
            }
            Ok(Record::Point(TrackPoint {
                timestamp: raw.t,
                flight_id: raw.fid,
                kind: raw.kind,
                lat,
                lon,
                ground_speed: gs,
            }))
        }
        _ => Err("record must carry either `event` or all of `lat`, `lon`, `gs`".into()),
    }
}

/// Parses a track log, rejecting malformed lines and decreasing timestamps.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub fn read_track_log<R: BufRead>(mut reader: R) -> Result<TrackLog, IngestError> {
    let mut records = Vec::new();
    let mut kinds: HashMap<String, FlightKind> = HashMap::new();
    let mut prev: Option<i64> = None;
    let mut buf = Vec::new();
    let mut line = 0usize;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        let text = std::str::from_utf8(&buf).map_err(|e| IngestError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(text).map_err(|e| IngestError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let record = validate(raw).map_err(|msg| IngestError::Parse { line, msg })?;
        let t = record.timestamp();
        if let Some(p) = prev {
            if t < p {
                return Err(IngestError::Order { line, t, prev: p });
            }
        }
        prev = Some(t);
        match kinds.get(record.flight_id()) {
            Some(&k) if k != record.kind() => {
                return Err(IngestError::Parse {
                    line,
                    msg: format!("flight {} changes kind", record.flight_id()),
                });
            }
            Some(_) => {}
            None => {
                kinds.insert(record.flight_id().to_string(), record.kind());
            }
        }
        records.push(record);
    }
    Ok(TrackLog { records })
}

pub fn read_track_log_bytes(bytes: &[u8]) -> Result<TrackLog, IngestError> {
    read_track_log(bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    PreTaxi,
    Taxiing,
    Completed,
}

/// Taxiing state of one flight as seen at a snapshot clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub flight_id: String,
    pub kind: FlightKind,
    pub phase: Phase,
    pub taxi_start: Option<i64>,
    /// Seconds since the opening event, evaluated at the snapshot clock.
    pub cumulative_taxi: i64,
    pub last_lat: f64,
    pub last_lon: f64,
    pub last_speed: f64,
    pub last_report: Option<i64>,
}

impl FlightState {
    fn new(flight_id: &str, kind: FlightKind) -> Self {
        Self {
            flight_id: flight_id.to_string(),
            kind,
            phase: Phase::PreTaxi,
            taxi_start: None,
            cumulative_taxi: 0,
            last_lat: 0.0,
            last_lon: 0.0,
            last_speed: 0.0,
            last_report: None,
        }
    }
}

/// Flights taxiing at one minute boundary.
///
/// `active` holds flights reported within [`STALE_AFTER_S`] of the clock and is what
/// gets rasterized. `stale` holds flights that are still taxiing but have not been
/// reported recently; they count towards the tarmac averages only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinuteSnapshot {
    pub clock: i64,
    pub active: Vec<FlightState>,
    pub stale: Vec<FlightState>,
}

impl MinuteSnapshot {
    /// All taxiing flights, visible or not.
    pub fn taxiing(&self) -> impl Iterator<Item = &FlightState> {
        self.active.iter().chain(self.stale.iter())
    }
}

fn sm_error(flight: &str, msg: impl Into<String>) -> IngestError {
    IngestError::StateMachine {
        flight: flight.to_string(),
        msg: msg.into(),
    }
}

/// Checks that every flight's events follow pre-taxi -> taxiing -> completed.
fn check_event_order(log: &TrackLog) -> Result<(), IngestError> {
    let mut phases: HashMap<&str, Phase> = HashMap::new();
    for ev in log.events() {
        let phase = phases.entry(ev.flight_id.as_str()).or_insert(Phase::PreTaxi);
        *phase = match (*phase, ev.event.is_opening()) {
            (Phase::PreTaxi, true) => Phase::Taxiing,
            (Phase::Taxiing, false) => Phase::Completed,
            (Phase::PreTaxi, false) => {
                return Err(sm_error(&ev.flight_id, format!("{:?} without opening event", ev.event)))
            }
            (Phase::Taxiing, true) => {
                return Err(sm_error(&ev.flight_id, format!("duplicate {:?}", ev.event)))
            }
            (Phase::Completed, _) => {
                return Err(sm_error(&ev.flight_id, format!("{:?} after closing event", ev.event)))
            }
        };
    }
    Ok(())
}

/// Replays `log` and returns one snapshot per minute boundary in `[day_start, day_end)`.
///
/// At clock `c` a departure is taxiing iff `OUT < c <= OFF` (events are applied when
/// strictly earlier than the clock), an arrival analogously between ON and IN. Position
/// reports with timestamp `<= c` are visible at `c`.
pub fn build_snapshots(
    log: &TrackLog,
    day_start: i64,
    day_end: i64,
) -> Result<Vec<MinuteSnapshot>, IngestError> {
    if day_start % MINUTE != 0 || day_end % MINUTE != 0 || day_start >= day_end {
        return Err(IngestError::Range {
            start: day_start,
            end: day_end,
        });
    }
    check_event_order(log)?;

    let mut states: BTreeMap<String, FlightState> = BTreeMap::new();
    let mut closed: BTreeSet<String> = BTreeSet::new();
    let records = &log.records;
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(((day_end - day_start) / MINUTE) as usize);

    let mut clock = day_start;
    while clock < day_end {
        while pos < records.len() && records[pos].timestamp() < clock {
            apply(&records[pos], &mut states, &mut closed, true);
            pos += 1;
        }
        let mut ahead = pos;
        while ahead < records.len() && records[ahead].timestamp() == clock {
            apply(&records[ahead], &mut states, &mut closed, false);
            ahead += 1;
        }

        let mut snap = MinuteSnapshot {
            clock,
            ..Default::default()
        };
        for state in states.values() {
            if state.phase != Phase::Taxiing {
                continue;
            }
            let mut s = state.clone();
            s.cumulative_taxi = clock - s.taxi_start.expect("taxiing flight has a start");
            let fresh = s.last_report.is_some_and(|t| clock - t <= STALE_AFTER_S);
            if fresh {
                snap.active.push(s);
            } else {
                snap.stale.push(s);
            }
        }
        out.push(snap);
        clock += MINUTE;
    }
    Ok(out)
}

fn apply(
    record: &Record,
    states: &mut BTreeMap<String, FlightState>,
    closed: &mut BTreeSet<String>,
    apply_events: bool,
) {
    let fid = record.flight_id();
    if closed.contains(fid) {
        return;
    }
    match record {
        Record::Point(p) => {
            let state = states
                .entry(fid.to_string())
                .or_insert_with(|| FlightState::new(fid, p.kind));
            state.last_lat = p.lat;
            state.last_lon = p.lon;
            state.last_speed = p.ground_speed;
            state.last_report = Some(p.timestamp);
        }
        Record::Event(e) if apply_events => {
            if e.event.is_opening() {
                let state = states
                    .entry(fid.to_string())
                    .or_insert_with(|| FlightState::new(fid, e.kind));
                state.phase = Phase::Taxiing;
                state.taxi_start = Some(e.timestamp);
            } else {
                states.remove(fid);
                closed.insert(fid.to_string());
            }
        }
        Record::Event(_) => {}
    }
}
