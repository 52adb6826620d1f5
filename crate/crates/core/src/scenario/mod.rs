//! Declarative scenario files.
//!
//! A scenario is a TOML document. [`validate`] checks it, fills in every
//! default and returns the resolved file; [`build`] turns a resolved file
//! into a [`SimSetup`] ready to run.
//!
//! ```toml
//! name = "example"
//! duration_s = 60
//! tick_s = 0.1
//! seed = 1
//! clustering = "dca_like"
//!
//! [bounds]
//! min_x = 0
//! min_y = 0
//! max_x = 1000
//! max_y = 500
//!
//! [mobility.grid_flows]
//! block_m = 250
//! arrival_rate_vps = 0.05
//! speed_min_mps = 8
//! speed_max_mps = 14
//!
//! [[events]]
//! name = "EV1"
//! kind = "fixed"
//! t_start_s = 5
//! t_end_s = 55
//! position = [500, 250]
//!
//! [base_stations]
//! count = 2
//! ```

mod builtin;

pub use builtin::{builtin, BUILTIN_NAMES};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusteringConfig, StrategyKind};
use crate::mobility::{generate, load_traces, GridFlows, Scenario, TraceError, TraceSample, VehicleTrace};
use crate::model::{
    normalize_heading, ticks_exact, BaseStation, Bounds, EventId, EventKind, EventSpec, Position, StationId,
    VehicleId,
};
use crate::protocol::{ProtocolConfig, SimSetup};
use crate::radio::RadioConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub clustering: StrategyKind,
    #[serde(default = "default_maintenance")]
    pub maintenance_interval_s: f64,
    #[serde(default = "default_grace")]
    pub grace_intervals: u32,
    pub bounds: Bounds,
    pub mobility: MobilitySpec,
    #[serde(default)]
    pub events: Vec<EventFile>,
    pub base_stations: StationLayout,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

fn default_tick() -> f64 {
    0.1
}

fn default_strategy() -> StrategyKind {
    StrategyKind::DcaLike
}

fn default_maintenance() -> f64 {
    1.0
}

fn default_grace() -> u32 {
    2
}

/// Exactly one source must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    /// Whitespace-separated `time vehicle_id x y speed heading` records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<Vec<VehicleFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_flows: Option<GridFlows>,
}

/// A hand-placed vehicle moving linearly between `[t, x, y]` waypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub waypoints: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub name: String,
    pub kind: EventKind,
    pub t_start_s: f64,
    pub t_end_s: f64,
    /// Fixed events only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    /// Mobile events only: `[t, x, y]` in absolute seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 3]>>,
}

/// Either `count` stations on a uniform grid or explicit `positions`.
/// After validation both are present and agree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationLayout {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    /// Defaults to the half-diagonal of a grid cell (gap-free coverage) for
    /// generated grids and to the V2V range for explicit positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
}

/// One violation, located by its key path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<ConfigError>),
    #[error("unknown built-in scenario '{0}' (expected one of paper_ld, paper_hd, smoke, clique)")]
    UnknownBuiltin(String),
    #[error("reading {path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn list(errors: &[ConfigError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

/// Splits a `rows x cols` grid over `bounds` so that cells are as close to
/// square as possible, and returns the cell centres row by row.
pub fn station_grid(bounds: &Bounds, count: u32) -> (Vec<[f64; 2]>, f64) {
    let n = count.max(1);
    let (w, h) = (bounds.width(), bounds.height());
    let (rows, cols) = (1..=n)
        .filter(|r| n.is_multiple_of(*r))
        .map(|r| (r, n / r))
        .min_by(|a, b| {
            let skew = |(r, c): (u32, u32)| ((w / c as f64) / (h / r as f64)).ln().abs();
            skew(*a).total_cmp(&skew(*b))
        })
        .expect("n >= 1 has a divisor");
    let (cw, ch) = (w / cols as f64, h / rows as f64);
    let mut out = Vec::with_capacity(n as usize);
    for r in 0..rows {
        for c in 0..cols {
            out.push([bounds.min_x + (c as f64 + 0.5) * cw, bounds.min_y + (r as f64 + 0.5) * ch]);
        }
    }
    (out, 0.5 * cw.hypot(ch))
}

struct Checker {
    errors: Vec<ConfigError>,
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError { path: path.into(), message: message.into() });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.fail(path, format!("must be positive, got {v}"));
        }
    }

    fn point(&mut self, path: &str, p: [f64; 2], bounds: &Bounds) {
        let pos = Position::new(p[0], p[1]);
        if !pos.is_finite() || (bounds.is_valid() && !bounds.contains(pos)) {
            self.fail(path, format!("({}, {}) lies outside the bounds", p[0], p[1]));
        }
    }

    fn waypoints(&mut self, path: &str, points: &[[f64; 3]], bounds: &Bounds) {
        for (i, w) in points.iter().enumerate() {
            self.point(&format!("{path}[{i}]"), [w[1], w[2]], bounds);
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1][0] > w[0][0])) {
            self.fail(format!("{path}[{}]", i + 1), "waypoint times must strictly increase");
        }
    }
}

/// Checks `file`, resolving relative paths against `base_dir`, and returns
/// it with every default made explicit. Every violation is reported.
pub fn validate(file: &ScenarioFile, base_dir: &Path) -> Result<ScenarioFile, Vec<ConfigError>> {
    let mut c = Checker { errors: Vec::new() };
    let mut out = file.clone();

    if file.name.trim().is_empty() {
        c.fail("name", "must not be empty");
    }
    c.positive("duration_s", file.duration_s);
    c.positive("tick_s", file.tick_s);
    if file.duration_s > 0.0 && file.tick_s > 0.0 && ticks_exact(file.duration_s, file.tick_s).is_none() {
        c.fail("duration_s", format!("{} is not a whole number of {} s ticks", file.duration_s, file.tick_s));
    }
    c.positive("maintenance_interval_s", file.maintenance_interval_s);
    if file.maintenance_interval_s > 0.0 && file.maintenance_interval_s < file.tick_s {
        c.fail("maintenance_interval_s", "must be at least one tick");
    }
    let b = &file.bounds;
    if !b.is_valid() {
        c.fail("bounds", "needs finite min_x < max_x and min_y < max_y");
    }

    let m = &file.mobility;
    let sources = [m.trace_file.is_some(), m.vehicles.is_some(), m.grid_flows.is_some()];
    match sources.iter().filter(|s| **s).count() {
        0 => c.fail("mobility", "missing mobility source (trace_file, vehicles or grid_flows)"),
        1 => {}
        _ => c.fail("mobility", "give exactly one of trace_file, vehicles or grid_flows"),
    }
    if let Some(path) = &m.trace_file {
        if !base_dir.join(path).is_file() {
            c.fail("mobility.trace_file", format!("{} does not exist", path.display()));
        }
    }
    if let Some(vehicles) = &m.vehicles {
        if vehicles.is_empty() {
            c.fail("mobility.vehicles", "must list at least one vehicle");
        }
        for (i, v) in vehicles.iter().enumerate() {
            let path = format!("mobility.vehicles[{i}].waypoints");
            if v.waypoints.is_empty() {
                c.fail(&path, "needs at least one waypoint");
            }
            c.waypoints(&path, &v.waypoints, b);
        }
    }
    if let Some(g) = &m.grid_flows {
        c.positive("mobility.grid_flows.block_m", g.block_m);
        if !(g.arrival_rate_vps.is_finite() && g.arrival_rate_vps >= 0.0) {
            c.fail("mobility.grid_flows.arrival_rate_vps", "must be non-negative");
        }
        c.positive("mobility.grid_flows.speed_min_mps", g.speed_min_mps);
        c.positive("mobility.grid_flows.speed_max_mps", g.speed_max_mps);
        if g.speed_min_mps > g.speed_max_mps {
            c.fail("mobility.grid_flows.speed_max_mps", "must not be below speed_min_mps");
        }
        c.positive("mobility.grid_flows.headway_m", g.headway_m);
        c.positive("mobility.grid_flows.sample_s", g.sample_s);
    }

    let mut names = HashSet::new();
    for (i, e) in file.events.iter().enumerate() {
        let path = format!("events[{i}]");
        if e.name.trim().is_empty() {
            c.fail(format!("{path}.name"), "must not be empty");
        } else if !names.insert(e.name.as_str()) {
            c.fail(format!("{path}.name"), format!("duplicate event name '{}'", e.name));
        }
        if !(e.t_start_s.is_finite() && e.t_start_s >= 0.0) {
            c.fail(format!("{path}.t_start_s"), format!("event {} starts before 0", e.name));
        }
        if !(e.t_end_s <= file.duration_s) {
            c.fail(
                format!("{path}.t_end_s"),
                format!("event {} ends at {} s, after the {} s duration", e.name, e.t_end_s, file.duration_s),
            );
        }
        if !(e.t_start_s < e.t_end_s) {
            c.fail(format!("{path}.t_end_s"), format!("event {} must end after it starts", e.name));
        }
        match e.kind {
            EventKind::Fixed => {
                match e.position {
                    Some(p) => c.point(&format!("{path}.position"), p, b),
                    None => c.fail(format!("{path}.position"), "fixed events need a position"),
                }
                if e.waypoints.is_some() {
                    c.fail(format!("{path}.waypoints"), "fixed events take a position, not waypoints");
                }
            }
            EventKind::Mobile => {
                match &e.waypoints {
                    Some(w) if w.len() >= 2 => c.waypoints(&format!("{path}.waypoints"), w, b),
                    _ => c.fail(format!("{path}.waypoints"), "mobile events need at least two waypoints"),
                }
                if e.position.is_some() {
                    c.fail(format!("{path}.position"), "mobile events take waypoints, not a position");
                }
            }
        }
    }

    let bs = &file.base_stations;
    match (bs.count, &bs.positions) {
        (None, None) => c.fail("base_stations", "give count or positions"),
        (Some(0), _) => c.fail("base_stations.count", "must be at least 1"),
        (Some(n), Some(p)) if p.len() != n as usize => {
            c.fail("base_stations.count", format!("{n} does not match the {} listed positions", p.len()))
        }
        (Some(n), None) if b.is_valid() => {
            let (positions, gap_free) = station_grid(b, n);
            out.base_stations.positions = Some(positions);
            out.base_stations.range_m.get_or_insert(gap_free);
        }
        (None, Some(p)) => {
            if p.is_empty() {
                c.fail("base_stations.positions", "must list at least one station");
            }
            out.base_stations.count = Some(p.len() as u32);
        }
        _ => {}
    }
    if let Some(p) = &bs.positions {
        for (i, pos) in p.iter().enumerate() {
            c.point(&format!("base_stations.positions[{i}]"), *pos, b);
        }
    }
    out.base_stations.range_m.get_or_insert(file.radio.v2v_range_m);
    if let Some(r) = bs.range_m {
        c.positive("base_stations.range_m", r);
    }

    let r = &file.radio;
    c.positive("radio.v2v_range_m", r.v2v_range_m);
    c.positive("radio.detection_range_m", r.detection_range_m);
    if !(0.0..1.0).contains(&r.loss_probability) {
        c.fail("radio.loss_probability", "must lie in [0, 1)");
    }
    if let Some(h) = r.hop_latency_s {
        c.positive("radio.hop_latency_s", h);
    }

    let p = &file.protocol;
    c.positive("protocol.t_max_s", p.t_max_s);
    c.positive("protocol.announce_interval_s", p.announce_interval_s);
    c.positive("protocol.monitor_rate_pps", p.monitor_rate_pps);
    if p.payload_bytes == 0 {
        c.fail("protocol.payload_bytes", "must be positive");
    }

    if c.errors.is_empty() {
        Ok(out)
    } else {
        Err(c.errors)
    }
}

fn waypoint_trace(id: VehicleId, label: String, points: &[[f64; 3]], duration: f64) -> VehicleTrace {
    let mut samples: Vec<TraceSample> = points
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (speed, heading) = match points.get(i + 1) {
                Some(n) => {
                    let (dx, dy) = (n[1] - w[1], n[2] - w[2]);
                    (dx.hypot(dy) / (n[0] - w[0]), if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) })
                }
                None => (0.0, 0.0),
            };
            TraceSample { t: w[0], position: Position::new(w[1], w[2]), speed, heading: normalize_heading(heading) }
        })
        .collect();
    // a single waypoint parks the vehicle for the whole run
    if let [only] = samples[..] {
        samples = vec![TraceSample { t: 0.0, ..only }, TraceSample { t: duration, ..only }];
    }
    VehicleTrace { id, label, samples }
}

/// Validates `file` and resolves it into a runnable setup. Synthetic traffic
/// is drawn from its own random stream derived from the seed.
pub fn build(file: &ScenarioFile, base_dir: &Path) -> Result<SimSetup, ScenarioError> {
    let file = validate(file, base_dir).map_err(ScenarioError::Invalid)?;

    let events: Vec<EventSpec> = file
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let trajectory = match e.kind {
                EventKind::Fixed => {
                    let p = e.position.expect("validated");
                    vec![(e.t_start_s, Position::new(p[0], p[1]))]
                }
                EventKind::Mobile => e
                    .waypoints
                    .as_ref()
                    .expect("validated")
                    .iter()
                    .map(|w| (w[0], Position::new(w[1], w[2])))
                    .collect(),
            };
            EventSpec {
                id: EventId(i as u32),
                name: e.name.clone(),
                kind: e.kind,
                trajectory,
                t_start: e.t_start_s,
                t_end: e.t_end_s,
            }
        })
        .collect();

    let m = &file.mobility;
    let traces = if let Some(path) = &m.trace_file {
        let full = base_dir.join(path);
        let f = File::open(&full).map_err(|source| ScenarioError::Io { path: full.clone(), source })?;
        load_traces(BufReader::new(f)).map_err(|source| ScenarioError::Trace { path: full, source })?
    } else if let Some(vehicles) = &m.vehicles {
        vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let label = v.label.clone().unwrap_or_else(|| format!("veh{i}"));
                waypoint_trace(VehicleId(i as u32), label, &v.waypoints, file.duration_s)
            })
            .collect()
    } else {
        let g = m.grid_flows.as_ref().expect("validated");
        let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
        rng.set_stream(1);
        generate(g, &file.bounds, file.duration_s, &events, &mut rng)
    };

    let range = file.base_stations.range_m.expect("validated");
    let base_stations = file
        .base_stations
        .positions
        .as_ref()
        .expect("validated")
        .iter()
        .enumerate()
        .map(|(i, p)| BaseStation { id: StationId(i as u32), position: Position::new(p[0], p[1]), range })
        .collect();

    Ok(SimSetup {
        name: file.name.clone(),
        scenario: Scenario { traces, events, base_stations, bounds: file.bounds, duration: file.duration_s },
        radio: file.radio.clone(),
        protocol: file.protocol.clone(),
        clustering: ClusteringConfig {
            strategy: file.clustering,
            maintenance_interval_s: file.maintenance_interval_s,
            grace_intervals: file.grace_intervals,
        },
        tick_s: file.tick_s,
        seed: file.seed,
    })
}
