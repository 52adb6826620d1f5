//! Unit-disk radio: who hears whom, how long a hop takes, and which
//! transmissions are lost.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{distance, ticks_ceil, BaseStation, Packet, Position, StationId, Tick, VehicleId, VehicleState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    #[serde(default = "RadioConfig::default_v2v_range")]
    pub v2v_range_m: f64,
    #[serde(default)]
    pub loss_probability: f64,
    /// Defaults to one tick when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_latency_s: Option<f64>,
    #[serde(default = "RadioConfig::default_detection_range")]
    pub detection_range_m: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            v2v_range_m: Self::default_v2v_range(),
            loss_probability: 0.0,
            hop_latency_s: None,
            detection_range_m: Self::default_detection_range(),
        }
    }
}

impl RadioConfig {
    fn default_v2v_range() -> f64 {
        200.0
    }

    fn default_detection_range() -> f64 {
        10.0
    }

    pub fn hop_latency_ticks(&self, tick_s: f64) -> u64 {
        self.hop_latency_s.map_or(1, |s| ticks_ceil(s, tick_s).max(1))
    }
}

/// Receiver of a single transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Vehicle(VehicleId),
    Station(StationId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Vehicle(v) => write!(f, "v{v}"),
            Endpoint::Station(s) => write!(f, "b{s}"),
        }
    }
}

impl Endpoint {
    pub fn parse(s: &str) -> Option<Endpoint> {
        let (tag, rest) = s.split_at_checked(1)?;
        match tag {
            "v" => rest.parse().ok().map(|n| Endpoint::Vehicle(VehicleId(n))),
            "b" => rest.parse().ok().map(|n| Endpoint::Station(StationId(n))),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("{to} is out of range of vehicle {from}")]
    OutOfRange { from: VehicleId, to: Endpoint },
    #[error("vehicle {0} is not active")]
    Inactive(VehicleId),
    #[error("unknown base station {0}")]
    UnknownStation(StationId),
}

/// Connectivity snapshot of the active vehicles at one tick, bucketed on a
/// square grid with cell side equal to the radio range.
#[derive(Clone, Debug, Default)]
pub struct Topology {
    range: f64,
    vehicles: Vec<VehicleState>,
    index: HashMap<VehicleId, usize>,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Topology {
    pub fn new(mut vehicles: Vec<VehicleState>, range: f64) -> Self {
        vehicles.sort_by_key(|v| v.id);
        let mut index = HashMap::with_capacity(vehicles.len());
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, v) in vehicles.iter().enumerate() {
            index.insert(v.id, i);
            cells.entry(Self::cell(v.position, range)).or_default().push(i);
        }
        Self { range, vehicles, index, cells }
    }

    fn cell(p: Position, range: f64) -> (i64, i64) {
        ((p.x / range).floor() as i64, (p.y / range).floor() as i64)
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Active vehicles ordered by id.
    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn get(&self, id: VehicleId) -> Option<&VehicleState> {
        self.index.get(&id).map(|&i| &self.vehicles[i])
    }

    pub fn position(&self, id: VehicleId) -> Option<Position> {
        self.get(id).map(|v| v.position)
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.index.contains_key(&id)
    }

    /// Active vehicles within `radius` of `p`, ordered by id.
    pub fn within(&self, p: Position, radius: f64) -> Vec<VehicleId> {
        let (cx, cy) = Self::cell(p, self.range);
        let reach = (radius / self.range).ceil() as i64;
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(members) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        members
                            .iter()
                            .map(|&i| &self.vehicles[i])
                            .filter(|v| distance(v.position, p) <= radius)
                            .map(|v| v.id),
                    );
                }
            }
        }
        out.sort();
        out
    }

    /// One-hop neighbours of `id` (excluding itself), ordered by id.
    pub fn neighbors_of(&self, id: VehicleId) -> Vec<VehicleId> {
        match self.position(id) {
            Some(p) => {
                let mut n = self.within(p, self.range);
                n.retain(|&u| u != id);
                n
            }
            None => Vec::new(),
        }
    }

    pub fn degree(&self, id: VehicleId) -> usize {
        self.neighbors_of(id).len()
    }

    pub fn in_range(&self, a: VehicleId, b: VehicleId) -> bool {
        match (self.position(a), self.position(b)) {
            (Some(pa), Some(pb)) => distance(pa, pb) <= self.range,
            _ => false,
        }
    }
}

/// Active vehicles `u != v` within V2V range of `v`.
pub fn neighbors(v: &VehicleState, topology: &Topology) -> Vec<VehicleId> {
    let mut n = topology.within(v.position, topology.range());
    n.retain(|&u| u != v.id);
    n
}

/// Stations whose range covers `p`, ordered by id.
pub fn stations_covering(p: Position, stations: &[BaseStation]) -> Vec<StationId> {
    let mut out: Vec<StationId> = stations
        .iter()
        .filter(|bs| distance(bs.position, p) <= bs.range)
        .map(|bs| bs.id)
        .collect();
    out.sort();
    out
}

pub fn reachable_base_stations(v: &VehicleState, stations: &[BaseStation]) -> Vec<StationId> {
    stations_covering(v.position, stations)
}

/// Outcome of one link-layer transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transmission {
    /// The copy, with its hop count incremented, arrives at `at`.
    Scheduled { at: Tick, packet: Packet },
    Dropped,
}

/// Sends one copy of `packet` from `from` to `to` at `now`. Every call draws
/// exactly one value from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn transmit<R: Rng + ?Sized>(
    packet: &Packet,
    from: VehicleId,
    to: Endpoint,
    now: Tick,
    topology: &Topology,
    stations: &[BaseStation],
    config: &RadioConfig,
    tick_s: f64,
    rng: &mut R,
) -> Result<Transmission, RadioError> {
    let src = topology.position(from).ok_or(RadioError::Inactive(from))?;
    let in_range = match to {
        Endpoint::Vehicle(v) => {
            let dst = topology.position(v).ok_or(RadioError::Inactive(v))?;
            distance(src, dst) <= config.v2v_range_m
        }
        Endpoint::Station(s) => {
            let bs = stations
                .iter()
                .find(|bs| bs.id == s)
                .ok_or(RadioError::UnknownStation(s))?;
            distance(src, bs.position) <= bs.range
        }
    };
    if !in_range {
        return Err(RadioError::OutOfRange { from, to });
    }
    let lost = rng.random::<f64>() < config.loss_probability;
    if lost {
        return Ok(Transmission::Dropped);
    }
    Ok(Transmission::Scheduled {
        at: now + config.hop_latency_ticks(tick_s),
        packet: packet.forwarded(),
    })
}
