//! The monitoring and dissemination engine.
//!
//! Every tick the engine moves vehicles, detects events, delivers in-flight
//! packets, floods announcements inside their announcement zone, maintains
//! groups, streams monitoring packets from monitors towards gateways and
//! updates roles. Everything it does is appended to a [`SimLog`].

mod log;

pub use log::{time_decimals, DropCause, EventMeta, LogError, LogMeta, Record, SimLog};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterEffect, ClusterWorld, ClusteringConfig, Clusters};
use crate::mobility::{active_vehicles, event_position_at, Scenario};
use crate::model::{
    distance, ticks_ceil, EventId, Packet, PacketId, PacketKind, Position, Roles, StationId, Tick, VehicleId,
};
use crate::radio::{stations_covering, transmit, Endpoint, RadioConfig, Topology, Transmission};

/// Size of announcement and clustering packets.
pub const CONTROL_PAYLOAD_BYTES: u32 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Maximum dissemination time carried by announcements.
    #[serde(default = "ProtocolConfig::default_t_max")]
    pub t_max_s: f64,
    #[serde(default = "ProtocolConfig::default_announce_interval")]
    pub announce_interval_s: f64,
    #[serde(default = "ProtocolConfig::default_monitor_rate")]
    pub monitor_rate_pps: f64,
    #[serde(default = "ProtocolConfig::default_payload")]
    pub payload_bytes: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            t_max_s: Self::default_t_max(),
            announce_interval_s: Self::default_announce_interval(),
            monitor_rate_pps: Self::default_monitor_rate(),
            payload_bytes: Self::default_payload(),
        }
    }
}

impl ProtocolConfig {
    fn default_t_max() -> f64 {
        1.5
    }

    fn default_announce_interval() -> f64 {
        1.0
    }

    fn default_monitor_rate() -> f64 {
        10.0
    }

    fn default_payload() -> u32 {
        1200
    }
}

/// A fully resolved run: where things are, how the radio behaves and how the
/// protocol is parameterised.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSetup {
    pub name: String,
    pub scenario: Scenario,
    pub radio: RadioConfig,
    pub protocol: ProtocolConfig,
    pub clustering: ClusteringConfig,
    pub tick_s: f64,
    pub seed: u64,
}

impl SimSetup {
    pub fn ticks(&self) -> u64 {
        (self.scenario.duration / self.tick_s).round() as u64
    }

    pub fn log_meta(&self) -> LogMeta {
        LogMeta {
            tick_s: self.tick_s,
            ticks: self.ticks(),
            events: self
                .scenario
                .events
                .iter()
                .map(|e| EventMeta {
                    id: e.id,
                    name: e.name.clone(),
                    start: Tick((e.t_start / self.tick_s).round() as u64),
                    end: Tick((e.t_end / self.tick_s).round() as u64),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InFlight {
    pub packet: Packet,
    pub from: VehicleId,
    pub to: Endpoint,
}

/// Protocol state at one tick.
pub struct WorldState {
    pub now: Tick,
    pub topology: Topology,
    /// Active events and their positions.
    pub events: Vec<(EventId, Position)>,
    /// Non-empty role sets.
    pub roles: BTreeMap<(VehicleId, EventId), Roles>,
    pub clusters: Clusters,
    pub in_flight: BTreeMap<Tick, Vec<InFlight>>,
    pub ever_detected: HashSet<(VehicleId, EventId)>,
    /// Vehicles currently detecting each event.
    pub detecting: BTreeSet<(VehicleId, EventId)>,
    /// Tick of the last accepted announcement per zone member.
    zone: BTreeMap<EventId, BTreeMap<VehicleId, Tick>>,
    zone_timeout: u64,
    last_announce: HashMap<(VehicleId, EventId), Tick>,
    /// Vehicles that already hold (or are about to receive) each packet.
    reached: HashMap<PacketId, (Tick, HashSet<VehicleId>)>,
    relayed: BTreeSet<(VehicleId, EventId)>,
    gateway_cache: HashMap<VehicleId, Vec<StationId>>,
}

struct ZoneView<'a> {
    now: Tick,
    topology: &'a Topology,
    ever_detected: &'a HashSet<(VehicleId, EventId)>,
    zone: &'a BTreeMap<EventId, BTreeMap<VehicleId, Tick>>,
    timeout: u64,
}

impl ClusterWorld for ZoneView<'_> {
    fn now(&self) -> Tick {
        self.now
    }

    fn topology(&self) -> &Topology {
        self.topology
    }

    fn ever_detected(&self, vehicle: VehicleId, event: EventId) -> bool {
        self.ever_detected.contains(&(vehicle, event))
    }

    fn in_zone(&self, vehicle: VehicleId, event: EventId) -> bool {
        self.zone
            .get(&event)
            .and_then(|z| z.get(&vehicle))
            .is_some_and(|t| self.now.since(*t) <= self.timeout)
    }

    fn zone_members(&self, event: EventId) -> Vec<VehicleId> {
        self.zone
            .get(&event)
            .map(|z| {
                z.iter()
                    .filter(|(_, t)| self.now.since(**t) <= self.timeout)
                    .map(|(v, _)| *v)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn zone_events(&self) -> Vec<EventId> {
        self.zone
            .iter()
            .filter(|(_, z)| z.values().any(|t| self.now.since(*t) <= self.timeout))
            .map(|(e, _)| *e)
            .collect()
    }
}

impl WorldState {
    fn zone_view(&self) -> ZoneView<'_> {
        ZoneView {
            now: self.now,
            topology: &self.topology,
            ever_detected: &self.ever_detected,
            zone: &self.zone,
            timeout: self.zone_timeout,
        }
    }

    pub fn in_zone(&self, vehicle: VehicleId, event: EventId) -> bool {
        self.zone_view().in_zone(vehicle, event)
    }

    pub fn zone_members(&self, event: EventId) -> Vec<VehicleId> {
        self.zone_view().zone_members(event)
    }

    pub fn roles_of(&self, vehicle: VehicleId, event: EventId) -> Roles {
        self.roles.get(&(vehicle, event)).copied().unwrap_or_default()
    }
}

/// One deterministic run of the protocol.
pub struct Simulation<'a> {
    setup: &'a SimSetup,
    world: WorldState,
    rng: ChaCha8Rng,
    log: SimLog,
    ticks: u64,
    next_packet: u64,
    t_max_ticks: u64,
    announce_ticks: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(setup: &'a SimSetup) -> Self {
        let tick_s = setup.tick_s;
        let announce_ticks = ticks_ceil(setup.protocol.announce_interval_s, tick_s).max(1);
        let world = WorldState {
            now: Tick(0),
            topology: Topology::new(Vec::new(), setup.radio.v2v_range_m),
            events: Vec::new(),
            roles: BTreeMap::new(),
            clusters: Clusters::new(&setup.clustering, tick_s),
            in_flight: BTreeMap::new(),
            ever_detected: HashSet::new(),
            detecting: BTreeSet::new(),
            zone: BTreeMap::new(),
            zone_timeout: 2 * announce_ticks,
            last_announce: HashMap::new(),
            reached: HashMap::new(),
            relayed: BTreeSet::new(),
            gateway_cache: HashMap::new(),
        };
        Self {
            setup,
            world,
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            log: SimLog::new(setup.log_meta()),
            ticks: setup.ticks(),
            next_packet: 0,
            t_max_ticks: ticks_ceil(setup.protocol.t_max_s, tick_s),
            announce_ticks,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn log(&self) -> &SimLog {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.world.now.0 >= self.ticks
    }

    /// Runs every remaining tick and returns the log.
    pub fn run(mut self) -> SimLog {
        while !self.is_done() {
            self.step();
        }
        self.log
    }

    /// Simulates the current tick and advances time. Returns the number of
    /// records appended.
    pub fn step(&mut self) -> usize {
        assert!(!self.is_done(), "stepping past the end of the run");
        let before = self.log.records.len();
        self.update_mobility();
        self.detect();
        self.deliver();
        self.announce();
        self.maintain_groups();
        self.monitor_tick();
        self.assign_roles();
        if self.world.now.0.is_multiple_of(100) {
            self.prune();
        }
        self.world.now = self.world.now + 1;
        self.log.records.len() - before
    }

    fn now(&self) -> Tick {
        self.world.now
    }

    fn seconds(&self) -> f64 {
        self.world.now.seconds(self.setup.tick_s)
    }

    fn new_packet(&mut self, kind: PacketKind, event: EventId, origin: VehicleId) -> Packet {
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        let (t_max, payload_size) = match kind {
            PacketKind::Announcement => (Some(self.t_max_ticks), CONTROL_PAYLOAD_BYTES),
            PacketKind::Clustering => (None, CONTROL_PAYLOAD_BYTES),
            PacketKind::Monitoring => (None, self.setup.protocol.payload_bytes),
        };
        let packet = Packet {
            id,
            kind,
            event,
            origin,
            created_at: self.now(),
            t_max,
            hop_count: 0,
            payload_size,
        };
        self.log.push(Record::Generated { t: self.now(), packet });
        packet
    }

    fn update_mobility(&mut self) {
        let t = self.seconds();
        let now = self.now();
        let states = active_vehicles(&self.setup.scenario, t);
        let topology = Topology::new(states, self.setup.radio.v2v_range_m);
        let departed: Vec<VehicleId> = self
            .world
            .topology
            .vehicles()
            .iter()
            .map(|v| v.id)
            .filter(|id| !topology.contains(*id))
            .collect();
        self.world.topology = topology;
        self.world.gateway_cache.clear();
        self.world.relayed.clear();
        self.log.push(Record::Population { t: now, active: self.world.topology.len() as u32 });

        for v in departed {
            let effects = self.world.clusters.on_departure(v);
            self.apply_effects(effects);
        }
        self.world.events = self
            .setup
            .scenario
            .events
            .iter()
            .filter_map(|e| event_position_at(e, t).map(|p| (e.id, p)))
            .collect();
    }

    /// Every active vehicle within detection range of an active event
    /// detects it.
    fn detect(&mut self) {
        let now = self.now();
        self.world.detecting.clear();
        let range = self.setup.radio.detection_range_m;
        for &(event, pos) in &self.world.events {
            for vehicle in self.world.topology.within(pos, range) {
                self.world.detecting.insert((vehicle, event));
                self.world.ever_detected.insert((vehicle, event));
                self.log.push(Record::Detection { t: now, vehicle, event });
            }
        }
    }

    fn deliver(&mut self) {
        let now = self.now();
        let Some(due) = self.world.in_flight.remove(&now) else {
            return;
        };
        let mut delivered: HashSet<(PacketId, StationId)> = HashSet::new();
        for InFlight { packet, to, .. } in due {
            match to {
                Endpoint::Station(station) => {
                    if delivered.insert((packet.id, station)) {
                        self.log.push(Record::Received { t: now, packet, station });
                    }
                }
                Endpoint::Vehicle(v) if !self.world.topology.contains(v) => {
                    self.log.push(Record::Dropped { t: now, packet, at: v, cause: DropCause::ReceiverGone });
                }
                Endpoint::Vehicle(v) => match packet.kind {
                    PacketKind::Announcement => self.handle_announcement(v, packet),
                    PacketKind::Monitoring => self.route_monitoring(v, packet),
                    PacketKind::Clustering => {}
                },
            }
        }
    }

    /// Sends `packet` from `from` to each receiver; returns how many copies
    /// were scheduled.
    fn send(&mut self, packet: &Packet, from: VehicleId, receivers: &[Endpoint]) -> usize {
        let now = self.now();
        let mut scheduled = 0;
        for &to in receivers {
            let outcome = transmit(
                packet,
                from,
                to,
                now,
                &self.world.topology,
                &self.setup.scenario.base_stations,
                &self.setup.radio,
                self.setup.tick_s,
                &mut self.rng,
            )
            .expect("protocol only transmits to receivers in range");
            match outcome {
                Transmission::Scheduled { at, packet: copy } => {
                    self.log.push(Record::Forwarded { t: now, packet: copy, from, to });
                    self.world.in_flight.entry(at).or_default().push(InFlight { packet: copy, from, to });
                    if let Endpoint::Vehicle(v) = to {
                        self.mark_reached(packet, v);
                    }
                    scheduled += 1;
                }
                Transmission::Dropped => {
                    self.log.push(Record::Dropped { t: now, packet: packet.forwarded(), at: from, cause: DropCause::Loss });
                }
            }
        }
        scheduled
    }

    fn mark_reached(&mut self, packet: &Packet, vehicle: VehicleId) {
        self.world
            .reached
            .entry(packet.id)
            .or_insert_with(|| (packet.created_at, HashSet::new()))
            .1
            .insert(vehicle);
    }

    fn has_reached(&self, packet: PacketId, vehicle: VehicleId) -> bool {
        self.world.reached.get(&packet).is_some_and(|(_, s)| s.contains(&vehicle))
    }

    fn enter_zone(&mut self, vehicle: VehicleId, event: EventId) {
        let now = self.now();
        self.world.zone.entry(event).or_default().insert(vehicle, now);
        let effects = {
            let w = &mut self.world;
            let view = ZoneView {
                now: w.now,
                topology: &w.topology,
                ever_detected: &w.ever_detected,
                zone: &w.zone,
                timeout: w.zone_timeout,
            };
            w.clusters.on_announcement(vehicle, event, &view)
        };
        self.apply_effects(effects);
    }

    /// Zone check on receipt: stale announcements are discarded, fresh ones
    /// admit the receiver to the zone and are passed on to neighbours that
    /// have not been reached yet.
    fn handle_announcement(&mut self, vehicle: VehicleId, ann: Packet) {
        let now = self.now();
        let t_max = ann.t_max.unwrap_or(self.t_max_ticks);
        if now.since(ann.created_at) > t_max {
            self.log.push(Record::Dropped { t: now, packet: ann, at: vehicle, cause: DropCause::ZoneExpired });
            return;
        }
        self.enter_zone(vehicle, ann.event);
        let receivers: Vec<Endpoint> = self
            .world
            .topology
            .neighbors_of(vehicle)
            .into_iter()
            .filter(|u| !self.has_reached(ann.id, *u))
            .map(Endpoint::Vehicle)
            .collect();
        self.send(&ann, vehicle, &receivers);
    }

    /// Each detector announces once per announcement interval while it keeps
    /// detecting.
    fn announce(&mut self) {
        let now = self.now();
        let due: Vec<(VehicleId, EventId)> = self
            .world
            .detecting
            .iter()
            .copied()
            .filter(|k| {
                self.world
                    .last_announce
                    .get(k)
                    .is_none_or(|last| now.since(*last) >= self.announce_ticks)
            })
            .collect();
        for (vehicle, event) in due {
            self.world.last_announce.insert((vehicle, event), now);
            let ann = self.new_packet(PacketKind::Announcement, event, vehicle);
            self.mark_reached(&ann, vehicle);
            self.enter_zone(vehicle, event);
            let receivers: Vec<Endpoint> = self
                .world
                .topology
                .neighbors_of(vehicle)
                .into_iter()
                .map(Endpoint::Vehicle)
                .collect();
            self.send(&ann, vehicle, &receivers);
        }
    }

    fn maintain_groups(&mut self) {
        let effects = {
            let w = &mut self.world;
            let view = ZoneView {
                now: w.now,
                topology: &w.topology,
                ever_detected: &w.ever_detected,
                zone: &w.zone,
                timeout: w.zone_timeout,
            };
            w.clusters.maintenance_tick(&view)
        };
        self.apply_effects(effects);
    }

    fn apply_effects(&mut self, effects: Vec<ClusterEffect>) {
        let t = self.now();
        for effect in effects {
            match effect {
                ClusterEffect::Formed { group, event, leader } => {
                    self.log.push(Record::GroupFormed { t, group, event, leader })
                }
                ClusterEffect::Joined { group, event, vehicle } => {
                    self.log.push(Record::GroupJoined { t, group, event, vehicle })
                }
                ClusterEffect::Left { group, event, vehicle, reason } => {
                    self.log.push(Record::GroupLeft { t, group, event, vehicle, reason })
                }
                ClusterEffect::Dissolved { group, event } => self.log.push(Record::GroupDissolved { t, group, event }),
                ClusterEffect::Emit { vehicle, event } => {
                    self.new_packet(PacketKind::Clustering, event, vehicle);
                }
            }
        }
    }

    fn stations_of(&mut self, vehicle: VehicleId) -> Vec<StationId> {
        if let Some(s) = self.world.gateway_cache.get(&vehicle) {
            return s.clone();
        }
        let s = self
            .world
            .topology
            .position(vehicle)
            .map(|p| stations_covering(p, &self.setup.scenario.base_stations))
            .unwrap_or_default();
        self.world.gateway_cache.insert(vehicle, s.clone());
        s
    }

    /// Whether `vehicle` may carry traffic for `event`: an active member of a
    /// group for that event.
    fn carrier(&self, vehicle: VehicleId, event: EventId) -> bool {
        self.world.clusters.group_of(vehicle, event).is_some()
            && self.world.clusters.is_active(vehicle, event, &self.world.zone_view())
    }

    fn is_gateway(&mut self, vehicle: VehicleId, event: EventId) -> bool {
        self.carrier(vehicle, event) && !self.stations_of(vehicle).is_empty()
    }

    /// Greedy forwarding over the members of every group cooperating on the
    /// event. A gateway hands the packet to every base station in range. Every
    /// carrier then passes it to each unreached carrier neighbour strictly
    /// closer than itself to its nearest other gateway, so distance to the
    /// target shrinks on every hop.
    fn route_monitoring(&mut self, holder: VehicleId, packet: Packet) {
        let now = self.now();
        let event = packet.event;
        let originator = packet.origin == holder && packet.hop_count == 0;
        if !self.carrier(holder, event) {
            self.log.push(Record::Dropped { t: now, packet, at: holder, cause: DropCause::NoRoute });
            return;
        }
        let gateway = self.is_gateway(holder, event);
        if gateway {
            let stations: Vec<Endpoint> = self.stations_of(holder).into_iter().map(Endpoint::Station).collect();
            self.send(&packet, holder, &stations);
        }
        let members: BTreeSet<VehicleId> = self
            .world
            .clusters
            .groups()
            .filter(|g| g.event_id == event)
            .flat_map(|g| g.members.iter().copied())
            .filter(|m| *m != holder && self.world.topology.contains(*m))
            .collect();
        let here = self.world.topology.position(holder).expect("active holder");
        let mut target: Option<(f64, Position)> = None;
        for &m in &members {
            if self.is_gateway(m, event) {
                let p = self.world.topology.position(m).expect("active member");
                let d = distance(here, p);
                if target.is_none_or(|(best, _)| d < best) {
                    target = Some((d, p));
                }
            }
        }
        let next: Vec<Endpoint> = match target {
            Some((reach, goal)) => self
                .world
                .topology
                .neighbors_of(holder)
                .into_iter()
                .filter(|u| members.contains(u) && !self.has_reached(packet.id, *u))
                .filter(|u| self.carrier(*u, event))
                .filter(|u| distance(self.world.topology.position(*u).expect("neighbour"), goal) < reach)
                .map(Endpoint::Vehicle)
                .collect(),
            None => Vec::new(),
        };
        if next.is_empty() {
            if !gateway {
                self.log.push(Record::Dropped { t: now, packet, at: holder, cause: DropCause::NoRoute });
            }
            return;
        }
        if self.send(&packet, holder, &next) > 0 && !originator {
            self.world.relayed.insert((holder, event));
        }
    }

    fn monitor_tick(&mut self) {
        let rate_per_tick = self.setup.protocol.monitor_rate_pps * self.setup.tick_s;
        let k = self.now().0 as f64;
        let due = ((k + 1.0) * rate_per_tick + 1e-9).floor() - (k * rate_per_tick + 1e-9).floor();
        let due = due.max(0.0) as usize;
        if due == 0 {
            return;
        }
        let monitors: Vec<(VehicleId, EventId)> = self.world.detecting.iter().copied().collect();
        for (vehicle, event) in monitors {
            for _ in 0..due {
                let packet = self.new_packet(PacketKind::Monitoring, event, vehicle);
                self.mark_reached(&packet, vehicle);
                self.route_monitoring(vehicle, packet);
            }
        }
    }

    /// Recomputes roles and logs every change.
    fn assign_roles(&mut self) {
        let now = self.now();
        let mut next: BTreeMap<(VehicleId, EventId), Roles> = BTreeMap::new();
        for &key in &self.world.detecting {
            *next.entry(key).or_default() |= Roles::MONITOR;
        }
        for &key in &self.world.relayed {
            *next.entry(key).or_default() |= Roles::RELAY;
        }
        let members: Vec<(VehicleId, EventId)> = self
            .world
            .clusters
            .groups()
            .flat_map(|g| g.members.iter().map(move |m| (*m, g.event_id)))
            .collect();
        for (m, event) in members {
            if self.world.topology.contains(m) && self.is_gateway(m, event) {
                *next.entry((m, event)).or_default() |= Roles::GATEWAY;
            }
        }
        let prev = std::mem::take(&mut self.world.roles);
        let keys: BTreeSet<(VehicleId, EventId)> = prev.keys().chain(next.keys()).copied().collect();
        for key in keys {
            let old = prev.get(&key).copied().unwrap_or_default();
            let new = next.get(&key).copied().unwrap_or_default();
            if old != new {
                self.log.push(Record::RoleChange { t: now, vehicle: key.0, event: key.1, roles: new });
            }
        }
        self.world.roles = next;
    }

    fn prune(&mut self) {
        let now = self.now();
        let horizon = self.t_max_ticks.max(self.announce_ticks) * 4 + 200;
        self.world.reached.retain(|_, (created, _)| now.since(*created) <= horizon);
        let timeout = self.world.zone_timeout;
        for z in self.world.zone.values_mut() {
            z.retain(|_, t| now.since(*t) <= timeout);
        }
        self.world.last_announce.retain(|_, t| now.since(*t) <= horizon);
    }
}

/// Runs `setup` to completion.
pub fn run(setup: &SimSetup) -> SimLog {
    Simulation::new(setup).run()
}
