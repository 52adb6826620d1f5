//! Group formation and maintenance inside announcement zones.
//!
//! Two strategies share the same machinery and differ only in which vehicles
//! take part actively:
//!
//! * `dca_like` is proactive. Every vehicle in the announcement zone joins a
//!   group (or founds one), emits clustering traffic and may carry
//!   monitoring traffic.
//! * `pctt_like` is target-gated. Only vehicles that have detected the event
//!   at least once found groups, emit clustering traffic or carry monitoring
//!   traffic. Other vehicles are recorded as passive members of a nearby
//!   group and stay silent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{distance, ticks_ceil, EventId, GroupId, Tick, VehicleId};
use crate::radio::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    DcaLike,
    PcttLike,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 2] = [StrategyKind::DcaLike, StrategyKind::PcttLike];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::DcaLike => "dca_like",
            StrategyKind::PcttLike => "pctt_like",
        }
    }

    pub fn strategy(self) -> &'static dyn ClusteringStrategy {
        match self {
            StrategyKind::DcaLike => &DcaLike,
            StrategyKind::PcttLike => &PcttLike,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dca_like" => Ok(StrategyKind::DcaLike),
            "pctt_like" => Ok(StrategyKind::PcttLike),
            other => Err(format!("unknown clustering strategy '{other}' (expected dca_like or pctt_like)")),
        }
    }
}

/// What the clustering layer needs to know about the rest of the world.
pub trait ClusterWorld {
    fn now(&self) -> Tick;
    fn topology(&self) -> &Topology;
    /// Whether `vehicle` has detected `event` at least once so far.
    fn ever_detected(&self, vehicle: VehicleId, event: EventId) -> bool;
    /// Whether `vehicle` currently belongs to the announcement zone of `event`.
    fn in_zone(&self, vehicle: VehicleId, event: EventId) -> bool;
    /// Members of the announcement zone of `event`, ordered by id.
    fn zone_members(&self, event: EventId) -> Vec<VehicleId>;
    /// Events with a non-empty announcement zone, ordered by id.
    fn zone_events(&self) -> Vec<EventId>;
}

/// Decides which vehicles participate actively in a group.
pub trait ClusteringStrategy: Sync {
    fn kind(&self) -> StrategyKind;

    /// Active members emit clustering packets, may found and lead groups and
    /// carry monitoring traffic.
    fn is_active(&self, vehicle: VehicleId, event: EventId, world: &dyn ClusterWorld) -> bool;
}

pub struct DcaLike;

impl ClusteringStrategy for DcaLike {
    fn kind(&self) -> StrategyKind {
        StrategyKind::DcaLike
    }

    fn is_active(&self, _: VehicleId, _: EventId, _: &dyn ClusterWorld) -> bool {
        true
    }
}

pub struct PcttLike;

impl ClusteringStrategy for PcttLike {
    fn kind(&self) -> StrategyKind {
        StrategyKind::PcttLike
    }

    fn is_active(&self, vehicle: VehicleId, event: EventId, world: &dyn ClusterWorld) -> bool {
        world.ever_detected(vehicle, event)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub strategy: StrategyKind,
    pub maintenance_interval_s: f64,
    /// Maintenance intervals a member may stay out of its leader's range.
    pub grace_intervals: u32,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::DcaLike,
            maintenance_interval_s: 1.0,
            grace_intervals: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterView {
    pub group_id: GroupId,
    pub leader: VehicleId,
    pub members: BTreeSet<VehicleId>,
    pub event_id: EventId,
    pub formed_at: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeaveReason {
    OutOfRange,
    LeftZone,
    Departed,
}

impl LeaveReason {
    pub fn as_str(self) -> &'static str {
        match self {
            LeaveReason::OutOfRange => "out_of_range",
            LeaveReason::LeftZone => "left_zone",
            LeaveReason::Departed => "departed",
        }
    }

    pub fn parse(s: &str) -> Option<LeaveReason> {
        match s {
            "out_of_range" => Some(LeaveReason::OutOfRange),
            "left_zone" => Some(LeaveReason::LeftZone),
            "departed" => Some(LeaveReason::Departed),
            _ => None,
        }
    }
}

/// Membership changes and clustering emissions, in the order they happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterEffect {
    Formed { group: GroupId, event: EventId, leader: VehicleId },
    Joined { group: GroupId, event: EventId, vehicle: VehicleId },
    Left { group: GroupId, event: EventId, vehicle: VehicleId, reason: LeaveReason },
    Dissolved { group: GroupId, event: EventId },
    /// One clustering packet from `vehicle`, a member at emission time.
    Emit { vehicle: VehicleId, event: EventId },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("leader election needs at least one candidate")]
pub struct EmptyCandidates;

/// Candidate with the highest current neighbour degree; ties go to the
/// lowest vehicle id.
pub fn elect_leader(candidates: &[VehicleId], topology: &Topology) -> Result<VehicleId, EmptyCandidates> {
    candidates
        .iter()
        .map(|&v| (topology.degree(v), v))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, v)| v)
        .ok_or(EmptyCandidates)
}

/// Group state of one run.
pub struct Clusters {
    strategy: &'static dyn ClusteringStrategy,
    maintenance_ticks: u64,
    grace_ticks: u64,
    groups: BTreeMap<GroupId, ClusterView>,
    membership: HashMap<(VehicleId, EventId), GroupId>,
    out_of_range_since: HashMap<(VehicleId, EventId), Tick>,
    next_group: u64,
    formed_total: u64,
}

impl Clusters {
    pub fn new(config: &ClusteringConfig, tick_s: f64) -> Self {
        let maintenance_ticks = ticks_ceil(config.maintenance_interval_s, tick_s).max(1);
        Self {
            strategy: config.strategy.strategy(),
            maintenance_ticks,
            grace_ticks: maintenance_ticks * config.grace_intervals as u64,
            groups: BTreeMap::new(),
            membership: HashMap::new(),
            out_of_range_since: HashMap::new(),
            next_group: 0,
            formed_total: 0,
        }
    }

    pub fn strategy(&self) -> StrategyKind {
        self.strategy.kind()
    }

    pub fn is_active(&self, vehicle: VehicleId, event: EventId, world: &dyn ClusterWorld) -> bool {
        self.strategy.is_active(vehicle, event, world)
    }

    pub fn groups(&self) -> impl Iterator<Item = &ClusterView> {
        self.groups.values()
    }

    pub fn group(&self, id: GroupId) -> Option<&ClusterView> {
        self.groups.get(&id)
    }

    pub fn group_of(&self, vehicle: VehicleId, event: EventId) -> Option<&ClusterView> {
        self.membership
            .get(&(vehicle, event))
            .and_then(|g| self.groups.get(g))
    }

    /// Groups created so far, including dissolved ones.
    pub fn formed_total(&self) -> u64 {
        self.formed_total
    }

    pub fn is_maintenance_tick(&self, now: Tick) -> bool {
        now.0.is_multiple_of(self.maintenance_ticks)
    }

    fn nearest_leader(&self, vehicle: VehicleId, event: EventId, topology: &Topology) -> Option<GroupId> {
        let here = topology.position(vehicle)?;
        self.groups
            .values()
            .filter(|g| g.event_id == event && g.leader != vehicle)
            .filter_map(|g| {
                let p = topology.position(g.leader)?;
                let d = distance(here, p);
                (d <= topology.range()).then_some((d, g.leader, g.group_id))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, _, g)| g)
    }

    fn form(&mut self, leader: VehicleId, event: EventId, now: Tick, out: &mut Vec<ClusterEffect>) -> GroupId {
        let group = GroupId(self.next_group);
        self.next_group += 1;
        self.formed_total += 1;
        self.groups.insert(
            group,
            ClusterView {
                group_id: group,
                leader,
                members: BTreeSet::from([leader]),
                event_id: event,
                formed_at: now,
            },
        );
        self.membership.insert((leader, event), group);
        out.push(ClusterEffect::Formed { group, event, leader });
        out.push(ClusterEffect::Joined { group, event, vehicle: leader });
        group
    }

    fn join(&mut self, vehicle: VehicleId, group: GroupId, out: &mut Vec<ClusterEffect>) {
        let view = self.groups.get_mut(&group).expect("joining a live group");
        view.members.insert(vehicle);
        let event = view.event_id;
        self.membership.insert((vehicle, event), group);
        out.push(ClusterEffect::Joined { group, event, vehicle });
    }

    fn leave(&mut self, vehicle: VehicleId, group: GroupId, reason: LeaveReason, out: &mut Vec<ClusterEffect>) {
        if let Some(view) = self.groups.get_mut(&group) {
            view.members.remove(&vehicle);
            let event = view.event_id;
            self.membership.remove(&(vehicle, event));
            self.out_of_range_since.remove(&(vehicle, event));
            out.push(ClusterEffect::Left { group, event, vehicle, reason });
        }
    }

    fn dissolve(&mut self, group: GroupId, out: &mut Vec<ClusterEffect>) {
        if let Some(view) = self.groups.remove(&group) {
            for m in &view.members {
                self.membership.remove(&(*m, view.event_id));
                self.out_of_range_since.remove(&(*m, view.event_id));
            }
            out.push(ClusterEffect::Dissolved { group, event: view.event_id });
        }
    }

    /// Called when `vehicle` accepted an announcement for `event` (or
    /// originated one) and is therefore inside the announcement zone.
    pub fn on_announcement(&mut self, vehicle: VehicleId, event: EventId, world: &dyn ClusterWorld) -> Vec<ClusterEffect> {
        let mut out = Vec::new();
        if self.membership.contains_key(&(vehicle, event)) || !world.topology().contains(vehicle) {
            return out;
        }
        let nearest = self.nearest_leader(vehicle, event, world.topology());
        if self.is_active(vehicle, event, world) {
            match nearest {
                Some(g) => self.join(vehicle, g, &mut out),
                None => {
                    self.form(vehicle, event, world.now(), &mut out);
                }
            }
            out.push(ClusterEffect::Emit { vehicle, event });
        } else if let Some(g) = nearest {
            self.join(vehicle, g, &mut out);
        }
        out
    }

    /// Removes a vehicle that left the scenario. Groups it led dissolve.
    pub fn on_departure(&mut self, vehicle: VehicleId) -> Vec<ClusterEffect> {
        let mut out = Vec::new();
        let mine: Vec<GroupId> = self
            .groups
            .values()
            .filter(|g| g.members.contains(&vehicle))
            .map(|g| g.group_id)
            .collect();
        for g in mine {
            if self.groups[&g].leader == vehicle {
                self.dissolve(g, &mut out);
            } else {
                self.leave(vehicle, g, LeaveReason::Departed, &mut out);
            }
        }
        out
    }

    /// Periodic upkeep, a no-op except on maintenance ticks: drops members
    /// that left the zone or stayed out of their leader's range past the
    /// grace period, dissolves leaderless groups, regroups unclustered zone
    /// vehicles and emits one clustering packet per active member.
    pub fn maintenance_tick(&mut self, world: &dyn ClusterWorld) -> Vec<ClusterEffect> {
        let mut out = Vec::new();
        let now = world.now();
        if !self.is_maintenance_tick(now) {
            return out;
        }
        let topology = world.topology();
        let mut emitted: BTreeSet<(VehicleId, EventId)> = BTreeSet::new();

        let ids: Vec<GroupId> = self.groups.keys().copied().collect();
        for g in ids {
            let view = &self.groups[&g];
            let (leader, event) = (view.leader, view.event_id);
            if !topology.contains(leader) || !world.in_zone(leader, event) {
                self.dissolve(g, &mut out);
                continue;
            }
            let members: Vec<VehicleId> = view.members.iter().copied().filter(|&m| m != leader).collect();
            for m in members {
                let active = self.is_active(m, event, world);
                if !topology.contains(m) {
                    self.leave(m, g, LeaveReason::Departed, &mut out);
                } else if !world.in_zone(m, event) {
                    if active {
                        out.push(ClusterEffect::Emit { vehicle: m, event });
                        emitted.insert((m, event));
                    }
                    self.leave(m, g, LeaveReason::LeftZone, &mut out);
                } else if topology.in_range(m, leader) {
                    self.out_of_range_since.remove(&(m, event));
                } else {
                    let since = *self.out_of_range_since.entry((m, event)).or_insert(now);
                    if now.since(since) > self.grace_ticks {
                        if active {
                            out.push(ClusterEffect::Emit { vehicle: m, event });
                            emitted.insert((m, event));
                        }
                        self.leave(m, g, LeaveReason::OutOfRange, &mut out);
                    }
                }
            }
        }

        for event in world.zone_events() {
            let unclustered: Vec<VehicleId> = world
                .zone_members(event)
                .into_iter()
                .filter(|v| topology.contains(*v) && !self.membership.contains_key(&(*v, event)))
                .collect();
            let mut founders = Vec::new();
            let mut passive = Vec::new();
            for v in unclustered {
                let active = self.is_active(v, event, world);
                match self.nearest_leader(v, event, topology) {
                    Some(g) => {
                        self.join(v, g, &mut out);
                        if active {
                            out.push(ClusterEffect::Emit { vehicle: v, event });
                            emitted.insert((v, event));
                        }
                    }
                    None if active => founders.push(v),
                    None => passive.push(v),
                }
            }
            while !founders.is_empty() {
                let leader = elect_leader(&founders, topology).expect("non-empty founders");
                let g = self.form(leader, event, now, &mut out);
                out.push(ClusterEffect::Emit { vehicle: leader, event });
                emitted.insert((leader, event));
                founders.retain(|&v| v != leader);
                let mut rest = Vec::new();
                for v in founders {
                    if topology.in_range(v, leader) {
                        self.join(v, g, &mut out);
                        out.push(ClusterEffect::Emit { vehicle: v, event });
                        emitted.insert((v, event));
                    } else {
                        rest.push(v);
                    }
                }
                founders = rest;
                passive.retain(|&v| {
                    if topology.in_range(v, leader) {
                        self.join(v, g, &mut out);
                        false
                    } else {
                        true
                    }
                });
            }
        }

        let members: Vec<(VehicleId, EventId)> = self
            .groups
            .values()
            .flat_map(|g| g.members.iter().map(move |m| (*m, g.event_id)))
            .collect();
        for (m, event) in members {
            if !emitted.contains(&(m, event)) && self.is_active(m, event, world) {
                out.push(ClusterEffect::Emit { vehicle: m, event });
            }
        }
        out
    }

    /// Checks the structural invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen: HashMap<(VehicleId, EventId), GroupId> = HashMap::new();
        for g in self.groups.values() {
            if !g.members.contains(&g.leader) {
                return Err(format!("group {} lacks its leader", g.group_id));
            }
            for m in &g.members {
                if let Some(other) = seen.insert((*m, g.event_id), g.group_id) {
                    return Err(format!("vehicle {m} in groups {other} and {} for one event", g.group_id));
                }
                if self.membership.get(&(*m, g.event_id)) != Some(&g.group_id) {
                    return Err(format!("membership index out of sync for {m}"));
                }
            }
        }
        if seen.len() != self.membership.len() {
            return Err("stale membership entries".into());
        }
        Ok(())
    }
}
