//! Evaluation metrics computed from a [`SimLog`].
//!
//! Per-tick series: detecting vehicles, cooperating vehicles, generated
//! clustering and monitoring packets, received monitoring packets. Interval
//! aggregates: redundancy split, average delay, clustering overhead, grouped
//! vehicle ratio and formed groups. Integrals over an interval are sums over
//! its ticks; the tick length cancels in every ratio.

mod export;

pub use export::{write_run_outputs, write_summary_csv, RunOutputs};

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::model::{EventId, PacketId, PacketKind, StationId, Tick, VehicleId};
use crate::protocol::{Record, SimLog};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("record at tick {tick} lies outside the run of {ticks} ticks")]
    OutOfRun { tick: u64, ticks: u64 },
    #[error("record at tick {tick} refers to unknown event {event}")]
    UnknownEvent { tick: u64, event: EventId },
}

/// Half-open tick interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TickRange {
    pub start: u64,
    pub end: u64,
}

impl TickRange {
    pub fn new(start: u64, end: u64) -> Self {
        Self { start, end: end.max(start) }
    }

    pub fn whole(log: &SimLog) -> Self {
        Self::new(0, log.meta.ticks)
    }

    pub fn contains(&self, t: Tick) -> bool {
        t.0 >= self.start && t.0 < self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Alternative readings of two ambiguous definitions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetricsOptions {
    /// Use the triangular sum `Σ_{x=1}^{|N(t)|} x` as the grouped-vehicle
    /// denominator instead of `|N(t)|`.
    pub eq7_literal: bool,
    /// Average delay over first receipts of distinct packets instead of over
    /// every receipt.
    pub per_unique_delay: bool,
}

/// Per-tick values for one event; every vector has one entry per tick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricSeries {
    pub event: EventId,
    /// Detecting vehicles.
    pub n_vd: Vec<u64>,
    /// Cooperating vehicles (any of monitor, relay, gateway).
    pub n_vc: Vec<u64>,
    /// Generated clustering packets.
    pub cp_g: Vec<u64>,
    /// Generated monitoring packets.
    pub mp_g: Vec<u64>,
    /// Received monitoring packets over all stations, duplicates included.
    pub mp_r: Vec<u64>,
}

impl MetricSeries {
    pub fn named(&self) -> [(&'static str, &[u64]); 5] {
        [
            ("n_vd", &self.n_vd),
            ("n_vc", &self.n_vc),
            ("cp_g", &self.cp_g),
            ("mp_g", &self.mp_g),
            ("mp_r", &self.mp_r),
        ]
    }
}

fn check(log: &SimLog) -> Result<(), MetricsError> {
    let ticks = log.meta.ticks;
    let known: HashSet<EventId> = log.meta.events.iter().map(|e| e.id).collect();
    for r in &log.records {
        let tick = r.tick().0;
        if tick >= ticks {
            return Err(MetricsError::OutOfRun { tick, ticks });
        }
        let event = match r {
            Record::Detection { event, .. }
            | Record::GroupFormed { event, .. }
            | Record::GroupJoined { event, .. }
            | Record::GroupLeft { event, .. }
            | Record::GroupDissolved { event, .. }
            | Record::RoleChange { event, .. } => Some(*event),
            Record::Generated { packet, .. }
            | Record::Forwarded { packet, .. }
            | Record::Received { packet, .. }
            | Record::Dropped { packet, .. } => Some(packet.event),
            Record::Population { .. } => None,
        };
        if let Some(event) = event.filter(|e| !known.contains(e)) {
            return Err(MetricsError::UnknownEvent { tick, event });
        }
    }
    Ok(())
}

/// Per-tick series for every event declared in the log header.
pub fn series(log: &SimLog) -> Result<BTreeMap<EventId, MetricSeries>, MetricsError> {
    check(log)?;
    let n = log.meta.ticks as usize;
    let mut out: BTreeMap<EventId, MetricSeries> = log
        .meta
        .events
        .iter()
        .map(|e| {
            (
                e.id,
                MetricSeries {
                    event: e.id,
                    n_vd: vec![0; n],
                    n_vc: vec![0; n],
                    cp_g: vec![0; n],
                    mp_g: vec![0; n],
                    mp_r: vec![0; n],
                },
            )
        })
        .collect();

    let mut detected: HashSet<(u64, VehicleId, EventId)> = HashSet::new();
    let mut cooperating: HashSet<(VehicleId, EventId)> = HashSet::new();
    let mut coop_count: HashMap<EventId, u64> = HashMap::new();
    let mut filled_to = 0usize;

    // role state holds until the next change
    fn fill_coop(from: usize, upto: usize, out: &mut BTreeMap<EventId, MetricSeries>, counts: &HashMap<EventId, u64>) {
        for (e, s) in out.iter_mut() {
            let c = counts.get(e).copied().unwrap_or(0);
            s.n_vc[from..upto].fill(c);
        }
    }

    for r in &log.records {
        let t = r.tick().0 as usize;
        if t > filled_to {
            fill_coop(filled_to, t, &mut out, &coop_count);
            filled_to = t;
        }
        match *r {
            Record::Detection { t, vehicle, event } => {
                if detected.insert((t.0, vehicle, event)) {
                    out.get_mut(&event).expect("checked").n_vd[t.0 as usize] += 1;
                }
            }
            Record::Generated { t, packet } => {
                let s = out.get_mut(&packet.event).expect("checked");
                match packet.kind {
                    PacketKind::Clustering => s.cp_g[t.0 as usize] += 1,
                    PacketKind::Monitoring => s.mp_g[t.0 as usize] += 1,
                    PacketKind::Announcement => {}
                }
            }
            Record::Received { t, packet, .. } => {
                out.get_mut(&packet.event).expect("checked").mp_r[t.0 as usize] += 1;
            }
            Record::RoleChange { vehicle, event, roles, .. } => {
                let key = (vehicle, event);
                let was = cooperating.contains(&key);
                let is = roles.cooperates();
                if was != is {
                    let c = coop_count.entry(event).or_insert(0);
                    if is {
                        cooperating.insert(key);
                        *c += 1;
                    } else {
                        cooperating.remove(&key);
                        *c -= 1;
                    }
                }
            }
            _ => {}
        }
    }
    fill_coop(filled_to, n, &mut out, &coop_count);
    Ok(out)
}

/// Split of received monitoring packets into first receipts and redundant
/// copies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Redundancy {
    pub total: u64,
    /// First receipts (the count `S`).
    pub single: u64,
    pub redundant: u64,
    /// Redundant share `R`, absent when nothing was received.
    pub ratio: Option<f64>,
    /// Non-redundant share, `1 - R`.
    pub single_ratio: Option<f64>,
}

/// Earliest receipt of every packet; same-tick receipts go to the lowest
/// station id.
fn first_receipts(log: &SimLog) -> HashMap<PacketId, (Tick, StationId)> {
    let mut first: HashMap<PacketId, (Tick, StationId)> = HashMap::new();
    for r in &log.records {
        if let Record::Received { t, packet, station } = *r {
            first
                .entry(packet.id)
                .and_modify(|cur| *cur = (*cur).min((t, station)))
                .or_insert((t, station));
        }
    }
    first
}

/// The first receipt of a packet anywhere in the run is its single copy;
/// every later receipt, at any station, is redundant.
pub fn redundancy(log: &SimLog, event: EventId, window: TickRange) -> Redundancy {
    let mut first = first_receipts(log);
    let (mut total, mut single) = (0u64, 0u64);
    for r in &log.records {
        if let Record::Received { t, packet, station } = *r {
            if packet.event == event && window.contains(t) {
                total += 1;
                if first.get(&packet.id) == Some(&(t, station)) {
                    first.remove(&packet.id);
                    single += 1;
                }
            }
        }
    }
    let redundant = total - single;
    let (ratio, single_ratio) = if total > 0 {
        (Some(redundant as f64 / total as f64), Some(single as f64 / total as f64))
    } else {
        (None, None)
    };
    Redundancy { total, single, redundant, ratio, single_ratio }
}

/// Mean generation-to-receipt delay in seconds over every receipt in the
/// window (or over first receipts only, with `per_unique`). Absent when
/// nothing was received.
pub fn average_delay(log: &SimLog, event: EventId, window: TickRange, per_unique: bool) -> Option<f64> {
    let mut first = per_unique.then(|| first_receipts(log));
    let (mut sum, mut count) = (0u64, 0u64);
    for r in &log.records {
        if let Record::Received { t, packet, station } = *r {
            if packet.event != event || !window.contains(t) {
                continue;
            }
            if let Some(first) = &mut first {
                if first.get(&packet.id) != Some(&(t, station)) {
                    continue;
                }
                first.remove(&packet.id);
            }
            sum += t.since(packet.created_at);
            count += 1;
        }
    }
    (count > 0).then(|| sum as f64 * log.meta.tick_s / count as f64)
}

/// Generated packet counts by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Generated {
    pub announcement: u64,
    pub clustering: u64,
    pub monitoring: u64,
}

impl Generated {
    pub fn total(&self) -> u64 {
        self.announcement + self.clustering + self.monitoring
    }
}

pub fn generated(log: &SimLog, event: EventId, window: TickRange) -> Generated {
    let mut g = Generated::default();
    for r in &log.records {
        if let Record::Generated { t, packet } = r {
            if packet.event == event && window.contains(*t) {
                match packet.kind {
                    PacketKind::Announcement => g.announcement += 1,
                    PacketKind::Clustering => g.clustering += 1,
                    PacketKind::Monitoring => g.monitoring += 1,
                }
            }
        }
    }
    g
}

/// Clustering packets over all generated packets; absent when nothing was
/// generated.
pub fn clustering_overhead(log: &SimLog, event: EventId, window: TickRange) -> Option<f64> {
    let g = generated(log, event, window);
    (g.total() > 0).then(|| g.clustering as f64 / g.total() as f64)
}

/// Vehicle-ticks spent emitting clustering packets over vehicle-ticks in
/// the system. Absent when no vehicle was active.
pub fn grouped_vehicle_ratio(log: &SimLog, event: EventId, window: TickRange, literal: bool) -> Option<f64> {
    let mut emitters: HashSet<(Tick, VehicleId)> = HashSet::new();
    let mut denominator = 0u64;
    for r in &log.records {
        match *r {
            Record::Generated { t, packet }
                if packet.kind == PacketKind::Clustering && packet.event == event && window.contains(t) =>
            {
                emitters.insert((t, packet.origin));
            }
            Record::Population { t, active } if window.contains(t) => {
                let n = active as u64;
                denominator += if literal { n * (n + 1) / 2 } else { n };
            }
            _ => {}
        }
    }
    (denominator > 0).then(|| emitters.len() as f64 / denominator as f64)
}

/// Distinct groups whose first appearance falls in the window.
pub fn formed_groups(log: &SimLog, event: EventId, window: TickRange) -> u64 {
    let mut seen = HashSet::new();
    log.records
        .iter()
        .filter_map(|r| match *r {
            Record::GroupFormed { t, group, event: e, .. } if e == event && window.contains(t) => Some(group),
            _ => None,
        })
        .filter(|g| seen.insert(*g))
        .count() as u64
}

/// Fraction of the ticks in `lifetime` where `values` is positive.
pub fn positive_share(values: &[u64], lifetime: std::ops::Range<u64>) -> Option<f64> {
    let len = lifetime.end.saturating_sub(lifetime.start);
    if len == 0 {
        return None;
    }
    let hits = values[lifetime.start as usize..lifetime.end as usize]
        .iter()
        .filter(|v| **v > 0)
        .count();
    Some(hits as f64 / len as f64)
}

/// Interval aggregates for one event.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub event: EventId,
    pub event_name: String,
    pub generated: Generated,
    pub received: u64,
    pub redundancy: Redundancy,
    /// Seconds.
    pub avg_delay: Option<f64>,
    pub clustering_overhead: Option<f64>,
    pub grouped_ratio: Option<f64>,
    pub formed_groups: u64,
    /// Share of lifetime ticks with at least one detecting vehicle.
    pub monitored_share: Option<f64>,
    /// Share of lifetime ticks with at least one monitoring packet received.
    pub delivery_share: Option<f64>,
}

/// Whole-run summaries, one per event.
pub fn summarize(log: &SimLog, options: MetricsOptions) -> Result<Vec<MetricSummary>, MetricsError> {
    let all = series(log)?;
    let window = TickRange::whole(log);
    Ok(log
        .meta
        .events
        .iter()
        .map(|meta| {
            let s = &all[&meta.id];
            let lifetime = meta.lifetime(log.meta.ticks);
            let redundancy = redundancy(log, meta.id, window);
            MetricSummary {
                event: meta.id,
                event_name: meta.name.clone(),
                generated: generated(log, meta.id, window),
                received: redundancy.total,
                redundancy,
                avg_delay: average_delay(log, meta.id, window, options.per_unique_delay),
                clustering_overhead: clustering_overhead(log, meta.id, window),
                grouped_ratio: grouped_vehicle_ratio(log, meta.id, window, options.eq7_literal),
                formed_groups: formed_groups(log, meta.id, window),
                monitored_share: positive_share(&s.n_vd, lifetime.clone()),
                delivery_share: positive_share(&s.mp_r, lifetime),
            }
        })
        .collect())
}
