//! Random logs and brute-force metric oracles shared by the test suites.

#![allow(dead_code)]

use minuet::clustering::LeaveReason;
use minuet::model::{EventId, GroupId, Packet, PacketId, PacketKind, Roles, StationId, Tick, VehicleId};
use minuet::protocol::{EventMeta, LogMeta, Record, SimLog};
use minuet::radio::Endpoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A structurally valid log with every record kind, built from `seed`.
pub fn random_log(seed: u64) -> SimLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ticks = rng.random_range(20..120u64);
    let n_events = rng.random_range(1..=2u32);
    let events = (0..n_events)
        .map(|e| {
            let start = rng.random_range(0..ticks / 2);
            EventMeta { id: EventId(e), name: format!("EV{}", e + 1), start: Tick(start), end: Tick(rng.random_range(start..ticks)) }
        })
        .collect();
    let meta = LogMeta { tick_s: 0.1, ticks, events };
    let mut per_tick: Vec<Vec<Record>> = vec![Vec::new(); ticks as usize];
    let mut next_id = 0u64;
    let vehicles = rng.random_range(1..12u32);

    for k in 0..ticks {
        let t = Tick(k);
        per_tick[k as usize].push(Record::Population { t, active: rng.random_range(0..=vehicles) });
        for e in 0..n_events {
            let event = EventId(e);
            for _ in 0..rng.random_range(0..3) {
                let vehicle = VehicleId(rng.random_range(0..vehicles));
                per_tick[k as usize].push(Record::Detection { t, vehicle, event });
            }
            for _ in 0..rng.random_range(0..4) {
                let kind = match rng.random_range(0..3) {
                    0 => PacketKind::Announcement,
                    1 => PacketKind::Clustering,
                    _ => PacketKind::Monitoring,
                };
                let packet = Packet {
                    id: PacketId(next_id),
                    kind,
                    event,
                    origin: VehicleId(rng.random_range(0..vehicles)),
                    created_at: t,
                    t_max: (kind == PacketKind::Announcement).then_some(15),
                    hop_count: 0,
                    payload_size: 64,
                };
                next_id += 1;
                per_tick[k as usize].push(Record::Generated { t, packet });
                if kind != PacketKind::Monitoring {
                    continue;
                }
                for _ in 0..rng.random_range(0..4) {
                    let at = k + rng.random_range(1..4);
                    if at >= ticks {
                        continue;
                    }
                    let copy = Packet { hop_count: rng.random_range(1..4), ..packet };
                    let station = StationId(rng.random_range(0..3));
                    per_tick[at as usize].push(Record::Forwarded {
                        t: Tick(at - 1),
                        packet: copy,
                        from: copy.origin,
                        to: Endpoint::Station(station),
                    });
                    per_tick[at as usize].push(Record::Received { t: Tick(at), packet: copy, station });
                }
            }
            if rng.random_bool(0.1) {
                let group = GroupId(rng.random_range(0..6));
                let leader = VehicleId(rng.random_range(0..vehicles));
                per_tick[k as usize].push(Record::GroupFormed { t, group, event, leader });
                per_tick[k as usize].push(Record::GroupJoined { t, group, event, vehicle: leader });
            }
            if rng.random_bool(0.05) {
                let group = GroupId(rng.random_range(0..6));
                let vehicle = VehicleId(rng.random_range(0..vehicles));
                per_tick[k as usize].push(Record::GroupLeft { t, group, event, vehicle, reason: LeaveReason::OutOfRange });
                per_tick[k as usize].push(Record::GroupDissolved { t, group, event });
            }
            if rng.random_bool(0.3) {
                let roles = Roles::from_bits_truncate(rng.random_range(0..8));
                let vehicle = VehicleId(rng.random_range(0..vehicles));
                per_tick[k as usize].push(Record::RoleChange { t, vehicle, event, roles });
            }
        }
    }
    // forwarded records were parked on their arrival tick
    let mut log = SimLog::new(meta);
    for (k, mut recs) in per_tick.into_iter().enumerate() {
        for r in &mut recs {
            if let Record::Forwarded { t, .. } = r {
                *t = Tick(k as u64);
            }
        }
        for r in recs {
            log.push(r);
        }
    }
    log
}

/// Every window worth checking in a short log: the whole run, the event
/// lifetime and a few arbitrary spans.
pub fn windows(log: &SimLog, seed: u64) -> Vec<(u64, u64)> {
    let n = log.meta.ticks;
    let mut out = vec![(0, n), (n / 3, n), (0, n / 2), (seed % n, n)];
    for e in &log.meta.events {
        let l = e.lifetime(n);
        out.push((l.start, l.end));
    }
    out
}

fn receipts(log: &SimLog) -> Vec<(u64, u32, u64, u32, u64)> {
    // (tick, station, packet, event, created)
    log.records
        .iter()
        .filter_map(|r| match *r {
            Record::Received { t, packet, station } => Some((t.0, station.0, packet.id.0, packet.event.0, packet.created_at.0)),
            _ => None,
        })
        .collect()
}

/// Earliest `(tick, station, created)` receipt of every packet of `event`.
fn firsts(all: &[(u64, u32, u64, u32, u64)], event: u32) -> Vec<(u64, u32, u64)> {
    let mut ids: Vec<u64> = all.iter().filter(|r| r.3 == event).map(|r| r.2).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.iter()
        .map(|&p| {
            let (t, s, _, _, c) = *all.iter().filter(|r| r.2 == p).min_by_key(|r| (r.0, r.1)).expect("received");
            (t, s, c)
        })
        .collect()
}

/// `(total, single)`: every receipt in the window counts towards the total;
/// a packet contributes one single copy when its earliest receipt lies in
/// the window.
pub fn redundancy(log: &SimLog, event: u32, window: (u64, u64)) -> (u64, u64) {
    let all = receipts(log);
    let inside = |t: u64| t >= window.0 && t < window.1;
    let total = all.iter().filter(|r| r.3 == event && inside(r.0)).count() as u64;
    let single = firsts(&all, event).iter().filter(|f| inside(f.0)).count() as u64;
    (total, single)
}

pub fn average_delay(log: &SimLog, event: u32, window: (u64, u64), per_unique: bool) -> Option<f64> {
    let all = receipts(log);
    let inside = |t: u64| t >= window.0 && t < window.1;
    let delays: Vec<f64> = if per_unique {
        firsts(&all, event).iter().filter(|f| inside(f.0)).map(|f| (f.0 - f.2) as f64).collect()
    } else {
        all.iter().filter(|r| r.3 == event && inside(r.0)).map(|r| (r.0 - r.4) as f64).collect()
    };
    (!delays.is_empty()).then(|| delays.iter().sum::<f64>() * log.meta.tick_s / delays.len() as f64)
}

fn generated_kinds(log: &SimLog, event: u32, window: (u64, u64)) -> Vec<(u64, PacketKind, u32)> {
    log.records
        .iter()
        .filter_map(|r| match *r {
            Record::Generated { t, packet } if packet.event.0 == event && t.0 >= window.0 && t.0 < window.1 => {
                Some((t.0, packet.kind, packet.origin.0))
            }
            _ => None,
        })
        .collect()
}

pub fn clustering_overhead(log: &SimLog, event: u32, window: (u64, u64)) -> Option<f64> {
    let g = generated_kinds(log, event, window);
    let c = g.iter().filter(|x| x.1 == PacketKind::Clustering).count();
    (!g.is_empty()).then(|| c as f64 / g.len() as f64)
}

pub fn grouped_ratio(log: &SimLog, event: u32, window: (u64, u64), literal: bool) -> Option<f64> {
    let mut emitters: Vec<(u64, u32)> = generated_kinds(log, event, window)
        .into_iter()
        .filter(|x| x.1 == PacketKind::Clustering)
        .map(|x| (x.0, x.2))
        .collect();
    emitters.sort_unstable();
    emitters.dedup();
    let mut den = 0u64;
    for r in &log.records {
        if let Record::Population { t, active } = *r {
            if t.0 >= window.0 && t.0 < window.1 {
                den += if literal { (1..=active as u64).sum::<u64>() } else { active as u64 };
            }
        }
    }
    (den > 0).then(|| emitters.len() as f64 / den as f64)
}

pub fn formed_groups(log: &SimLog, event: u32, window: (u64, u64)) -> u64 {
    let mut ids: Vec<u64> = log
        .records
        .iter()
        .filter_map(|r| match *r {
            Record::GroupFormed { t, group, event: e, .. } if e.0 == event && t.0 >= window.0 && t.0 < window.1 => {
                Some(group.0)
            }
            _ => None,
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len() as u64
}

/// Per-tick `(n_vd, n_vc, cp_g, mp_g, mp_r)` by scanning the whole log once
/// per tick.
pub fn series_at(log: &SimLog, event: u32, k: u64) -> [u64; 5] {
    let mut detectors: Vec<u32> = Vec::new();
    let (mut cp, mut mp, mut rx) = (0, 0, 0);
    let mut latest: std::collections::BTreeMap<u32, Roles> = Default::default();
    for r in &log.records {
        match *r {
            Record::Detection { t, vehicle, event: e } if t.0 == k && e.0 == event => detectors.push(vehicle.0),
            Record::Generated { t, packet } if t.0 == k && packet.event.0 == event => match packet.kind {
                PacketKind::Clustering => cp += 1,
                PacketKind::Monitoring => mp += 1,
                PacketKind::Announcement => {}
            },
            Record::Received { t, packet, .. } if t.0 == k && packet.event.0 == event => rx += 1,
            Record::RoleChange { t, vehicle, event: e, roles } if t.0 <= k && e.0 == event => {
                latest.insert(vehicle.0, roles);
            }
            _ => {}
        }
    }
    detectors.sort_unstable();
    detectors.dedup();
    let coop = latest.values().filter(|r| !r.is_empty()).count() as u64;
    [detectors.len() as u64, coop, cp, mp, rx]
}

pub fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    }
}
