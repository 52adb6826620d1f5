//! The simulation log: an append-only record of everything the protocol did,
//! and its line-oriented text form.
//!
//! ```text
//! # simlog v1
//! # tick_s 0.1
//! # ticks 3600
//! # event <id> <name> <start_tick> <end_tick>
//! <t> population <active_vehicles>
//! <t> detection <vehicle> <event>
//! <t> generated <packet>
//! <t> forwarded <packet> <from_vehicle> <to: v<id>|b<id>>
//! <t> received <packet> <station>
//! <t> dropped <packet> <at_vehicle> <cause>
//! <t> group_formed <group> <event> <leader>
//! <t> group_joined <group> <event> <vehicle>
//! <t> group_left <group> <event> <vehicle> <reason>
//! <t> group_dissolved <group> <event>
//! <t> role <vehicle> <event> <none|monitor,relay,gateway>
//! ```
//!
//! `<packet>` expands to `<id> <kind> <event> <origin> <created_at> <hops>
//! <bytes> <t_max|->`. Times are seconds printed at tick resolution.

use std::io::BufRead;

use thiserror::Error;

use crate::clustering::LeaveReason;
use crate::model::{EventId, GroupId, Packet, PacketId, PacketKind, Roles, StationId, Tick, VehicleId};
use crate::radio::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropCause {
    /// Lost on the link.
    Loss,
    /// Announcement older than its maximum dissemination time.
    ZoneExpired,
    /// No group member closer to a gateway.
    NoRoute,
    /// Receiver left the scenario while the packet was in flight.
    ReceiverGone,
}

impl DropCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::Loss => "loss",
            DropCause::ZoneExpired => "az_expired",
            DropCause::NoRoute => "no_route",
            DropCause::ReceiverGone => "receiver_gone",
        }
    }

    pub fn parse(s: &str) -> Option<DropCause> {
        match s {
            "loss" => Some(DropCause::Loss),
            "az_expired" => Some(DropCause::ZoneExpired),
            "no_route" => Some(DropCause::NoRoute),
            "receiver_gone" => Some(DropCause::ReceiverGone),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Record {
    Population { t: Tick, active: u32 },
    Detection { t: Tick, vehicle: VehicleId, event: EventId },
    Generated { t: Tick, packet: Packet },
    Forwarded { t: Tick, packet: Packet, from: VehicleId, to: Endpoint },
    Received { t: Tick, packet: Packet, station: StationId },
    Dropped { t: Tick, packet: Packet, at: VehicleId, cause: DropCause },
    GroupFormed { t: Tick, group: GroupId, event: EventId, leader: VehicleId },
    GroupJoined { t: Tick, group: GroupId, event: EventId, vehicle: VehicleId },
    GroupLeft { t: Tick, group: GroupId, event: EventId, vehicle: VehicleId, reason: LeaveReason },
    GroupDissolved { t: Tick, group: GroupId, event: EventId },
    RoleChange { t: Tick, vehicle: VehicleId, event: EventId, roles: Roles },
}

impl Record {
    pub fn tick(&self) -> Tick {
        match *self {
            Record::Population { t, .. }
            | Record::Detection { t, .. }
            | Record::Generated { t, .. }
            | Record::Forwarded { t, .. }
            | Record::Received { t, .. }
            | Record::Dropped { t, .. }
            | Record::GroupFormed { t, .. }
            | Record::GroupJoined { t, .. }
            | Record::GroupLeft { t, .. }
            | Record::GroupDissolved { t, .. }
            | Record::RoleChange { t, .. } => t,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Record::Population { .. } => "population",
            Record::Detection { .. } => "detection",
            Record::Generated { .. } => "generated",
            Record::Forwarded { .. } => "forwarded",
            Record::Received { .. } => "received",
            Record::Dropped { .. } => "dropped",
            Record::GroupFormed { .. } => "group_formed",
            Record::GroupJoined { .. } => "group_joined",
            Record::GroupLeft { .. } => "group_left",
            Record::GroupDissolved { .. } => "group_dissolved",
            Record::RoleChange { .. } => "role",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventMeta {
    pub id: EventId,
    pub name: String,
    pub start: Tick,
    pub end: Tick,
}

impl EventMeta {
    /// Lifetime ticks that fall inside a run of `ticks` steps.
    pub fn lifetime(&self, ticks: u64) -> std::ops::Range<u64> {
        self.start.0.min(ticks)..(self.end.0 + 1).min(ticks)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogMeta {
    pub tick_s: f64,
    /// Number of simulated ticks, `0..ticks`.
    pub ticks: u64,
    pub events: Vec<EventMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    pub meta: LogMeta,
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading log: {0}")]
    Io(#[from] std::io::Error),
}

/// Decimal places needed to print multiples of `tick_s` exactly.
pub fn time_decimals(tick_s: f64) -> usize {
    (0..=9)
        .find(|&d| {
            let scaled = tick_s * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() < 1e-9
        })
        .unwrap_or(9)
}

impl SimLog {
    pub fn new(meta: LogMeta) -> Self {
        Self { meta, records: Vec::new() }
    }

    pub fn push(&mut self, record: Record) {
        debug_assert!(self.records.last().is_none_or(|r| r.tick() <= record.tick()));
        self.records.push(record);
    }

    pub fn event(&self, id: EventId) -> Option<&EventMeta> {
        self.meta.events.iter().find(|e| e.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out).expect("writing to a String");
        out
    }

    pub fn write_text<W: std::fmt::Write>(&self, out: &mut W) -> std::fmt::Result {
        let dec = time_decimals(self.meta.tick_s);
        let tick_s = self.meta.tick_s;
        let time = |t: Tick| format!("{:.*}", dec, t.seconds(tick_s));
        let pkt = |p: &Packet| {
            format!(
                "{} {} {} {} {} {} {} {}",
                p.id,
                p.kind.as_str(),
                p.event,
                p.origin,
                time(p.created_at),
                p.hop_count,
                p.payload_size,
                p.t_max.map_or_else(|| "-".to_string(), |m| time(Tick(m)))
            )
        };
        writeln!(out, "# simlog v1")?;
        writeln!(out, "# tick_s {}", self.meta.tick_s)?;
        writeln!(out, "# ticks {}", self.meta.ticks)?;
        for e in &self.meta.events {
            writeln!(out, "# event {} {} {} {}", e.id, e.name, e.start, e.end)?;
        }
        for r in &self.records {
            write!(out, "{} {}", time(r.tick()), r.kind())?;
            match r {
                Record::Population { active, .. } => writeln!(out, " {active}")?,
                Record::Detection { vehicle, event, .. } => writeln!(out, " {vehicle} {event}")?,
                Record::Generated { packet, .. } => writeln!(out, " {}", pkt(packet))?,
                Record::Forwarded { packet, from, to, .. } => writeln!(out, " {} {from} {to}", pkt(packet))?,
                Record::Received { packet, station, .. } => writeln!(out, " {} {station}", pkt(packet))?,
                Record::Dropped { packet, at, cause, .. } => writeln!(out, " {} {at} {}", pkt(packet), cause.as_str())?,
                Record::GroupFormed { group, event, leader, .. } => writeln!(out, " {group} {event} {leader}")?,
                Record::GroupJoined { group, event, vehicle, .. } => writeln!(out, " {group} {event} {vehicle}")?,
                Record::GroupLeft { group, event, vehicle, reason, .. } => {
                    writeln!(out, " {group} {event} {vehicle} {}", reason.as_str())?
                }
                Record::GroupDissolved { group, event, .. } => writeln!(out, " {group} {event}")?,
                Record::RoleChange { vehicle, event, roles, .. } => writeln!(out, " {vehicle} {event} {roles}")?,
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<SimLog, LogError> {
        Self::read(text.as_bytes())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<SimLog, LogError> {
        let mut tick_s: Option<f64> = None;
        let mut ticks: Option<u64> = None;
        let mut events = Vec::new();
        let mut records = Vec::new();
        let mut last = Tick(0);

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let bad = |message: String| LogError::Malformed { line: line_no, message };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields[0] == "#" {
                match fields.get(1).copied() {
                    Some("tick_s") => {
                        let v = fields.get(2).and_then(|s| s.parse::<f64>().ok()).filter(|v| *v > 0.0);
                        tick_s = Some(v.ok_or_else(|| bad("invalid tick_s".into()))?);
                    }
                    Some("ticks") => {
                        ticks = Some(fields.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("invalid ticks".into()))?);
                    }
                    Some("event") => {
                        if fields.len() != 6 {
                            return Err(bad("event header needs id, name, start and end".into()));
                        }
                        let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("invalid number '{s}'")));
                        events.push(EventMeta {
                            id: EventId(num(fields[2])? as u32),
                            name: fields[3].to_string(),
                            start: Tick(num(fields[4])?),
                            end: Tick(num(fields[5])?),
                        });
                    }
                    _ => {}
                }
                continue;
            }
            let tick_s = tick_s.ok_or_else(|| bad("record before tick_s header".into()))?;
            let mut parser = FieldParser { fields: &fields, pos: 0, line: line_no, tick_s };
            let record = parser.record()?;
            if !parser.done() {
                return Err(bad(format!("trailing fields in {} record", record.kind())));
            }
            if record.tick() < last {
                return Err(bad("timestamps must be non-decreasing".into()));
            }
            last = record.tick();
            records.push(record);
        }
        let tick_s = tick_s.ok_or(LogError::Malformed { line: 0, message: "missing tick_s header".into() })?;
        let ticks = ticks.ok_or(LogError::Malformed { line: 0, message: "missing ticks header".into() })?;
        Ok(SimLog { meta: LogMeta { tick_s, ticks, events }, records })
    }
}

struct FieldParser<'a> {
    fields: &'a [&'a str],
    pos: usize,
    line: usize,
    tick_s: f64,
}

impl<'a> FieldParser<'a> {
    fn err(&self, message: String) -> LogError {
        LogError::Malformed { line: self.line, message }
    }

    fn done(&self) -> bool {
        self.pos == self.fields.len()
    }

    fn next(&mut self, what: &str) -> Result<&'a str, LogError> {
        let f = self.fields.get(self.pos).copied().ok_or_else(|| self.err(format!("missing {what}")))?;
        self.pos += 1;
        Ok(f)
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, LogError> {
        let f = self.next(what)?;
        f.parse().map_err(|_| self.err(format!("invalid {what} '{f}'")))
    }

    fn time(&mut self, what: &str) -> Result<Tick, LogError> {
        let secs: f64 = self.num(what)?;
        crate::model::ticks_exact(secs, self.tick_s)
            .map(Tick)
            .ok_or_else(|| self.err(format!("{what} {secs} is not a non-negative multiple of the tick")))
    }

    fn packet(&mut self) -> Result<Packet, LogError> {
        let id = PacketId(self.num("packet id")?);
        let kind_s = self.next("packet kind")?;
        let kind = PacketKind::parse(kind_s).ok_or_else(|| self.err(format!("unknown packet kind '{kind_s}'")))?;
        let event = EventId(self.num("event")?);
        let origin = VehicleId(self.num("origin")?);
        let created_at = self.time("created_at")?;
        let hop_count = self.num("hop count")?;
        let payload_size = self.num("payload size")?;
        let t_max = match self.next("t_max")? {
            "-" => None,
            _ => {
                self.pos -= 1;
                Some(self.time("t_max")?.0)
            }
        };
        if t_max.is_some() != (kind == PacketKind::Announcement) {
            return Err(self.err("t_max must be present exactly for announcements".into()));
        }
        Ok(Packet { id, kind, event, origin, created_at, t_max, hop_count, payload_size })
    }

    fn record(&mut self) -> Result<Record, LogError> {
        let t = self.time("time")?;
        let kind = self.next("record kind")?;
        Ok(match kind {
            "population" => Record::Population { t, active: self.num("count")? },
            "detection" => Record::Detection { t, vehicle: VehicleId(self.num("vehicle")?), event: EventId(self.num("event")?) },
            "generated" => Record::Generated { t, packet: self.packet()? },
            "forwarded" => {
                let packet = self.packet()?;
                let from = VehicleId(self.num("sender")?);
                let to_s = self.next("receiver")?;
                let to = Endpoint::parse(to_s).ok_or_else(|| self.err(format!("invalid receiver '{to_s}'")))?;
                Record::Forwarded { t, packet, from, to }
            }
            "received" => {
                let packet = self.packet()?;
                Record::Received { t, packet, station: StationId(self.num("station")?) }
            }
            "dropped" => {
                let packet = self.packet()?;
                let at = VehicleId(self.num("vehicle")?);
                let c = self.next("cause")?;
                let cause = DropCause::parse(c).ok_or_else(|| self.err(format!("unknown drop cause '{c}'")))?;
                Record::Dropped { t, packet, at, cause }
            }
            "group_formed" => Record::GroupFormed {
                t,
                group: GroupId(self.num("group")?),
                event: EventId(self.num("event")?),
                leader: VehicleId(self.num("leader")?),
            },
            "group_joined" => Record::GroupJoined {
                t,
                group: GroupId(self.num("group")?),
                event: EventId(self.num("event")?),
                vehicle: VehicleId(self.num("vehicle")?),
            },
            "group_left" => {
                let group = GroupId(self.num("group")?);
                let event = EventId(self.num("event")?);
                let vehicle = VehicleId(self.num("vehicle")?);
                let r = self.next("reason")?;
                let reason = LeaveReason::parse(r).ok_or_else(|| self.err(format!("unknown leave reason '{r}'")))?;
                Record::GroupLeft { t, group, event, vehicle, reason }
            }
            "group_dissolved" => Record::GroupDissolved { t, group: GroupId(self.num("group")?), event: EventId(self.num("event")?) },
            "role" => {
                let vehicle = VehicleId(self.num("vehicle")?);
                let event = EventId(self.num("event")?);
                let r = self.next("roles")?;
                let roles = Roles::parse(r).ok_or_else(|| self.err(format!("invalid roles '{r}'")))?;
                Record::RoleChange { t, vehicle, event, roles }
            }
            other => return Err(self.err(format!("unknown record kind '{other}'"))),
        })
    }
}
