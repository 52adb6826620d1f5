//! Domain types shared by every subsystem of the simulator.

use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

/// Planar position in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        distance(*self, *other)
    }

    /// Linear interpolation, `frac` in `[0, 1]`.
    pub fn lerp(&self, other: &Position, frac: f64) -> Position {
        Position {
            x: self.x + (other.x - self.x) * frac,
            y: self.y + (other.y - self.y) * frac,
        }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Axis-aligned scenario bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    /// Slack applied to containment checks so interpolated positions on the
    /// boundary are not rejected over rounding.
    const EPS: f64 = 1e-6;

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.min_x - Self::EPS
            && p.x <= self.max_x + Self::EPS
            && p.y >= self.min_y - Self::EPS
            && p.y <= self.max_y + Self::EPS
    }

    pub fn is_valid(&self) -> bool {
        [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite())
            && self.max_x > self.min_x
            && self.max_y > self.min_y
    }
}

/// Discrete simulation time step index. Tick `k` is `k * tick_s` seconds
/// after simulation start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tick(pub u64);

impl Tick {
    pub fn seconds(self, tick_s: f64) -> f64 {
        self.0 as f64 * tick_s
    }

    pub fn since(self, earlier: Tick) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl std::ops::Add<u64> for Tick {
    type Output = Tick;

    fn add(self, rhs: u64) -> Tick {
        Tick(self.0 + rhs)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Converts seconds to a whole number of ticks, or `None` if `secs` is not a
/// multiple of `tick_s`.
pub fn ticks_exact(secs: f64, tick_s: f64) -> Option<u64> {
    if !(secs.is_finite() && secs >= 0.0 && tick_s > 0.0) {
        return None;
    }
    let ratio = secs / tick_s;
    let rounded = ratio.round();
    ((ratio - rounded).abs() <= 1e-6).then_some(rounded as u64)
}

/// Seconds rounded up to whole ticks.
pub fn ticks_ceil(secs: f64, tick_s: f64) -> u64 {
    ticks_exact(secs, tick_s).unwrap_or_else(|| (secs / tick_s).ceil().max(0.0) as u64)
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $inner:ty, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VehicleId, u32, "");
id_type!(EventId, u32, "");
id_type!(StationId, u32, "");
id_type!(
    /// Never reused within a run.
    PacketId,
    u64,
    ""
);
id_type!(
    /// Assigned exactly once when a group is created.
    GroupId,
    u64,
    ""
);

/// Instantaneous state of an active vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position: Position,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    /// Meters per second.
    pub speed: f64,
    pub active: bool,
}

/// Normalizes an angle into `[0, 2π)`.
pub fn normalize_heading(rad: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let h = rad.rem_euclid(tau);
    if h >= tau {
        0.0
    } else {
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fixed,
    Mobile,
}

/// A critical event with its lifetime and trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSpec {
    pub id: EventId,
    pub name: String,
    pub kind: EventKind,
    /// Time-ordered `(seconds, position)` waypoints covering the lifetime.
    pub trajectory: Vec<(f64, Position)>,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseStation {
    pub id: StationId,
    pub position: Position,
    pub range: f64,
}

bitflags! {
    /// Protocol roles. A vehicle may hold several at once; the empty set is
    /// the "none" role.
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
    pub struct Roles: u8 {
        const MONITOR = 0b001;
        const RELAY = 0b010;
        const GATEWAY = 0b100;
    }
}

impl Roles {
    /// A vehicle cooperates when it monitors or disseminates.
    pub fn cooperates(self) -> bool {
        !self.is_empty()
    }

    pub fn parse(s: &str) -> Option<Roles> {
        if s == "none" {
            return Some(Roles::empty());
        }
        let mut roles = Roles::empty();
        for part in s.split(',') {
            roles |= match part {
                "monitor" => Roles::MONITOR,
                "relay" => Roles::RELAY,
                "gateway" => Roles::GATEWAY,
                _ => return None,
            };
        }
        Some(roles)
    }
}

impl fmt::Display for Roles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = [
            (Roles::MONITOR, "monitor"),
            (Roles::RELAY, "relay"),
            (Roles::GATEWAY, "gateway"),
        ]
        .iter()
        .filter(|(r, _)| self.contains(*r))
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Announcement,
    Clustering,
    Monitoring,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Announcement => "announcement",
            PacketKind::Clustering => "clustering",
            PacketKind::Monitoring => "monitoring",
        }
    }

    pub fn parse(s: &str) -> Option<PacketKind> {
        match s {
            "announcement" => Some(PacketKind::Announcement),
            "clustering" => Some(PacketKind::Clustering),
            "monitoring" => Some(PacketKind::Monitoring),
            _ => None,
        }
    }
}

/// One unit of protocol traffic. Forwarded copies share the `id` and carry
/// an incremented `hop_count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub kind: PacketKind,
    pub event: EventId,
    pub origin: VehicleId,
    pub created_at: Tick,
    /// Maximum dissemination age in ticks; announcements only.
    pub t_max: Option<u64>,
    pub hop_count: u32,
    pub payload_size: u32,
}

impl Packet {
    pub fn forwarded(&self) -> Packet {
        Packet {
            hop_count: self.hop_count + 1,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let o = Position::new(0.0, 0.0);
        assert_eq!(distance(o, o), 0.0);
        assert_eq!(distance(o, Position::new(3.0, 4.0)), 5.0);
        let fixed = Position::new(7682.0, 5878.20);
        assert_eq!(distance(fixed, fixed), 0.0);
    }

    #[test]
    fn roles_round_trip_text() {
        for bits in 0..8u8 {
            let r = Roles::from_bits_truncate(bits);
            assert_eq!(Roles::parse(&r.to_string()), Some(r));
        }
        assert_eq!((Roles::MONITOR | Roles::GATEWAY).to_string(), "monitor,gateway");
        assert_eq!(Roles::parse("boss"), None);
    }

    #[test]
    fn tick_alignment() {
        assert_eq!(ticks_exact(360.0, 0.1), Some(3600));
        assert_eq!(ticks_exact(0.3, 0.1), Some(3));
        assert_eq!(ticks_exact(0.25, 0.1), None);
        assert_eq!(ticks_ceil(0.25, 0.1), 3);
    }

    #[test]
    fn heading_normalization() {
        use std::f64::consts::{PI, TAU};
        assert!((normalize_heading(-PI / 2.0) - 1.5 * PI).abs() < 1e-12);
        assert_eq!(normalize_heading(TAU), 0.0);
        assert!(normalize_heading(-1e-18) < TAU);
    }

    proptest::proptest! {
        #[test]
        fn distance_is_a_metric(ax in -1e4f64..1e4, ay in -1e4f64..1e4, bx in -1e4f64..1e4, by in -1e4f64..1e4) {
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            proptest::prop_assert_eq!(distance(a, b), distance(b, a));
            proptest::prop_assert!(distance(a, b) >= 0.0);
            proptest::prop_assert_eq!(distance(a, b) == 0.0, a == b);
        }
    }
}
