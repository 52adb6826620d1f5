//! Synthetic traffic on a Manhattan grid of roads.
//!
//! Every road carries one single-lane flow per direction. Vehicles arrive by
//! a Poisson process, pick a desired speed uniformly at random and drive
//! straight across the area. Overtaking is not possible: a vehicle that
//! catches up with a slower one (or with a mobile event travelling along the
//! same lane) follows it at `headway_m`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{event_position_at, VehicleTrace};
use crate::mobility::TraceSample;
use crate::model::{normalize_heading, Bounds, EventKind, EventSpec, Position, VehicleId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFlows {
    /// Road spacing in both directions.
    pub block_m: f64,
    /// Poisson arrival rate per road and direction, vehicles per second.
    pub arrival_rate_vps: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Bumper-to-bumper following distance.
    #[serde(default = "GridFlows::default_headway")]
    pub headway_m: f64,
    /// Sampling step of the generated traces.
    #[serde(default = "GridFlows::default_sample")]
    pub sample_s: f64,
}

impl GridFlows {
    fn default_headway() -> f64 {
        8.0
    }

    fn default_sample() -> f64 {
        1.0
    }
}

/// A directed lane along one road.
#[derive(Clone, Copy, Debug)]
struct Lane {
    origin: Position,
    dir: (f64, f64),
    length: f64,
}

impl Lane {
    fn at(&self, s: f64) -> Position {
        Position::new(self.origin.x + self.dir.0 * s, self.origin.y + self.dir.1 * s)
    }

    /// Longitudinal coordinate of `p` if it lies on the lane.
    fn project(&self, p: Position) -> Option<f64> {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        let lateral = dx * self.dir.1 - dy * self.dir.0;
        let s = dx * self.dir.0 + dy * self.dir.1;
        (lateral.abs() < 0.5 && s >= 0.0 && s <= self.length).then_some(s)
    }

    fn heading(&self) -> f64 {
        normalize_heading(self.dir.1.atan2(self.dir.0))
    }
}

fn lanes(bounds: &Bounds, block: f64) -> Vec<Lane> {
    let mut out = Vec::new();
    let h_roads = (bounds.height() / block + 1e-9).floor() as usize;
    for k in 0..=h_roads {
        let y = bounds.min_y + k as f64 * block;
        let len = bounds.width();
        out.push(Lane { origin: Position::new(bounds.min_x, y), dir: (1.0, 0.0), length: len });
        out.push(Lane { origin: Position::new(bounds.max_x, y), dir: (-1.0, 0.0), length: len });
    }
    let v_roads = (bounds.width() / block + 1e-9).floor() as usize;
    for k in 0..=v_roads {
        let x = bounds.min_x + k as f64 * block;
        let len = bounds.height();
        out.push(Lane { origin: Position::new(x, bounds.min_y), dir: (0.0, 1.0), length: len });
        out.push(Lane { origin: Position::new(x, bounds.max_y), dir: (0.0, -1.0), length: len });
    }
    out
}

struct Car {
    desired: f64,
    s: f64,
    samples: Vec<(f64, f64)>,
}

/// Position of a mobile event on `lane` at `t`, if the event currently
/// travels along the lane in its direction.
fn obstacle(lane: &Lane, event: &EventSpec, t: f64, step: f64) -> Option<f64> {
    let p = event_position_at(event, t)?;
    let s = lane.project(p)?;
    let ahead = event_position_at(event, (t + step).min(event.t_end)).unwrap_or(p);
    let behind = event_position_at(event, (t - step).max(event.t_start)).unwrap_or(p);
    let motion = if ahead != p {
        (ahead.x - p.x, ahead.y - p.y)
    } else {
        (p.x - behind.x, p.y - behind.y)
    };
    (motion.0 * lane.dir.0 + motion.1 * lane.dir.1 > 0.0).then_some(s)
}

fn simulate_lane<R: Rng + ?Sized>(
    lane: &Lane,
    params: &GridFlows,
    duration: f64,
    events: &[&EventSpec],
    rng: &mut R,
) -> Vec<Vec<(f64, f64)>> {
    let step = params.sample_s;
    let warmup = (lane.length / params.speed_min_mps / step).ceil() * step;
    let arrival_gap = Exp::new(params.arrival_rate_vps).expect("positive arrival rate");

    let mut pending: std::collections::VecDeque<(f64, f64)> = Default::default();
    let mut t_arrival = -warmup;
    loop {
        t_arrival += arrival_gap.sample(rng);
        if t_arrival > duration {
            break;
        }
        let desired = rng.random_range(params.speed_min_mps..=params.speed_max_mps);
        pending.push_back((t_arrival, desired));
    }

    let mut on_road: Vec<Car> = Vec::new();
    let mut finished: Vec<Vec<(f64, f64)>> = Vec::new();
    let steps = ((duration + warmup) / step).ceil() as usize + 1;
    let mut prev_obstacles: Vec<Option<f64>> = events.iter().map(|_| None).collect();

    for k in 0..=steps {
        let t = -warmup + k as f64 * step;
        let obstacles: Vec<Option<f64>> =
            events.iter().map(|ev| obstacle(lane, ev, t, step)).collect();

        if k > 0 {
            let mut leader = f64::INFINITY;
            let mut i = 0;
            while i < on_road.len() {
                let car = &mut on_road[i];
                let old = car.s;
                let mut limit = leader;
                for (now, before) in obstacles.iter().zip(&prev_obstacles) {
                    if let Some(se) = now {
                        let was_ahead = before.map_or(*se > old, |b| b > old);
                        if was_ahead {
                            limit = limit.min(*se);
                        }
                    }
                }
                let new_s = old.max((old + car.desired * step).min(limit - params.headway_m));
                if new_s >= lane.length {
                    let v = (new_s - old) / step;
                    let t_cross = t - step + (lane.length - old) / v;
                    car.samples.push((t_cross, lane.length));
                    finished.push(std::mem::take(&mut car.samples));
                    on_road.remove(i);
                    leader = f64::INFINITY;
                    continue;
                }
                car.s = new_s;
                car.samples.push((t, new_s));
                leader = new_s;
                i += 1;
            }
        }

        while let Some(&(arrival, desired)) = pending.front() {
            if arrival > t {
                break;
            }
            let clear = on_road.last().is_none_or(|c| c.s >= params.headway_m)
                && obstacles.iter().flatten().all(|se| *se >= params.headway_m);
            if !clear {
                break;
            }
            pending.pop_front();
            on_road.push(Car { desired, s: 0.0, samples: vec![(t, 0.0)] });
        }
        prev_obstacles = obstacles;
    }
    finished.extend(on_road.into_iter().map(|c| c.samples));
    finished
}

/// Clips `(t, s)` samples to `[0, duration]`, interpolating the boundary
/// samples. Returns `None` when the vehicle is never present in the window.
fn clip(samples: &[(f64, f64)], duration: f64) -> Option<Vec<(f64, f64)>> {
    let interp = |a: (f64, f64), b: (f64, f64), t: f64| {
        let frac = (t - a.0) / (b.0 - a.0);
        (t, a.1 + (b.1 - a.1) * frac)
    };
    let mut out = Vec::new();
    for (i, &cur) in samples.iter().enumerate() {
        if i > 0 {
            let prev = samples[i - 1];
            if prev.0 < 0.0 && cur.0 > 0.0 {
                out.push(interp(prev, cur, 0.0));
            }
            if prev.0 < duration && cur.0 > duration {
                out.push(interp(prev, cur, duration));
            }
        }
        if (0.0..=duration).contains(&cur.0) {
            out.push(cur);
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Drops interior samples that lie on a constant-speed segment.
fn compress(samples: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if samples.len() <= 2 {
        return samples;
    }
    let mut out = vec![samples[0]];
    for w in 1..samples.len() - 1 {
        let a = *out.last().unwrap();
        let b = samples[w];
        let c = samples[w + 1];
        let v_ab = (b.1 - a.1) / (b.0 - a.0);
        let v_bc = (c.1 - b.1) / (c.0 - b.0);
        if (v_ab - v_bc).abs() > 1e-9 {
            out.push(b);
        }
    }
    out.push(*samples.last().unwrap());
    out
}

/// Generates vehicle traces for `[0, duration]`. Lanes start filled: arrivals
/// begin one lane-traversal before time zero.
pub fn generate<R: Rng + ?Sized>(
    params: &GridFlows,
    bounds: &Bounds,
    duration: f64,
    events: &[EventSpec],
    rng: &mut R,
) -> Vec<VehicleTrace> {
    let mobile: Vec<&EventSpec> = events.iter().filter(|e| e.kind == EventKind::Mobile).collect();
    let mut raw: Vec<(f64, usize, usize, Vec<(f64, f64)>)> = Vec::new();
    let lanes = lanes(bounds, params.block_m);
    for (lane_idx, lane) in lanes.iter().enumerate() {
        for (n, samples) in simulate_lane(lane, params, duration, &mobile, rng)
            .into_iter()
            .enumerate()
        {
            if let Some(clipped) = clip(&samples, duration) {
                let clipped = compress(clipped);
                raw.push((clipped[0].0, lane_idx, n, clipped));
            }
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    raw.into_iter()
        .enumerate()
        .map(|(i, (_, lane_idx, n, samples))| {
            let lane = &lanes[lane_idx];
            let heading = lane.heading();
            let trace_samples = samples
                .iter()
                .enumerate()
                .map(|(j, &(t, s))| {
                    let speed = match samples.get(j + 1) {
                        Some(&(t2, s2)) => (s2 - s) / (t2 - t),
                        None if j > 0 => {
                            let (t0, s0) = samples[j - 1];
                            (s - s0) / (t - t0)
                        }
                        None => 0.0,
                    };
                    TraceSample { t, position: lane.at(s), speed: speed.max(0.0), heading }
                })
                .collect();
            VehicleTrace {
                id: VehicleId(i as u32),
                label: format!("l{lane_idx}_{n}"),
                samples: trace_samples,
            }
        })
        .collect()
}
