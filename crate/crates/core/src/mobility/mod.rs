//! Vehicle traces, event trajectories and the active-vehicle set.

mod generator;
mod trace;

pub use generator::{generate, GridFlows};
pub use trace::{load_traces, write_traces, TraceError, TraceSample, VehicleTrace};

use crate::model::{BaseStation, Bounds, EventKind, EventSpec, Position, VehicleState};

/// Everything that moves or stands still in a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub traces: Vec<VehicleTrace>,
    pub events: Vec<EventSpec>,
    pub base_stations: Vec<BaseStation>,
    pub bounds: Bounds,
    /// Seconds.
    pub duration: f64,
}

/// States of all vehicles whose traces cover `t`, ordered by id.
pub fn active_vehicles(scenario: &Scenario, t: f64) -> Vec<VehicleState> {
    let mut out: Vec<VehicleState> = scenario
        .traces
        .iter()
        .filter_map(|tr| tr.state_at(t))
        .collect();
    out.sort_by_key(|v| v.id);
    out
}

/// Position of `event` at `t`, or `None` outside its lifetime.
pub fn event_position_at(event: &EventSpec, t: f64) -> Option<Position> {
    const EPS: f64 = 1e-9;
    if t < event.t_start - EPS || t > event.t_end + EPS {
        return None;
    }
    let traj = &event.trajectory;
    let first = traj.first()?;
    if event.kind == EventKind::Fixed || traj.len() == 1 || t <= first.0 {
        return Some(first.1);
    }
    let i = traj.partition_point(|(wt, _)| *wt <= t).saturating_sub(1);
    match traj.get(i + 1) {
        Some((t1, p1)) => {
            let (t0, p0) = traj[i];
            Some(p0.lerp(p1, ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)))
        }
        None => Some(traj[i].1),
    }
}
