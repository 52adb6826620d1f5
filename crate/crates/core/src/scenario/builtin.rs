//! Reference scenarios shipped with the simulator.
//!
//! `paper_ld` and `paper_hd` place one mobile and one fixed event on a
//! 6.5 km x 1 km grid of roads covered by 26 base stations, with synthetic
//! traffic at a low and a high arrival rate. `smoke` is a tiny five-vehicle
//! run; `clique` is five parked vehicles that all hear each other.

use crate::clustering::StrategyKind;
use crate::mobility::GridFlows;
use crate::model::{Bounds, EventKind};
use crate::protocol::ProtocolConfig;
use crate::radio::RadioConfig;

use super::{EventFile, MobilitySpec, ScenarioError, ScenarioFile, StationLayout, VehicleFile};

pub const BUILTIN_NAMES: [&str; 4] = ["paper_ld", "paper_hd", "smoke", "clique"];

pub const PAPER_LD_RATE_VPS: f64 = 0.02;
pub const PAPER_HD_RATE_VPS: f64 = 0.05;

/// Shared position of both fixed events.
pub const FIXED_EVENT_POSITION: [f64; 2] = [7682.0, 5878.2];

pub fn builtin(name: &str) -> Result<ScenarioFile, ScenarioError> {
    match name {
        "paper_ld" => Ok(paper(name, PAPER_LD_RATE_VPS, "EV1", "EV2")),
        "paper_hd" => Ok(paper(name, PAPER_HD_RATE_VPS, "EV3", "EV4")),
        "smoke" => Ok(smoke()),
        "clique" => Ok(clique()),
        other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
    }
}

fn paper(name: &str, rate: f64, mobile: &str, fixed: &str) -> ScenarioFile {
    // southern row of stations
    let y = 5628.2;
    ScenarioFile {
        name: name.to_string(),
        duration_s: 360.0,
        tick_s: 0.1,
        seed: 1,
        clustering: StrategyKind::DcaLike,
        maintenance_interval_s: 1.0,
        grace_intervals: 2,
        bounds: Bounds { min_x: 4432.0, min_y: 5378.2, max_x: 10932.0, max_y: 6378.2 },
        mobility: MobilitySpec {
            grid_flows: Some(GridFlows {
                block_m: 250.0,
                arrival_rate_vps: rate,
                speed_min_mps: 8.0,
                speed_max_mps: 14.0,
                headway_m: 8.0,
                sample_s: 1.0,
            }),
            ..Default::default()
        },
        events: vec![
            EventFile {
                name: mobile.to_string(),
                kind: EventKind::Mobile,
                t_start_s: 30.0,
                t_end_s: 330.0,
                position: None,
                // 4 m/s eastwards along the road through the southern stations
                waypoints: Some(vec![[30.0, 6182.0, y], [330.0, 7382.0, y]]),
            },
            EventFile {
                name: fixed.to_string(),
                kind: EventKind::Fixed,
                t_start_s: 30.0,
                t_end_s: 330.0,
                position: Some(FIXED_EVENT_POSITION),
                waypoints: None,
            },
        ],
        base_stations: StationLayout { count: Some(26), positions: None, range_m: Some(200.0) },
        radio: RadioConfig::default(),
        protocol: ProtocolConfig::default(),
    }
}

fn small(name: &str, duration_s: f64, vehicles: Vec<VehicleFile>, events: Vec<EventFile>, stations: Vec<[f64; 2]>) -> ScenarioFile {
    ScenarioFile {
        name: name.to_string(),
        duration_s,
        tick_s: 0.1,
        seed: 1,
        clustering: StrategyKind::DcaLike,
        maintenance_interval_s: 1.0,
        grace_intervals: 2,
        bounds: Bounds { min_x: 0.0, min_y: 0.0, max_x: 1000.0, max_y: 200.0 },
        mobility: MobilitySpec { vehicles: Some(vehicles), ..Default::default() },
        events,
        base_stations: StationLayout { count: None, positions: Some(stations), range_m: Some(200.0) },
        radio: RadioConfig::default(),
        protocol: ProtocolConfig::default(),
    }
}

fn smoke() -> ScenarioFile {
    let vehicles = [(0.0, 12.0), (40.0, 10.0), (80.0, 9.0), (150.0, 8.0), (300.0, 6.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x0, v))| VehicleFile {
            label: Some(format!("car{i}")),
            waypoints: vec![[0.0, x0, 100.0], [30.0, x0 + 30.0 * v, 100.0]],
        })
        .collect();
    let events = vec![
        EventFile {
            name: "EV1".into(),
            kind: EventKind::Mobile,
            t_start_s: 2.0,
            t_end_s: 28.0,
            position: None,
            waypoints: Some(vec![[2.0, 312.0, 100.0], [28.0, 468.0, 100.0]]),
        },
        EventFile {
            name: "EV2".into(),
            kind: EventKind::Fixed,
            t_start_s: 2.0,
            t_end_s: 28.0,
            position: Some([250.0, 100.0]),
            waypoints: None,
        },
    ];
    small("smoke", 30.0, vehicles, events, vec![[500.0, 100.0], [900.0, 100.0]])
}

fn clique() -> ScenarioFile {
    let vehicles = [(480.0, 100.0), (500.0, 100.0), (520.0, 100.0), (500.0, 80.0), (500.0, 120.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| VehicleFile { label: Some(format!("car{i}")), waypoints: vec![[0.0, x, y]] })
        .collect();
    let events = vec![EventFile {
        name: "EV1".into(),
        kind: EventKind::Fixed,
        t_start_s: 5.0,
        t_end_s: 55.0,
        position: Some([500.0, 100.0]),
        waypoints: None,
    }];
    small("clique", 60.0, vehicles, events, vec![[650.0, 100.0]])
}
