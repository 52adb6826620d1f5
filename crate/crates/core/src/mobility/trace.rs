use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use crate::model::{normalize_heading, Position, VehicleId, VehicleState};

/// Slack when deciding whether a query time falls inside a trace.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub position: Position,
    pub speed: f64,
    pub heading: f64,
}

/// Time-ordered samples of one vehicle. The vehicle is present from the
/// first sample to the last.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleTrace {
    pub id: VehicleId,
    pub label: String,
    pub samples: Vec<TraceSample>,
}

impl VehicleTrace {
    pub fn enter(&self) -> f64 {
        self.samples.first().map_or(f64::INFINITY, |s| s.t)
    }

    pub fn exit(&self) -> f64 {
        self.samples.last().map_or(f64::NEG_INFINITY, |s| s.t)
    }

    pub fn covers(&self, t: f64) -> bool {
        !self.samples.is_empty() && t >= self.enter() - TIME_EPS && t <= self.exit() + TIME_EPS
    }

    /// Index of the last sample at or before `t`.
    fn bracket(&self, t: f64) -> usize {
        self.samples
            .partition_point(|s| s.t <= t + TIME_EPS)
            .saturating_sub(1)
    }

    pub fn position_at(&self, t: f64) -> Option<Position> {
        if !self.covers(t) {
            return None;
        }
        let i = self.bracket(t);
        let a = &self.samples[i];
        match self.samples.get(i + 1) {
            Some(b) if t > a.t + TIME_EPS => {
                let frac = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                Some(a.position.lerp(&b.position, frac))
            }
            _ => Some(a.position),
        }
    }

    /// Interpolated state; speed and heading are held from the earlier sample.
    pub fn state_at(&self, t: f64) -> Option<VehicleState> {
        let position = self.position_at(t)?;
        let held = &self.samples[self.bracket(t)];
        Some(VehicleState {
            id: self.id,
            position,
            heading: held.heading,
            speed: held.speed,
            active: true,
        })
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.speed).fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate timestamp {t} for vehicle {vehicle}")]
    DuplicateTimestamp { line: usize, vehicle: String, t: f64 },
    #[error("line {line}: timestamp {t} for vehicle {vehicle} is earlier than its previous sample")]
    OutOfOrder { line: usize, vehicle: String, t: f64 },
    #[error("reading trace: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads a whitespace-separated trace, one sample per line:
/// `time vehicle_id x y speed heading`. A header line, blank lines and `#`
/// comments are skipped. Vehicle ids are assigned in order of first
/// appearance.
pub fn load_traces<R: BufRead>(reader: R) -> Result<Vec<VehicleTrace>, TraceError> {
    let mut traces: Vec<VehicleTrace> = Vec::new();
    let mut by_label: HashMap<String, usize> = HashMap::new();
    let mut seen_data = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !seen_data && fields[0].parse::<f64>().is_err() {
            // header
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != 6 {
            return Err(TraceError::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize, name: &str| -> Result<f64, TraceError> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceError::Parse {
                    line: line_no,
                    message: format!("invalid {name} '{}'", fields[i]),
                })
        };
        let t = num(0, "time")?;
        let x = num(2, "x")?;
        let y = num(3, "y")?;
        let speed = num(4, "speed")?;
        let heading = num(5, "heading")?;
        if t < 0.0 {
            return Err(TraceError::Parse {
                line: line_no,
                message: format!("negative time {t}"),
            });
        }
        if speed < 0.0 {
            return Err(TraceError::Parse {
                line: line_no,
                message: format!("negative speed {speed}"),
            });
        }
        let label = fields[1];
        let slot = *by_label.entry(label.to_string()).or_insert_with(|| {
            traces.push(VehicleTrace {
                id: VehicleId(traces.len() as u32),
                label: label.to_string(),
                samples: Vec::new(),
            });
            traces.len() - 1
        });
        let trace = &mut traces[slot];
        if let Some(last) = trace.samples.last() {
            if t == last.t {
                return Err(TraceError::DuplicateTimestamp {
                    line: line_no,
                    vehicle: label.to_string(),
                    t,
                });
            }
            if t < last.t {
                return Err(TraceError::OutOfOrder {
                    line: line_no,
                    vehicle: label.to_string(),
                    t,
                });
            }
        }
        trace.samples.push(TraceSample {
            t,
            position: Position::new(x, y),
            speed,
            heading: normalize_heading(heading),
        });
    }
    Ok(traces)
}

/// Writes traces in the format accepted by [`load_traces`], time-major.
pub fn write_traces<W: std::io::Write>(traces: &[VehicleTrace], mut out: W) -> std::io::Result<()> {
    writeln!(out, "time vehicle_id x y speed heading")?;
    let mut rows: Vec<(f64, &str, &TraceSample)> = traces
        .iter()
        .flat_map(|tr| tr.samples.iter().map(move |s| (s.t, tr.label.as_str(), s)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, label, s) in rows {
        writeln!(
            out,
            "{t} {label} {} {} {} {}",
            s.position.x, s.position.y, s.speed, s.heading
        )?;
    }
    Ok(())
}
