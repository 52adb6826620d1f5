//! CSV output for series and summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{MetricSeries, MetricSummary};
use crate::model::EventId;
use crate::protocol::SimLog;

/// Files written for one run.
#[derive(Clone, Debug, Default)]
pub struct RunOutputs {
    pub series: Vec<PathBuf>,
    pub summary: PathBuf,
    pub redundancy: PathBuf,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `<prefix>_<event>_<metric>.csv` for every event and metric, then
/// the summary and redundancy tables.
pub fn write_run_outputs(
    dir: &Path,
    prefix: &str,
    strategy: &str,
    log: &SimLog,
    series: &BTreeMap<EventId, MetricSeries>,
    summaries: &[MetricSummary],
) -> io::Result<RunOutputs> {
    fs::create_dir_all(dir)?;
    let mut out = RunOutputs::default();
    let tick_s = log.meta.tick_s;
    let decimals = crate::protocol::time_decimals(tick_s);
    for meta in &log.meta.events {
        let s = &series[&meta.id];
        for (metric, values) in s.named() {
            let path = dir.join(format!("{}_{}_{}.csv", sanitize(prefix), sanitize(&meta.name), metric));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(["t", "value"]).map_err(csv_err)?;
            for (i, v) in values.iter().enumerate() {
                w.write_record([format!("{:.*}", decimals, i as f64 * tick_s), v.to_string()])
                    .map_err(csv_err)?;
            }
            w.flush()?;
            out.series.push(path);
        }
    }

    out.summary = dir.join(format!("{}_summary.csv", sanitize(prefix)));
    write_summary_csv(&out.summary, strategy, summaries)?;

    out.redundancy = dir.join(format!("{}_redundancy.csv", sanitize(prefix)));
    let mut w = csv::Writer::from_path(&out.redundancy).map_err(csv_err)?;
    w.write_record(["event", "strategy", "MP_g", "S", "R%"]).map_err(csv_err)?;
    for s in summaries {
        w.write_record([
            s.event_name.clone(),
            strategy.to_string(),
            s.generated.monitoring.to_string(),
            s.redundancy.single.to_string(),
            s.redundancy.ratio.map(|r| format!("{:.2}", r * 100.0)).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(out)
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "event",
    "strategy",
    "ap_g",
    "cp_g",
    "mp_g",
    "mp_r",
    "single",
    "redundant",
    "r",
    "avg_delay_s",
    "clustering_overhead",
    "grouped_ratio",
    "formed_groups",
    "monitored_share",
    "delivery_share",
    "single_ratio",
];

pub fn write_summary_csv(path: &Path, strategy: &str, summaries: &[MetricSummary]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for s in summaries {
        w.write_record([
            s.event_name.clone(),
            strategy.to_string(),
            s.generated.announcement.to_string(),
            s.generated.clustering.to_string(),
            s.generated.monitoring.to_string(),
            s.received.to_string(),
            s.redundancy.single.to_string(),
            s.redundancy.redundant.to_string(),
            opt(s.redundancy.ratio),
            opt(s.avg_delay),
            opt(s.clustering_overhead),
            opt(s.grouped_ratio),
            s.formed_groups.to_string(),
            opt(s.monitored_share),
            opt(s.delivery_share),
            opt(s.redundancy.single_ratio),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{series, summarize, MetricsOptions};
    use crate::model::Tick;
    use crate::protocol::{EventMeta, LogMeta, Record};

    #[test]
    fn writes_one_file_per_metric_and_event() {
        let mut log = SimLog::new(LogMeta {
            tick_s: 0.1,
            ticks: 4,
            events: vec![
                EventMeta { id: EventId(0), name: "EV1".into(), start: Tick(0), end: Tick(3) },
                EventMeta { id: EventId(1), name: "EV2".into(), start: Tick(1), end: Tick(2) },
            ],
        });
        log.push(Record::Population { t: Tick(0), active: 2 });
        let dir = tempfile::tempdir().unwrap();
        let s = series(&log).unwrap();
        let sum = summarize(&log, MetricsOptions::default()).unwrap();
        let out = write_run_outputs(dir.path(), "smoke_dca_like", "dca_like", &log, &s, &sum).unwrap();
        assert_eq!(out.series.len(), 10);
        let text = fs::read_to_string(dir.path().join("smoke_dca_like_EV2_n_vd.csv")).unwrap();
        assert_eq!(text, "t,value\n0.0,0\n0.1,0\n0.2,0\n0.3,0\n");
        let red = fs::read_to_string(&out.redundancy).unwrap();
        assert!(red.starts_with("event,strategy,MP_g,S,R%\nEV1,dca_like,0,0,\n"), "{red}");
    }
}
