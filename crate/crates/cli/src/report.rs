//! Running a scenario to disk and tabulating sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use minuet::metrics::{self, MetricSummary, MetricsOptions};
use minuet::model::EventKind;
use minuet::scenario::{self, ScenarioError, ScenarioFile};
use minuet::StrategyKind;

pub struct Finished {
    pub summaries: Vec<MetricSummary>,
    pub summary_txt: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    scenario_sha256: String,
    strategy: &'a str,
    seed: u64,
    version: &'a str,
    eq7_literal: bool,
    per_unique_delay: bool,
    files: Vec<String>,
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "n/a".into())
}

fn secs(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3} s")).unwrap_or_else(|| "n/a".into())
}

fn summary_text(name: &str, strategy: StrategyKind, seed: u64, summaries: &[MetricSummary]) -> String {
    let mut out = format!("scenario {name}  strategy {strategy}  seed {seed}\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<6} monitored {:>7}  delivered {:>7}  R {:>7}  S {:>6}  D_avg {:>9}  F {:>4}  C {:>7}  G {:>7}",
            s.event_name,
            pct(s.monitored_share),
            pct(s.delivery_share),
            pct(s.redundancy.ratio),
            s.redundancy.single,
            secs(s.avg_delay),
            s.formed_groups,
            pct(s.clustering_overhead),
            pct(s.grouped_ratio),
        );
    }
    out
}

/// Builds, runs and measures `file`, writing every artifact into `out`.
pub fn execute(file: &ScenarioFile, base: &Path, out: &Path, options: MetricsOptions) -> Result<Finished> {
    let resolved = scenario::validate(file, base).map_err(ScenarioError::Invalid)?;
    let setup = scenario::build(&resolved, base)?;
    let log = minuet::run(&setup);
    let series = metrics::series(&log)?;
    let summaries = metrics::summarize(&log, options)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let strategy = resolved.clustering;
    let prefix = format!("{}_{}", resolved.name, strategy);
    let log_path = out.join(format!("{prefix}.simlog"));
    fs::write(&log_path, log.to_text()).with_context(|| format!("writing {}", log_path.display()))?;
    let written = metrics::write_run_outputs(out, &prefix, strategy.as_str(), &log, &series, &summaries)
        .with_context(|| format!("writing CSVs to {}", out.display()))?;

    let summary_txt = out.join("summary.txt");
    fs::write(&summary_txt, summary_text(&resolved.name, strategy, resolved.seed, &summaries))?;

    let mut files: Vec<String> = std::iter::once(&log_path)
        .chain(&written.series)
        .chain([&written.summary, &written.redundancy, &summary_txt])
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    files.sort();
    let manifest = Manifest {
        scenario: &resolved.name,
        scenario_sha256: hex::encode(Sha256::digest(resolved.to_toml().as_bytes())),
        strategy: strategy.as_str(),
        seed: resolved.seed,
        version: env!("CARGO_PKG_VERSION"),
        eq7_literal: options.eq7_literal,
        per_unique_delay: options.per_unique_delay,
        files,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(Finished { summaries, summary_txt })
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.n += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

const COLUMNS: [&str; 12] = [
    "monitored_share",
    "delivery_share",
    "mp_g",
    "mp_r",
    "S",
    "R%",
    "avg_delay_s",
    "F",
    "C",
    "G",
    "cp_g",
    "n_seeds",
];

fn row_values(s: &MetricSummary) -> [Option<f64>; 10] {
    [
        s.monitored_share,
        s.delivery_share,
        Some(s.generated.monitoring as f64),
        Some(s.received as f64),
        Some(s.redundancy.single as f64),
        s.redundancy.ratio.map(|r| r * 100.0),
        s.avg_delay,
        Some(s.formed_groups as f64),
        s.clustering_overhead,
        s.grouped_ratio,
    ]
}

/// Per-strategy, per-event means over seeds plus the ordinal checks. Returns
/// the table as printed.
pub fn write_comparison(
    out: &Path,
    file: &ScenarioFile,
    runs: &[(StrategyKind, u64, Vec<MetricSummary>)],
) -> Result<String> {
    let name = file.name.as_str();
    let kinds: BTreeMap<String, EventKind> = file.events.iter().map(|e| (e.name.clone(), e.kind)).collect();
    fs::create_dir_all(out)?;
    let mut sorted: Vec<&(StrategyKind, u64, Vec<MetricSummary>)> = runs.iter().collect();
    sorted.sort_by_key(|(s, seed, _)| (*s, *seed));

    let mut means: BTreeMap<(StrategyKind, u32, String), ([Mean; 10], Mean, usize)> = BTreeMap::new();
    for (strategy, _, summaries) in &sorted {
        for s in summaries {
            let entry = means.entry((*strategy, s.event.0, s.event_name.clone())).or_default();
            for (m, v) in entry.0.iter_mut().zip(row_values(s)) {
                m.add(v);
            }
            entry.1.add(Some(s.generated.clustering as f64));
            entry.2 += 1;
        }
    }

    let path = out.join(format!("{name}_compare.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["strategy", "event"];
    header.extend(COLUMNS);
    w.write_record(&header)?;
    let mut table = format!("{:<10} {:<6}", "strategy", "event");
    for c in COLUMNS {
        let _ = write!(table, " {c:>15}");
    }
    table.push('\n');
    for ((strategy, _, event), (cols, cp, n)) in &means {
        let mut rec = vec![strategy.to_string(), event.clone()];
        let _ = write!(table, "{:<10} {:<6}", strategy.as_str(), event);
        let values = cols.iter().map(Mean::get).chain([cp.get(), Some(*n as f64)]);
        for v in values {
            let cell = v.map(|x| format!("{x:.4}")).unwrap_or_default();
            let _ = write!(table, " {:>15}", if cell.is_empty() { "n/a" } else { &cell });
            rec.push(cell);
        }
        table.push('\n');
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut checks = ordering_checks(&sorted);
    checks.extend(mobility_checks(&sorted, &kinds));
    let mut cw = csv::Writer::from_path(out.join(format!("{name}_orderings.csv")))?;
    cw.write_record(["check", "seed", "event", "holds"])?;
    table.push('\n');
    for c in &checks {
        cw.write_record([c.name.clone(), c.seed.to_string(), c.event.clone(), c.holds.to_string()])?;
    }
    cw.flush()?;
    let mut by_name: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for c in &checks {
        let e = by_name.entry(&c.name).or_default();
        e.0 += c.holds as usize;
        e.1 += 1;
    }
    for (check, (held, total)) in by_name {
        let _ = writeln!(table, "{check:<40} holds in {held}/{total}");
    }
    fs::write(out.join(format!("{name}_compare.txt")), &table)?;
    Ok(table)
}

struct Check {
    name: String,
    seed: u64,
    event: String,
    holds: bool,
}

fn gt(a: Option<f64>, b: Option<f64>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a > b) || (a.is_some() && b.is_none())
}

fn ordering_checks(runs: &[&(StrategyKind, u64, Vec<MetricSummary>)]) -> Vec<Check> {
    let mut checks = Vec::new();
    let find = |strategy: StrategyKind, seed: u64| {
        runs.iter().find(|(s, sd, _)| *s == strategy && *sd == seed).map(|r| &r.2)
    };
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.1).collect();
    seeds.sort_unstable();
    seeds.dedup();
    for &seed in &seeds {
        if let (Some(dca), Some(pctt)) = (find(StrategyKind::DcaLike, seed), find(StrategyKind::PcttLike, seed)) {
            for (d, p) in dca.iter().zip(pctt) {
                let mut push = |name: &str, holds: bool| {
                    checks.push(Check { name: name.into(), seed, event: d.event_name.clone(), holds })
                };
                push("F dca_like > pctt_like", d.formed_groups > p.formed_groups);
                push("G dca_like > pctt_like", gt(d.grouped_ratio, p.grouped_ratio));
                push("C dca_like > pctt_like", gt(d.clustering_overhead, p.clustering_overhead));
                push("R dca_like > pctt_like", gt(d.redundancy.ratio, p.redundancy.ratio));
            }
        }
    }
    checks
}

/// Mobile-event shares against fixed-event shares within each run.
fn mobility_checks(
    runs: &[&(StrategyKind, u64, Vec<MetricSummary>)],
    kinds: &BTreeMap<String, EventKind>,
) -> Vec<Check> {
    let mut checks = Vec::new();
    for (strategy, seed, summaries) in runs {
        let of = |k: EventKind| summaries.iter().filter(move |s| kinds.get(&s.event_name) == Some(&k));
        for m in of(EventKind::Mobile) {
            for f in of(EventKind::Fixed) {
                let event = format!("{}>{}", m.event_name, f.event_name);
                checks.push(Check {
                    name: format!("{strategy} monitored mobile > fixed"),
                    seed: *seed,
                    event: event.clone(),
                    holds: gt(m.monitored_share, f.monitored_share),
                });
                checks.push(Check {
                    name: format!("{strategy} delivered mobile > fixed"),
                    seed: *seed,
                    event,
                    holds: gt(m.delivery_share, f.delivery_share),
                });
            }
        }
    }
    checks
}
