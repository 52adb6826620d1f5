//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use minuet::metrics::{self, MetricSummary, MetricsOptions, TickRange};
use minuet::model::{EventId, EventKind, PacketKind};
use minuet::protocol::{Record, SimLog};
use minuet::scenario::{self, EventFile, MobilitySpec, ScenarioFile, StationLayout, VehicleFile};
use minuet::StrategyKind;

const ORACLE_LOGS: u64 = 50;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const RATIO_TOLERANCE: f64 = 1e-9;
const REFERENCE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const MOBILITY_MIN_SEEDS: usize = 4;
const RUN_BUDGET: Duration = Duration::from_secs(120);
const HOP_LATENCY_S: f64 = 0.1;
const CHAIN_DELAY_S: f64 = 0.3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Arm {
    scenario: &'static str,
    strategy: StrategyKind,
    seed: u64,
    kinds: BTreeMap<String, EventKind>,
    log: SimLog,
    summaries: Vec<MetricSummary>,
    elapsed: Duration,
}

fn run_file(file: &ScenarioFile) -> SimLog {
    let resolved = scenario::validate(file, Path::new(".")).expect("valid scenario");
    let setup = scenario::build(&resolved, Path::new(".")).expect("buildable scenario");
    minuet::run(&setup)
}

fn reference_arms() -> Vec<Arm> {
    let mut arms = Vec::new();
    for name in ["paper_ld", "paper_hd"] {
        for strategy in StrategyKind::ALL {
            for seed in REFERENCE_SEEDS {
                let mut file = scenario::builtin(name).unwrap();
                file.clustering = strategy;
                file.seed = seed;
                let kinds = file.events.iter().map(|e| (e.name.clone(), e.kind)).collect();
                let start = Instant::now();
                let log = run_file(&file);
                let summaries = metrics::summarize(&log, MetricsOptions::default()).unwrap();
                arms.push(Arm { scenario: name, strategy, seed, kinds, log, summaries, elapsed: start.elapsed() });
            }
        }
    }
    arms
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= RATIO_TOLERANCE * a.abs().max(b.abs()).max(1.0),
        (None, None) => true,
        _ => false,
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut records = 0;
    for seed in 0..ORACLE_LOGS {
        let log = support::random_log(seed);
        records += log.records.len();
        let series = metrics::series(&log).unwrap();
        for e in &log.meta.events {
            let ev = e.id.0;
            for w in support::windows(&log, seed) {
                let range = TickRange::new(w.0, w.1);
                let r = metrics::redundancy(&log, e.id, range);
                let checks = [
                    ("redundancy", (r.total, r.single) == support::redundancy(&log, ev, w)),
                    ("delay", close(metrics::average_delay(&log, e.id, range, false), support::average_delay(&log, ev, w, false))),
                    ("unique delay", close(metrics::average_delay(&log, e.id, range, true), support::average_delay(&log, ev, w, true))),
                    ("overhead", close(metrics::clustering_overhead(&log, e.id, range), support::clustering_overhead(&log, ev, w))),
                    ("grouped", close(metrics::grouped_vehicle_ratio(&log, e.id, range, false), support::grouped_ratio(&log, ev, w, false))),
                    ("grouped literal", close(metrics::grouped_vehicle_ratio(&log, e.id, range, true), support::grouped_ratio(&log, ev, w, true))),
                    ("formed", metrics::formed_groups(&log, e.id, range) == support::formed_groups(&log, ev, w)),
                ];
                mismatches.extend(checks.iter().filter(|c| !c.1).map(|c| format!("{} (log {seed})", c.0)));
            }
            let s = &series[&e.id];
            for k in 0..log.meta.ticks {
                let i = k as usize;
                if [s.n_vd[i], s.n_vc[i], s.cp_g[i], s.mp_g[i], s.mp_r[i]] != support::series_at(&log, ev, k) {
                    mismatches.push(format!("series tick {k} (log {seed})"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && elapsed < ORACLE_BUDGET;
    let mut detail = format!("{ORACLE_LOGS} logs, {records} records, {:.2} s", elapsed.as_secs_f64());
    if let Some(m) = mismatches.first() {
        detail += &format!(", {} mismatches, first: {m}", mismatches.len());
    }
    outcome(pass, detail)
}

fn partition_identity(logs: &[&SimLog]) -> Outcome {
    let mut checked = 0;
    let mut bad = 0;
    for log in logs {
        let whole = TickRange::whole(log);
        for e in &log.meta.events {
            let r = metrics::redundancy(log, e.id, whole);
            let received = log
                .records
                .iter()
                .filter(|rec| matches!(rec, Record::Received { packet, .. } if packet.event == e.id))
                .count() as u64;
            let ratios = match (r.ratio, r.single_ratio) {
                (Some(a), Some(b)) => a + b == 1.0 || (a + b - 1.0).abs() <= f64::EPSILON,
                (None, None) => r.total == 0,
                _ => false,
            };
            checked += 1;
            if r.single + r.redundant != r.total || r.total != received || !ratios {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("{checked} run-events, {bad} violations"))
}

/// Parked vehicles 150 m apart on y = 100; the first sits on a fixed event.
fn chain(xs: &[f64], stations: Vec<[f64; 2]>, t_max_s: f64) -> ScenarioFile {
    let mut file = scenario::builtin("smoke").unwrap();
    file.name = "chain".into();
    file.duration_s = 20.0;
    file.bounds.max_x = 2000.0;
    file.mobility = MobilitySpec {
        vehicles: Some(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| VehicleFile { label: Some(format!("c{i}")), waypoints: vec![[0.0, x, 100.0]] })
                .collect(),
        ),
        ..Default::default()
    };
    file.events = vec![EventFile {
        name: "EV1".into(),
        kind: EventKind::Fixed,
        t_start_s: 1.0,
        t_end_s: 19.0,
        position: Some([xs[0], 100.0]),
        waypoints: None,
    }];
    file.base_stations = StationLayout { count: None, positions: Some(stations), range_m: Some(200.0) };
    file.radio.loss_probability = 0.0;
    file.radio.hop_latency_s = Some(HOP_LATENCY_S);
    file.protocol.t_max_s = t_max_s;
    file
}

fn az_soundness() -> Outcome {
    let xs = [0.0, 150.0, 300.0, 450.0, 600.0, 750.0];
    let mut failures = Vec::new();
    for k in 1..=4usize {
        let file = chain(&xs, vec![[0.0, 100.0]], k as f64 * HOP_LATENCY_S);
        for strategy in StrategyKind::ALL {
            let mut f = file.clone();
            f.clustering = strategy;
            let log = run_file(&f);
            let emitters: HashSet<u32> = log
                .records
                .iter()
                .filter_map(|r| match r {
                    Record::Generated { packet, .. } if packet.kind != PacketKind::Announcement => Some(packet.origin.0),
                    _ => None,
                })
                .collect();
            if let Some(v) = emitters.iter().find(|&&v| v as usize > k) {
                failures.push(format!("k={k} {strategy}: vehicle {v} emitted"));
            }
            if strategy == StrategyKind::DcaLike && !emitters.contains(&(k as u32)) {
                failures.push(format!("k={k}: hop-{k} vehicle stayed silent"));
            }
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { "t_max of 1..4 hops".to_string() } else { failures.join("; ") })
}

fn by_kind(arm: &Arm, kind: EventKind) -> Option<&MetricSummary> {
    arm.summaries.iter().find(|s| arm.kinds.get(&s.event_name) == Some(&kind))
}

fn gt(a: Option<f64>, b: Option<f64>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a > b)
}

fn mobility_contrast(arms: &[Arm]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scenario in ["paper_ld", "paper_hd"] {
        for strategy in StrategyKind::ALL {
            let set: Vec<&Arm> = arms.iter().filter(|a| a.scenario == scenario && a.strategy == strategy).collect();
            let count = |f: fn(&MetricSummary) -> Option<f64>| {
                set.iter()
                    .filter(|a| {
                        let (m, x) = (by_kind(a, EventKind::Mobile).unwrap(), by_kind(a, EventKind::Fixed).unwrap());
                        gt(f(m), f(x))
                    })
                    .count()
            };
            let monitored = count(|s| s.monitored_share);
            let delivered = count(|s| s.delivery_share);
            pass &= monitored >= MOBILITY_MIN_SEEDS && delivered >= MOBILITY_MIN_SEEDS;
            parts.push(format!("{scenario}/{strategy} monitored {monitored}/{n} delivered {delivered}/{n}", n = set.len()));
        }
    }
    let slowest = arms.iter().map(|a| a.elapsed).max().unwrap_or_default();
    pass &= slowest < RUN_BUDGET;
    parts.push(format!("slowest run {:.2} s", slowest.as_secs_f64()));
    outcome(pass, parts.join(", "))
}

/// Checks `holds(dca, pctt)` for every reference scenario, seed and event.
fn strategy_contrast(arms: &[Arm], holds: impl Fn(&MetricSummary, &MetricSummary) -> bool) -> (usize, usize, Vec<String>) {
    let (mut ok, mut total, mut failed) = (0, 0, Vec::new());
    for dca in arms.iter().filter(|a| a.strategy == StrategyKind::DcaLike) {
        let pctt = arms
            .iter()
            .find(|a| a.strategy == StrategyKind::PcttLike && a.scenario == dca.scenario && a.seed == dca.seed)
            .expect("both arms ran");
        for (d, p) in dca.summaries.iter().zip(&pctt.summaries) {
            total += 1;
            if holds(d, p) {
                ok += 1;
            } else {
                failed.push(format!("{} seed {} {}", dca.scenario, dca.seed, d.event_name));
            }
        }
    }
    (ok, total, failed)
}

fn contrast_outcome(label: &str, (ok, total, failed): (usize, usize, Vec<String>)) -> Outcome {
    let mut detail = format!("{label} {ok}/{total}");
    if !failed.is_empty() {
        detail += &format!(", failing: {}", failed.join(", "));
    }
    outcome(ok == total, detail)
}

fn group_contrast(arms: &[Arm]) -> Outcome {
    let f = strategy_contrast(arms, |d, p| d.formed_groups > p.formed_groups);
    let g = strategy_contrast(arms, |d, p| gt(d.grouped_ratio, p.grouped_ratio));
    let c = strategy_contrast(arms, |d, p| gt(d.clustering_overhead, p.clustering_overhead));
    let parts = [contrast_outcome("F", f), contrast_outcome("G", g), contrast_outcome("C", c)];
    outcome(parts.iter().all(|p| p.pass), parts.map(|p| p.detail).join(", "))
}

fn redundancy_contrast(arms: &[Arm]) -> Outcome {
    contrast_outcome("R", strategy_contrast(arms, |d, p| gt(d.redundancy.ratio, p.redundancy.ratio)))
}

fn delay_floor(logs: &[&SimLog]) -> Outcome {
    let mut floor_ok = true;
    let mut lowest = f64::INFINITY;
    for log in logs {
        for r in &log.records {
            if let Record::Received { t, packet, .. } = r {
                let d = t.since(packet.created_at) as f64 * log.meta.tick_s;
                lowest = lowest.min(d);
                floor_ok &= d >= HOP_LATENCY_S - 1e-12;
            }
        }
        for e in &log.meta.events {
            for per_unique in [false, true] {
                if let Some(d) = metrics::average_delay(log, e.id, TickRange::whole(log), per_unique) {
                    floor_ok &= d >= HOP_LATENCY_S - 1e-12;
                }
            }
        }
    }
    let fixture = run_file(&chain(&[0.0, 150.0, 300.0], vec![[450.0, 100.0]], 1.5));
    let d = metrics::average_delay(&fixture, EventId(0), TickRange::whole(&fixture), false);
    let exact = d.is_some_and(|d| (d - CHAIN_DELAY_S).abs() <= RATIO_TOLERANCE);
    outcome(
        floor_ok && exact,
        format!("lowest per-packet delay {lowest:.3} s, 3-hop fixture D_avg {}", d.map_or("n/a".into(), |d| format!("{d:.6} s"))),
    )
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_minuet"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let ok_runs = cli(&["run", "paper_hd", "--strategy", "dca_like", "--seed", "7", "--out", &s(dir("a"))])
        && cli(&["run", "paper_hd", "--strategy", "dca_like", "--seed", "7", "--out", &s(dir("b"))]);
    let ok_sweeps = cli(&["compare", "paper_ld", "--seeds", "1-3", "--jobs", "1", "--out", &s(dir("j1"))])
        && cli(&["compare", "paper_ld", "--seeds", "1-3", "--jobs", "4", "--out", &s(dir("j4"))]);
    let (a, b) = (files(&dir("a")), files(&dir("b")));
    let (j1, j4) = (files(&dir("j1")), files(&dir("j4")));
    let csvs = a.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let pass = ok_runs && ok_sweeps && !a.is_empty() && a == b && !j1.is_empty() && j1 == j4;
    outcome(pass, format!("run: {} files ({csvs} CSVs) identical: {}; sweep jobs 1 vs 4: {} files identical: {}", a.len(), a == b, j1.len(), j1 == j4))
}

fn pctt_gating(arms: &[Arm], extra: &[&SimLog]) -> Outcome {
    let mut runs = 0;
    let mut violations = 0;
    let pctt = arms.iter().filter(|a| a.strategy == StrategyKind::PcttLike).map(|a| &a.log);
    for log in pctt.chain(extra.iter().copied()) {
        runs += 1;
        let detectors: HashSet<u32> = log
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Detection { vehicle, .. } => Some(vehicle.0),
                _ => None,
            })
            .collect();
        violations += log
            .records
            .iter()
            .filter(|r| matches!(r, Record::Generated { packet, .. } if packet.kind == PacketKind::Clustering && !detectors.contains(&packet.origin.0)))
            .count();
    }
    outcome(violations == 0, format!("{runs} runs, {violations} clustering packets from non-detectors"))
}

fn main() -> ExitCode {
    let arms = reference_arms();
    let mut extra_pctt = Vec::new();
    for name in ["smoke", "clique"] {
        let mut f = scenario::builtin(name).unwrap();
        f.clustering = StrategyKind::PcttLike;
        extra_pctt.push(run_file(&f));
    }
    let all_logs: Vec<&SimLog> = arms.iter().map(|a| &a.log).chain(&extra_pctt).collect();
    let extra: Vec<&SimLog> = extra_pctt.iter().collect();

    let results = [
        ("1 metric oracle equivalence", oracle_equivalence()),
        ("2 partition identity", partition_identity(&all_logs)),
        ("3 announcement zone soundness", az_soundness()),
        ("4 mobility contrast", mobility_contrast(&arms)),
        ("5 strategy contrast F, G, C", group_contrast(&arms)),
        ("6 redundancy contrast", redundancy_contrast(&arms)),
        ("7 delay floor", delay_floor(&all_logs)),
        ("8 determinism", determinism()),
        ("9 pctt gating", pctt_gating(&arms, &extra)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
