use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn minuet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minuet")).args(args).output().expect("binary runs")
}

fn csv_files(dir: &Path) -> Vec<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect()
}

#[test]
fn run_smoke_is_quick_and_complete() {
    let out = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = minuet(&["run", "smoke", "--out", out.path().to_str().unwrap()]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    assert!(csv_files(out.path()).len() >= 7);
    for f in ["smoke_dca_like.simlog", "summary.txt", "manifest.json", "smoke_dca_like_summary.csv"] {
        assert!(out.path().join(f).is_file(), "missing {f}");
    }
    let summary = String::from_utf8_lossy(&o.stdout);
    for field in ["monitored", "delivered", "R ", "S ", "D_avg", "F "] {
        assert!(summary.contains(field), "summary lacks {field}: {summary}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn compare_clique_gives_one_row_per_arm() {
    let out = tempfile::tempdir().unwrap();
    let o = minuet(&[
        "compare",
        "--scenario",
        "clique",
        "--strategies",
        "dca_like,pctt_like",
        "--seeds",
        "1",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.path().join("clique_compare.csv")).unwrap();
    assert!(r.headers().unwrap().iter().any(|h| h == "R%"));
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "dca_like");
    assert_eq!(&rows[1][0], "pctt_like");
    assert!(out.path().join("clique_orderings.csv").is_file());
}

#[test]
fn compare_needs_two_strategies() {
    let out = tempfile::tempdir().unwrap();
    let o = minuet(&["compare", "clique", "--strategies", "dca_like", "--out", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn validate_prints_resolved_scenario() {
    let o = minuet(&["validate", "paper_hd"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let file = minuet::scenario::ScenarioFile::from_toml(&text).unwrap();
    assert_eq!(file.base_stations.positions.map(|p| p.len()), Some(26));
}

#[test]
fn invalid_scenario_fails_with_key_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let mut file = minuet::scenario::builtin("smoke").unwrap();
    file.events[0].t_end_s = 99.0;
    file.radio.v2v_range_m = -1.0;
    std::fs::write(&path, file.to_toml()).unwrap();
    let o = minuet(&["run", path.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("events[0].t_end_s"), "{err}");
    assert!(err.contains("radio.v2v_range_m"), "{err}");
}

#[test]
fn unknown_builtin_is_an_error() {
    let o = minuet(&["run", "paper_xl"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("paper_xl"));
}
