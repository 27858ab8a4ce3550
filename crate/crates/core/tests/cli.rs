//! Command-line behaviour: outputs, determinism and exit codes.

use std::path::{Path, PathBuf};

use circadia::cli::run;
use circadia::features::FeatureTable;
use circadia::ingest::SchemaKind;

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn simulate(dir: &Path, config: &str, level: &str) -> i32 {
    let cfg = write(&dir.join("synth.toml"), config);
    run(["circadia", "simulate", "--config", &s(&cfg), "--out", &s(&dir.join("sim")), "--level", level])
}

fn extract(dir: &Path) -> i32 {
    let sim = dir.join("sim");
    run([
        "circadia",
        "extract",
        "--input",
        &s(&sim),
        "--config",
        &s(&sim.join("config.toml")),
        "--out",
        &s(&dir.join("ex")),
    ])
}

const SMALL: &str = "n_participants = 3\nwindows_per_participant = 2\n";

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let read_all = |dir: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        names.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let out = tmp.path().join("a");
    let cfg = write(&tmp.path().join("synth.toml"), SMALL);
    let go = |seed: &str| run(["circadia", "simulate", "--config", &s(&cfg), "--out", &s(&out), "--seed", seed]);
    assert_eq!(go("5"), 0);
    let first = read_all(&out);
    assert_eq!(go("5"), 0);
    assert_eq!(read_all(&out), first);
    assert_eq!(go("6"), 0);
    assert_ne!(read_all(&out), first);
}

#[test]
fn empty_cohort_writes_headers_only() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), "n_participants = 0\n", "raw"), 0);
    for kind in [
        SchemaKind::Participants,
        SchemaKind::Phq8,
        SchemaKind::Sleep,
        SchemaKind::Steps,
        SchemaKind::Hr,
    ] {
        let text = std::fs::read_to_string(tmp.path().join("sim").join(kind.file_name())).unwrap();
        assert_eq!(text, kind.header().join(",") + "\n");
    }
    assert_eq!(extract(tmp.path()), 2);
}

#[test]
fn extract_fit_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), SMALL, "raw"), 0);
    assert_eq!(extract(tmp.path()), 0);
    let ex = tmp.path().join("ex");
    let features = FeatureTable::read_file(&ex.join("features.csv")).unwrap();
    assert_eq!(features.rows.len(), 6);
    let windows = std::fs::read_to_string(ex.join("windows.csv")).unwrap();
    assert_eq!(windows.lines().count(), 7);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ex.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "extract");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let report = tmp.path().join("rep");
    assert_eq!(run(["circadia", "report", "--features", &s(&ex.join("features.csv")), "--out", &s(&report)]), 0);
    let profile = std::fs::read_to_string(report.join("seasonal_profile.csv")).unwrap();
    assert!(profile.starts_with("feature,month,mean_z,sd_z,n\n"));
}

#[test]
fn low_coverage_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[missingness]\nminute_dropout = 0.5\nday_dropout = 0.0\n");
    assert_eq!(simulate(tmp.path(), &cfg, "raw"), 0);
    assert_eq!(extract(tmp.path()), 2);
    let windows = std::fs::read_to_string(tmp.path().join("ex/windows.csv")).unwrap();
    assert!(windows.lines().skip(1).all(|l| l.ends_with("insufficient_coverage")));
}

#[test]
fn invalid_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), SMALL, "raw"), 0);
    write(&tmp.path().join("sim/config.toml"), "sites = [\"uk\"]\n[inclusion]\ncoverage_min = 2.0\n");
    assert_eq!(extract(tmp.path()), 1);
    assert_eq!(simulate(tmp.path(), "no_such_key = 1\n", "raw"), 1);
}

#[test]
fn missing_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), SMALL, "raw"), 0);
    std::fs::remove_file(tmp.path().join("sim/hr.csv")).unwrap();
    assert_eq!(extract(tmp.path()), 1);
    let nowhere = tmp.path().join("nowhere.csv");
    assert_eq!(run(["circadia", "report", "--features", &s(&nowhere), "--out", &s(tmp.path())]), 1);
}

#[test]
fn empty_pre_covid_subset_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "n_participants = 20\nfirst_completion = \"2021-01-10\"\n";
    assert_eq!(simulate(tmp.path(), cfg, "panel"), 0);
    let sim = tmp.path().join("sim");
    let fit = |subset: &str| {
        run([
            "circadia",
            "fit",
            "--features",
            &s(&sim.join("features.csv")),
            "--config",
            &s(&sim.join("config.toml")),
            "--out",
            &s(&tmp.path().join("fit")),
            "--subset",
            subset,
        ])
    };
    assert_eq!(fit("pre_covid"), 2);
    assert_eq!(fit("both"), 2);
    assert_eq!(fit("all"), 0);
}

#[test]
fn report_with_single_windows_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), "windows_per_participant = 1\n", "panel"), 0);
    let features = tmp.path().join("sim/features.csv");
    assert_eq!(run(["circadia", "report", "--features", &s(&features), "--out", &s(&tmp.path().join("r"))]), 2);
}

#[test]
fn usage_errors_exit_one_and_help_zero() {
    assert_eq!(run(["circadia", "fit"]), 1);
    assert_eq!(run(["circadia", "frobnicate"]), 1);
    assert_eq!(run(["circadia", "--help"]), 0);
}
