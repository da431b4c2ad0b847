use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use byzant::io::{read_metrics, read_summary, validate_summary};
use byzant::trial::{fit_loglog_slope, ZetaPoint};

const CONFIG: &str = r#"
[problem]
kind = "quadratic"
dim = 8
smoothness = 10
strong_convexity = 1
noise = 0.5
workers = 6

[attack]
kind = "sign-flip"
fraction = 50

[aggregator]
kind = "bant"
trial_size = 200

[engine]
rounds = 120
seed = 3
"#;

fn byzant(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzant"))
        .args(args)
        .current_dir(dir)
        .env_remove("BYZANT_OUT")
        .output()
        .expect("binary runs")
}

fn setup(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), text).unwrap();
    dir
}

#[test]
fn run_writes_metrics_summary_and_plot() {
    let dir = setup(CONFIG);
    let out = byzant(&["run", "--config", "c.toml", "--out", "d"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = dir.path().join("d");
    let rows = read_metrics(&d.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 120);
    let summary = read_summary(&d.join("summary.json")).unwrap();
    assert_eq!(summary.events, 120);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    validate_summary(&doc).unwrap();
    assert!(fs::read_to_string(d.join("curves.svg")).unwrap().contains("<polyline"));
}

#[test]
fn thread_count_does_not_change_metrics() {
    let dir = setup(CONFIG);
    for (t, name) in [("1", "a"), ("4", "b")] {
        let out = byzant(&["run", "--config", "c.toml", "--out", name, "--threads", t], dir.path());
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = setup(CONFIG);
    assert!(byzant(&["run", "--config", "c.toml", "--out", "a"], dir.path()).status.success());
    assert!(byzant(&["run", "--config", "c.toml", "--out", "b", "--seed", "99"], dir.path()).status.success());
    let a = fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(read_summary(&dir.path().join("b/summary.json")).unwrap().config.seed, 99);
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = setup(CONFIG);
    let out = Command::new(env!("CARGO_BIN_EXE_byzant"))
        .args(["run", "--config", "c.toml"])
        .current_dir(dir.path())
        .env("BYZANT_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/metrics.csv").exists());
}

#[test]
fn duplicate_key_exits_with_config_error() {
    let dir = setup("[problem]\nkind = \"quadratic\"\ndim = 4\ndim = 5\nsmoothness = 1\n");
    let out = byzant(&["run", "--config", "c.toml", "--out", "d"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('3') && err.contains('4'), "{err}");
}

#[test]
fn out_of_range_momentum_exits_with_config_error() {
    let dir = setup(&CONFIG.replace("kind = \"bant\"", "kind = \"bant\"\nmomentum = 1.5"));
    let out = byzant(&["run", "--config", "c.toml", "--out", "d"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = byzant(&["run", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_creates_one_directory_per_pair() {
    let dir = setup(CONFIG);
    let out = byzant(
        &["sweep", "--config", "c.toml", "--out", "s", "--aggregators", "mean,bant", "--attacks", "ipm80,alie40"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = dir.path().join("s");
    for name in ["mean__ipm80", "mean__alie40", "bant__ipm80", "bant__alie40"] {
        assert!(s.join(name).join("metrics.csv").exists(), "{name}");
        assert!(s.join(name).join("summary.json").exists(), "{name}");
    }
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(s.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(index.as_array().unwrap().len(), 4);
    assert_eq!(fs::read_to_string(s.join("curves.svg")).unwrap().matches("<polyline").count(), 4);
}

#[test]
fn sweep_rejects_unknown_attack_token() {
    let dir = setup(CONFIG);
    let out = byzant(&["sweep", "--config", "c.toml", "--out", "s", "--attacks", "bogus10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zeta_slope_recomputes_from_csv() {
    let dir = setup(CONFIG);
    let out = byzant(
        &["zeta", "--config", "c.toml", "--out", "z", "--ns", "50,100,200,400,800", "--reps", "20"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let z = dir.path().join("z");
    let mut rdr = csv::Reader::from_path(z.join("zeta.csv")).unwrap();
    let points: Vec<ZetaPoint> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            ZetaPoint {
                trial_size: r[0].parse().unwrap(),
                discrepancy: r[1].parse().unwrap(),
            }
        })
        .collect();
    assert_eq!(points.len(), 5);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(z.join("summary.json")).unwrap()).unwrap();
    let reported = summary["slope"].as_f64().unwrap();
    let recomputed = fit_loglog_slope(&points).unwrap();
    assert!((reported - recomputed).abs() <= 1e-9, "{reported} vs {recomputed}");
    assert!((-1.4..=-0.6).contains(&recomputed));
}

#[test]
fn audit_reports_assumption_checks() {
    let dir = setup(CONFIG);
    let out = byzant(&["audit", "--config", "c.toml", "--out", "a", "--draws", "2000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a/audit.json")).unwrap()).unwrap();
    assert!(doc["finite_diff_max_rel_error"].as_f64().unwrap() < 1e-5);
    assert!(doc["bant_reference_max_diff"].as_f64().unwrap() <= 1e-12);
    assert!(doc["trial_lipschitz_ratio"].as_f64().unwrap() <= doc["smoothness"].as_f64().unwrap() * (1.0 + 1e-9));
    assert!(doc["noise"]["max_mean_deviation"].as_f64().unwrap() <= doc["noise"]["mean_bound"].as_f64().unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(byzant(&["frobnicate"], dir.path()).status.code(), Some(2));
}
