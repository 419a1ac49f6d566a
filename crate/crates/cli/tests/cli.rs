use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_geobayes");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_config(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = write(dir, "config.toml", config);
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

/// Rows of a CSV as header-keyed maps.
fn table(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const CIRCLE: &str = r#"
seed = 11
manifold = { kind = "circle", radius = 1.0 }
map = { kind = "inclusion" }
prior = { kind = "uniform" }
epsilons = [0.04, 0.07, 0.1, 0.16]
samples = { per-level = 4000 }
resolution = [32]
"#;

#[test]
fn describe_circle_inclusion_kappa_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), "describe", CIRCLE, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table(&dir.path().join("out/describe/geometry.csv"));
    assert_eq!(rows.len(), 32);
    for r in &rows {
        assert!((num(&r["kappa"]) - 0.5).abs() < 1e-8);
        assert!((num(&r["energy"]) - 1.0).abs() < 1e-8);
        assert!((num(&r["embedding_hessian_sq"]) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn describe_sphere_identity_kappa_two_thirds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
seed = 1
manifold = { kind = "sphere", radius = 1.0 }
map = { kind = "identity" }
prior = { kind = "uniform" }
epsilons = [0.1]
resolution = [8, 16]
"#;
    let o = run_config(dir.path(), "describe", cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in table(&dir.path().join("out/describe/geometry.csv")) {
        assert!((num(&r["kappa"]) - 2.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn prior_solve_constant_kappa_gives_constant_omega() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CIRCLE.replace(r#"prior = { kind = "uniform" }"#, r#"prior = { kind = "solve-optimal" }"#);
    let o = run_config(dir.path(), "prior-solve", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table(&dir.path().join("out/prior-solve/prior.csv"));
    let omega: Vec<f64> = rows.iter().map(|r| num(&r["omega"])).collect();
    let expected = (2.0 * std::f64::consts::PI).powf(-0.5);
    for w in omega {
        assert!((w.abs() - expected).abs() < 1e-6);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/prior-solve/summary.json")).unwrap()).unwrap();
    assert!((summary["outputs"]["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-8);
    assert!(summary["outputs"]["normalized"].as_bool().unwrap());
}

#[test]
fn unit_weight_matches_unweighted_solve() {
    let alpha = |weighted: bool| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = r#"
seed = 1
manifold = { kind = "circle", radius = 1.0 }
map = { kind = "circle-power", k = 2 }
prior = { kind = "solve-optimal" }
epsilons = [0.1]
resolution = [48]
"#
        .to_string();
        if weighted {
            cfg.push_str("weight = { kind = \"constant\", value = 1.0 }\n");
        }
        assert_eq!(code(&run_config(dir.path(), "prior-solve", &cfg, &[])), 0);
        let s: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/prior-solve/summary.json")).unwrap())
                .unwrap();
        s["outputs"]["alpha"].as_f64().unwrap()
    };
    assert!((alpha(true) - alpha(false)).abs() < 1e-10);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = CIRCLE.replace("seed = 11\n", "");
    let o = run_config(dir.path(), "describe", &no_seed, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let unknown = format!("{CIRCLE}colour = \"red\"\n");
    assert_eq!(code(&run_config(dir.path(), "describe", &unknown, &[])), 2);

    let missing = format!("{CIRCLE}points = \"nowhere.csv\"\n");
    let o = run_config(dir.path(), "describe", &missing, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));

    let bad_eps = CIRCLE.replace("[0.04, 0.07, 0.1, 0.16]", "[0.05, -0.1]");
    assert_eq!(code(&run_config(dir.path(), "describe", &bad_eps, &[])), 2);

    assert_eq!(code(&run(&["describe"])), 2);
}

#[test]
fn reruns_are_byte_identical_and_mismatched_replays_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_config(dir.path(), "risk", CIRCLE, &[])), 0);
    let first = std::fs::read(dir.path().join("out/risk/risk.csv")).unwrap();
    let first_fit = std::fs::read(dir.path().join("out/risk/fit.csv")).unwrap();
    assert_eq!(code(&run_config(dir.path(), "risk", CIRCLE, &["--threads", "1"])), 0);
    assert_eq!(first, std::fs::read(dir.path().join("out/risk/risk.csv")).unwrap());
    assert_eq!(first_fit, std::fs::read(dir.path().join("out/risk/fit.csv")).unwrap());

    let o = run_config(dir.path(), "risk", CIRCLE, &["--seed", "12"]);
    assert_eq!(code(&o), 2);
    assert_eq!(first, std::fs::read(dir.path().join("out/risk/risk.csv")).unwrap());
    let changed = CIRCLE.replace("per-level = 4000", "per-level = 3000");
    assert_eq!(code(&run_config(dir.path(), "risk", &changed, &[])), 2);
    assert_eq!(code(&run_config(dir.path(), "risk", &changed, &["--force"])), 0);
    assert_ne!(first, std::fs::read(dir.path().join("out/risk/risk.csv")).unwrap());
}

#[test]
fn risk_reports_both_estimators_with_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), "risk", CIRCLE, &[]);
    assert_eq!(code(&o), 0);
    let fit = table(&dir.path().join("out/risk/fit.csv"));
    let kinds: Vec<&str> = fit.iter().map(|r| r["estimator"].as_str()).collect();
    assert_eq!(kinds, ["plugin", "second-order"]);
    for r in &fit {
        assert!((num(&r["a2_closed_form"]) - 1.0).abs() < 1e-10);
        assert!((num(&r["a4_closed_form"]) - 0.5).abs() < 1e-10);
    }
    let risk = table(&dir.path().join("out/risk/risk.csv"));
    assert_eq!(risk.len(), 8);
    assert!(risk.iter().all(|r| r["tube_safe"] == "true" && num(&r["rejected_mass"]) == 0.0));
}

#[test]
fn noise_beyond_tube_safety_warns_or_fails_strict() {
    let dir = tempfile::tempdir().unwrap();
    let wide = CIRCLE.replace("[0.04, 0.07, 0.1, 0.16]", "[0.04, 0.07, 0.1, 0.25]");
    let o = run_config(dir.path(), "risk", &wide, &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let risk = table(&dir.path().join("out/risk/risk.csv"));
    assert!(risk.iter().any(|r| r["tube_safe"] == "false"));
    assert_eq!(code(&run_config(dir.path(), "risk", &wide, &["--strict", "--force"])), 4);
}

#[test]
fn estimate_rows_and_outside_tube_markers() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "points.csv", "x0,x1\n1.1,0.0\n0.6,0.8\n3.0,0.0\n");
    let cfg = format!("{}points = \"points.csv\"\nestimators = [\"plugin\"]\n", CIRCLE.replace("[0.04, 0.07, 0.1, 0.16]", "[0.1]"));
    let o = run_config(dir.path(), "estimate", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table(&dir.path().join("out/estimate/estimates.csv"));
    assert_eq!(rows.len(), 3);

    // (1.1, 0): plug-in is the foot point, the second-order estimate shrinks
    // towards the origin by ε²/2, the exact posterior mean lies close to it.
    let r = &rows[0];
    assert_eq!(r["status"], "ok");
    assert!((num(&r["plugin0"]) - 1.0).abs() < 1e-12);
    assert!((num(&r["second_order0"]) - (1.0 - 0.005)).abs() < 1e-12);
    assert!((num(&r["exact0"]) - num(&r["second_order0"])).abs() < 1e-3);
    assert!(num(&r["exact1"]).abs() < 1e-10);

    let r = &rows[1];
    assert!((num(&r["plugin0"]) - 0.6).abs() < 1e-12 && (num(&r["plugin1"]) - 0.8).abs() < 1e-12);

    assert_eq!(rows[2]["status"], "outside-tube");
    assert!(num(&rows[2]["plugin0"]).is_nan());

    assert_eq!(code(&run_config(dir.path(), "estimate", &cfg, &["--strict", "--force"])), 4);
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
