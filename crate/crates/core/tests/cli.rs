use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn localstar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localstar"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .current_dir(dir)
        .env("LOCALSTAR_THREADS", "2")
        .output()
        .expect("run localstar")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn build_theta_default_plane() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["build-theta"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = json(&out);
    assert_eq!(s["checks"]["support_in_unit_ball"]["passed"], true);
    assert_eq!(s["checks"]["support_in_unit_ball"]["max_outside"], 0.0);
    assert_eq!(s["checks"]["coincidence_on_half_ball"]["passed"], true);
    assert_eq!(s["theta_identically_zero"], false);
    let csv = std::fs::read_to_string(dir.path().join("theta.csv")).unwrap();
    assert!(csv.starts_with("x0,x1,theta_01,field0_0,field0_1,field1_0,field1_1\n"));
    assert_eq!(csv.lines().count(), 1 + 128 * 128);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("theta.json")).unwrap()).unwrap();
    assert_eq!(meta["grid"]["fiber_points"], 128);
    assert!(meta["tolerances"]["support"].is_number());
}

#[test]
fn build_theta_zero_gamma() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "theta.gamma = 0,0;0,0\n");
    let out = localstar(dir.path(), &["build-theta", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = json(&out);
    assert_eq!(s["presentation"], "companion");
    assert_eq!(s["theta_identically_zero"], true);
}

#[test]
fn non_skew_theta_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "theta.matrix = 0,1;1,0\n");
    let out = localstar(dir.path(), &["build-theta", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("skew"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    for text in ["grid.fiber = 96\n", "tolerance.shell = 0\n", "no.such.key = 1\n", "f = sin(\n"] {
        let cfg = config(dir.path(), text);
        let out = localstar(dir.path(), &["product", "--level", "fiber", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}: {}", stderr(&out));
    }
    let out = localstar(dir.path(), &["product", "--level", "fiber", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fiber_product_without_deformation_is_pointwise() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "theta.scale = 0\ngrid.fiber = 64\n");
    let out = localstar(dir.path(), &["product", "--level", "fiber", "--config", &cfg, "--f", "exp(i*x) * bump(x, y - 0.1, 0.3, 2.55)", "--g", "gauss(x + 0.2, y, 0.5) + 2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["max_deviation_from_pointwise"], 0.0);
    let csv = std::fs::read_to_string(dir.path().join("product-fiber.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x0,x1,re,im"));
    assert_eq!(csv.lines().count(), 1 + 64 * 64);
}

#[test]
fn unknown_level_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["product", "--level", "galaxy"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn level_m_commutator_confined_to_v() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["product", "--level", "m"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = json(&out);
    assert_eq!(s["commutator_outside_v"], 0.0);
    assert!(s["points_outside_v"].as_u64().unwrap() > 0);
    assert!(s["commutator_inside_v"].as_f64().unwrap() > 1e-3);
    let csv = std::fs::read_to_string(dir.path().join("product-m.csv")).unwrap();
    let mut outside = 0;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        if v[5] == 0.0 {
            assert_eq!(v[4], 0.0, "{line}");
            outside += 1;
        }
    }
    assert!(outside > 0);
}

#[test]
fn tower_levels_run_on_the_disk() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "geometry = hyperbolic\ntower.base = 0.1,-0.2\ntheta.scale = 0.004\ngrid.base = 16\n");
    for level in ["tm", "mxm", "m"] {
        let out = localstar(dir.path(), &["product", "--level", level, "--config", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{level}: {}", stderr(&out));
    }
}

#[test]
fn verify_filter_runs_one_suite() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["verify", "--suite", "prop-3.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = json(&out);
    let suites = r["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 1);
    assert_eq!(suites[0]["suite"], "support-inclusion");
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn tolerance_override_forces_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "tolerance.override = 1e-30\n");
    let out = localstar(dir.path(), &["verify", "--suite", "psi,flows", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(r["passed"], false);
    assert!(r["suites"].as_array().unwrap().iter().all(|s| s["passed"] == false));
}

#[test]
fn unknown_suite_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["verify", "--suite", "prop-9.9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = localstar(dir.path(), &["verify", "--suite", "psi,support-inclusion", "--seed", "11"]);
    let first = std::fs::read(dir.path().join("verify.json")).unwrap();
    let b = localstar(dir.path(), &["verify", "--suite", "psi,support-inclusion", "--seed", "11"]);
    let second = std::fs::read(dir.path().join("verify.json")).unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, second);
}

#[test]
fn product_artifacts_are_bitwise_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "grid.fiber = 64\n");
    localstar(dir.path(), &["product", "--level", "fiber", "--config", &cfg]);
    let first = std::fs::read(dir.path().join("product-fiber.csv")).unwrap();
    let meta = std::fs::read(dir.path().join("product-fiber.json")).unwrap();
    localstar(dir.path(), &["product", "--level", "fiber", "--config", &cfg]);
    assert_eq!(first, std::fs::read(dir.path().join("product-fiber.csv")).unwrap());
    assert_eq!(meta, std::fs::read(dir.path().join("product-fiber.json")).unwrap());
}

#[test]
fn sweep_classical_row_and_order() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "norms.density = 1\nnorms.compactum = 0.1,0:0.1,0\n");
    let out = localstar(dir.path(), &["sweep", "--param", "hbar", "--values", "0,0.2,0.1,0.05", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = json(&out);
    let rows = s["rows"].as_array().unwrap();
    let classical = &rows[0];
    assert_eq!(classical["product_deviation"], 0.0);
    assert_eq!(classical["commutator"], 0.0);
    let (norm, sup) = (classical["seminorm"].as_f64().unwrap(), classical["sup_norm"].as_f64().unwrap());
    assert!((norm - sup).abs() <= 0.02 * sup, "{norm} vs {sup}");
    assert!(s["semiclassical_order"].as_f64().unwrap() >= 1.9);
    let csv = std::fs::read_to_string(dir.path().join("sweep-hbar.csv")).unwrap();
    assert!(csv.starts_with("hbar,product_deviation,commutator,semiclassical_residual,seminorm,sup_norm\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn sweep_rejects_empty_values() {
    let dir = TempDir::new().unwrap();
    for values in ["", "[]", " , "] {
        let out = localstar(dir.path(), &["sweep", "--param", "hbar", "--values", values]);
        assert_eq!(out.status.code(), Some(2), "{values:?}");
    }
    let out = localstar(dir.path(), &["sweep", "--param", "theta", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seminorm_reports_truncation_curve() {
    let dir = TempDir::new().unwrap();
    let out = localstar(dir.path(), &["seminorm", "--compactum", "-0.5,-0.5:0.5,0.5", "--basis", "16"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = json(&out);
    let curve = s["truncation_curve"].as_array().unwrap();
    assert_eq!(curve.len(), 3);
    assert_eq!(curve[2][0], 16);
    assert_eq!(curve[2][1], s["estimate"]);
    assert_eq!(s["diagnostics"]["basis"]["size"], 256);
    assert!(dir.path().join("seminorm.json").exists());
}

#[test]
fn bad_thread_count_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_localstar")).args(["build-theta", "--out"]).arg(dir.path()).env("LOCALSTAR_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
