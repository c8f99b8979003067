use std::path::Path;
use std::process::{Command, Output};

use pinchlab::odecmp::Profile1D;
use pinchlab::report::without_timestamps;

fn pinchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinchlab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: &str = "residual_pairs = 20\ndistortion_pairs = 200\nconvexity_pairs = 40\nantipode_samples = 40\n";

#[test]
fn gen_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s4.off");
    let o = pinchlab(&["gen", "icosphere", "--subdiv", "4", "-o", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mesh = pinchlab::geometry::load_off(&out).unwrap();
    assert_eq!(mesh.num_vertices(), 2562);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["vertices"], 2562);
}

#[test]
fn gen_spheroid_has_positive_curvature() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.off");
    let o = pinchlab(&["gen", "spheroid", "--ratio", "1.2", "--subdiv", "3", "-o", path(&out)]);
    assert_eq!(code(&o), 0);
    assert!(pinchlab::geometry::load_off(&out).unwrap().curvature().k_min > 0.0);
}

#[test]
fn gen_dumbbell_warns() {
    let o = pinchlab(&["gen", "dumbbell", "--neck", "0.3", "--subdiv", "3"]);
    assert_eq!(code(&o), 0);
    let err = stderr(&o);
    assert!(err.contains("hypothesis violated: K_min < 0"), "{err}");
    assert!(err.contains("\"hypothesis_violated\": true"));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("OFF"));
}

#[test]
fn gen_validation_errors() {
    assert_eq!(code(&pinchlab(&["gen", "spheroid", "--subdiv", "2"])), 2);
    assert_eq!(code(&pinchlab(&["gen", "spheroid", "--ratio", "9", "--subdiv", "2"])), 2);
    assert_eq!(code(&pinchlab(&["gen", "icosphere", "--subdiv", "12"])), 2);
    assert_eq!(code(&pinchlab(&["gen", "torus"])), 2);
    assert_eq!(code(&pinchlab(&["--help"])), 0);
}

fn write_mesh(dir: &Path, args: &[&str]) -> String {
    let out = dir.join(format!("{}.off", args.join("_")));
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend(["-o", path(&out)]);
    assert_eq!(code(&pinchlab(&full)), 0);
    path(&out).to_string()
}

#[test]
fn diagnose_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), &["icosphere", "--subdiv", "3"]);
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, QUICK).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = pinchlab(&["diagnose", &mesh, "--config", path(&cfg), "--seed", "11", "-o", path(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(without_timestamps(&a).unwrap(), without_timestamps(&b).unwrap());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["provenance"]["seed"], 11);
    assert_eq!(v["provenance"]["config"]["residual_pairs"], 20);
}

#[test]
fn diagnose_k_max_one() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), &["icosphere", "--subdiv", "2"]);
    let o = pinchlab(&["diagnose", &mesh, "--k-max", "1", "--residual-pairs", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pinching"].as_array().unwrap().len(), 1);
    assert_eq!(v["pinching"][0]["k"], 1);
}

#[test]
fn diagnose_hypothesis_guard() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), &["dumbbell", "--neck", "0.3", "--subdiv", "2"]);
    let o = pinchlab(&["diagnose", &mesh]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hypothesis violated"));
    let o = pinchlab(&["diagnose", &mesh, "--force", "--k-max", "2", "--residual-pairs", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["surface"]["hypothesis_violated"], true);
}

#[test]
fn diagnose_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), &["icosphere", "--subdiv", "2"]);
    assert_eq!(code(&pinchlab(&["diagnose", "/nonexistent/mesh.off"])), 2);
    let bad = dir.path().join("bad.off");
    std::fs::write(&bad, "OFF\n3 1 0\n0 0 0\n1 0 x\n0 1 0\n3 0 1 2\n").unwrap();
    let o = pinchlab(&["diagnose", path(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert_eq!(code(&pinchlab(&["diagnose", &mesh, "--k-max", "5"])), 2);
    let cfg = dir.path().join("slow.toml");
    std::fs::write(&cfg, "max_iterations = 1\n").unwrap();
    let o = pinchlab(&["diagnose", &mesh, "--config", path(&cfg)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_pinchlab"))
        .args(["diagnose", &mesh])
        .env("PINCHLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_cap_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), &["spheroid", "--ratio", "1.1", "--subdiv", "2"]);
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_pinchlab"))
            .args(["diagnose", &mesh, "--residual-pairs", "10"])
            .env("PINCHLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        without_timestamps(&String::from_utf8(o.stdout).unwrap()).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn sweep_outputs_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = pinchlab(&[
        "sweep", "spheroid", "--grid", "0.9,1.0,1.1", "--subdiv", "2", "--residual-pairs", "10", "-o", path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let widths: Vec<usize> = csv.lines().map(|l| l.split(',').count()).collect();
    assert_eq!(widths.len(), 4);
    assert!(widths.iter().all(|&w| w == widths[0]));
    assert!(out.join("point_02.json").exists() && out.join("sweep.json").exists());
    let trends: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(trends["points"], 3);

    assert_eq!(code(&pinchlab(&["sweep", "spheroid", "--grid", "1.0", "-o", path(&out)])), 2);
    assert_eq!(code(&pinchlab(&["sweep", "spheroid", "--grid", "1.1,1.0,1.2", "-o", path(&out)])), 2);
}

#[test]
fn forced_dumbbell_sweep_flags_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("db");
    let o = pinchlab(&[
        "sweep", "dumbbell", "--range", "0.3:0.5:0.1", "--subdiv", "2", "--force", "--residual-pairs", "10", "-o",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let col = rd.headers().unwrap().iter().position(|h| h == "hypothesis_violated").unwrap();
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[col] == "true"));
}

fn write_profile(dir: &Path, name: &str, length: f64, f: impl Fn(f64) -> f64) -> String {
    let p = Profile1D::from_fn(length, (length / 0.001).round() as usize, f).unwrap();
    let out = dir.join(name);
    std::fs::write(&out, p.to_csv()).unwrap();
    path(&out).to_string()
}

#[test]
fn ode_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cos = write_profile(dir.path(), "cos.csv", std::f64::consts::PI, f64::cos);
    let o = pinchlab(&["ode", &cos, "--mode", "cauchy", "--a", "1", "--b", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bound_ok"], true);

    let pert = write_profile(dir.path(), "pert.csv", std::f64::consts::PI, |t| t.cos() + 0.01 * (3.0 * t).sin());
    let o = pinchlab(&["ode", &pert, "--mode", "cauchy", "--a", "1", "--b", "0"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let lib = pinchlab::odecmp::compare_cauchy(&Profile1D::read_csv(&pert).unwrap(), 1.0, 0.0);
    for (key, expected) in [("eps", lib.eps), ("sup_value", lib.sup_value), ("eta", lib.eta)] {
        assert!((v[key].as_f64().unwrap() - expected).abs() <= 1e-6, "{key}");
    }
    assert!((v["eps"].as_f64().unwrap() - 0.1003).abs() <= 0.05 * 0.1003);

    let long = write_profile(dir.path(), "long.csv", 3.14, f64::cos);
    let o = pinchlab(&["ode", &long, "--mode", "boundary", "--a", "1", "--b", "-1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("near-conjugate"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,v\n0,1\n0.1,oops\n").unwrap();
    let o = pinchlab(&["ode", path(&bad), "--mode", "cauchy", "--a", "1", "--b", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}
