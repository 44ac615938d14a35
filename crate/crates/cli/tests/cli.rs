use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use renewal_core::bounds::{assemble_certificate, BoundCertificate};
use renewal_core::{BoundParams, InterArrivalModel, UniformComponent};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn renewal(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn bound_writes_the_assembled_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let o = renewal(&["bound", "--config", &config("exponential.json")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let got: BoundCertificate =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    let m = InterArrivalModel::exponential(1.0).unwrap();
    let comp = UniformComponent::new(1.0, 1.0, 2.0 * (-2f64).exp()).unwrap();
    let want = assemble_certificate(&m, &comp, &BoundParams::new(0.6, 0.2, 0.002).unwrap(), None).unwrap();
    assert_eq!(got, want);
    // stdout carries the same summary as the file
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, summary(dir.path()));
    assert_eq!(printed["status"], "ok");
}

#[test]
fn running_example_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = renewal(&["bound", "--config", &config("exponential_running_example.json")], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let s = summary(dir.path());
    assert_eq!(s["status"], "infeasible");
    assert!(s["details"]["q"].as_f64().unwrap() > 1.0);
    // the certificate is still written, flagged invalid
    let cert: BoundCertificate =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(!cert.valid);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"distribution": {"kind": "uniform", "lower": 1, "upper": 2}, "simulation": {"replicas": "many"}}"#,
    );
    let o = renewal(&["simulate", "--config", &bad], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let msg = summary(dir.path())["message"].as_str().unwrap().to_string();
    assert!(msg.contains("simulation.replicas") && msg.contains("line 1"), "{msg}");

    let truncated = write(dir.path(), "trunc.json", "{\"distribution\": ");
    assert_eq!(renewal(&["bound", "--config", &truncated], dir.path()).status.code(), Some(3));
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"distribution": {"kind": "exponential", "rate": 1}, "paramz": {}}"#,
    );
    let o = renewal(&["bound", "--config", &unknown], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(summary(dir.path())["message"].as_str().unwrap().contains("paramz"));
    let missing = dir.path().join("nope.json");
    let o = renewal(&["bound", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(renewal(&["frobnicate"], dir.path()).status.code(), Some(64));
    assert_eq!(renewal(&["bound", "--bogus"], dir.path()).status.code(), Some(64));
    assert_eq!(renewal(&["bound", "--threads", "0"], dir.path()).status.code(), Some(64));
    // a command needing a config, run without one
    assert_eq!(renewal(&["bound"], dir.path()).status.code(), Some(64));
    let help = Command::new(env!("CARGO_BIN_EXE_renewal")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("optimize"));
}

#[test]
fn verify_uniform_with_seed_42_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = renewal(&["verify", "--config", &config("uniform.json")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 42);
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for part in ["step1 moment", "supermartingale", "step2", "tail", "total variation", "window inequality", "geometric", "marginal"] {
        assert!(names.iter().any(|n| n.contains(part)), "no {part} check in {names:?}");
    }
}

#[test]
fn simulation_needs_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"distribution": {"kind": "uniform", "lower": 1, "upper": 2}, "simulation": {"replicas": 1000}}"#,
    );
    assert_eq!(renewal(&["simulate", "--config", &cfg], dir.path()).status.code(), Some(3));
    assert_eq!(renewal(&["report"], dir.path()).status.code(), Some(3));
}

#[test]
fn pipeline_from_stored_certificate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{
          "distribution": {"kind": "uniform", "lower": 1, "upper": 2,
                           "component": {"c": 1.5, "L": 0.5, "eta_tilde": 0.9}},
          "params": {"beta": 1.0, "delta": 0.3, "theta": 0.01},
          "simulation": {"replicas": 2000, "seed": 5, "x": [3.0],
                         "t_grid": {"min": 0, "max": 30, "points": 31},
                         "renewal": {"delay": 3.0, "h": 1.0, "t_grid": [0, 0.5, 1, 1.5, 2, 3, 4, 6]}}
        }"#,
    );
    let a = dir.path().join("a");
    assert_eq!(renewal(&["bound", "--config", &cfg], &a).status.code(), Some(0));

    // only-bound report first
    let o = renewal(&["report"], &a);
    assert_eq!(o.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert!(rep["renewal_fit"].is_null() && rep["tail_fits"].as_array().unwrap().is_empty());
    assert!(rep["certified_rate"].as_f64().unwrap() > 0.0);

    // the simulation reads certificate.json when params are absent
    let bare = write(
        dir.path(),
        "bare.json",
        &std::fs::read_to_string(&cfg).unwrap().replace(r#""params": {"beta": 1.0, "delta": 0.3, "theta": 0.01},"#, ""),
    );
    assert_eq!(renewal(&["simulate", "--config", &bare], &a).status.code(), Some(0));
    assert_eq!(renewal(&["report"], &a).status.code(), Some(0));

    let b = dir.path().join("b");
    assert_eq!(renewal(&["simulate", "--config", &cfg], &b).status.code(), Some(0));
    std::fs::copy(a.join("certificate.json"), b.join("certificate.json")).unwrap();
    assert_eq!(renewal(&["report"], &b).status.code(), Some(0));
    for f in ["tail.csv", "renewal.csv", "traces.json", "report.json", "fit.csv", "bound_vs_empirical.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let tail = std::fs::read_to_string(a.join("tail.csv")).unwrap();
    assert!(tail.starts_with("x,t,survival,stderr,bound\n"));
    // bound is blank before x
    assert!(tail.lines().nth(1).unwrap().ends_with(','));

    // the seed flag overrides the config
    let c = dir.path().join("c");
    assert_eq!(renewal(&["simulate", "--config", &cfg, "--seed", "6"], &c).status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("tail.csv")).unwrap(), std::fs::read(c.join("tail.csv")).unwrap());
    assert_eq!(summary(&c)["details"]["seed"], 6);
}

#[test]
fn optimize_reports_infeasible_search() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{
          "distribution": {"kind": "exponential", "rate": 1,
                           "component": {"c": 1.0, "L": 1.0, "eta_tilde": 0.2706705664732254}},
          "search": {"beta": {"min": 0.5, "max": 0.9, "points": 3},
                     "delta": {"min": 0.05, "max": 0.05, "points": 1},
                     "theta": {"min": 1.0, "max": 1.0, "points": 1}, "budget": 10}
        }"#,
    );
    let o = renewal(&["optimize", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(summary(dir.path())["details"]["best_q"].as_f64().unwrap() >= 1.0);
}

#[test]
fn optimize_writes_grid_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{
          "distribution": {"kind": "exponential", "rate": 1,
                           "component": {"c": 1.0, "L": 1.0, "eta_tilde": 0.2706705664732254}},
          "search": {"beta": {"min": 0.01, "max": 0.9, "points": 6},
                     "delta": {"min": 0.1, "max": 0.9, "points": 5},
                     "theta": {"min": 0.0001, "max": 0.05, "points": 5},
                     "refine_top": 2, "budget": 40}
        }"#,
    );
    let o = renewal(&["optimize", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let grid = std::fs::read_to_string(dir.path().join("gridpoints.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("beta,delta,theta,c,L,eta_tilde,q,rate"));
    assert_eq!(lines.count(), 6 * 5 * 5);
    let cert: BoundCertificate =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(cert.valid);
    assert_eq!(summary(dir.path())["details"]["rate"].as_f64().unwrap(), cert.rate);
}
