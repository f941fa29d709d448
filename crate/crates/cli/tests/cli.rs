use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stein-poisson"))
        .args(args)
        .current_dir(dir)
        .env_remove("STEIN_POISSON_EPS_TAIL")
        .env_remove("STEIN_POISSON_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `field` in a `field,value` report.
fn field(report: &str, name: &str) -> f64 {
    let line = report
        .lines()
        .find(|l| l.starts_with(&format!("{name},")))
        .unwrap_or_else(|| panic!("no {name}"));
    line[name.len() + 1..].parse().unwrap()
}

fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("four_halves.csv"), "0.5\n0.5\n0.5\n0.5\n").unwrap();
    std::fs::write(
        dir.path().join("nu.csv"),
        "index,prob\n0,0.25\n1,0.5\n2,0.25\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("mu.csv"), "index,prob\n1,0.5\n3,0.5\n").unwrap();
    dir
}

#[test]
fn squared_cost_factor_bound_at_one() {
    let dir = workspace();
    let o = run(&["factors", "--rho", "r2", "--lambda", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("field,value\n"));
    assert_eq!(field(&out, "bounds.b0"), 2.0);
}

#[test]
fn four_halves_certificate() {
    let dir = workspace();
    let o = run(&["poibin", "--probs", "four_halves.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let b1 = field(&stdout(&o), "bound1");
    assert!((b1 - (3.0 + 8.0 * (-0.25f64).exp())).abs() <= 1e-12);
    assert!((b1 - 9.2304).abs() < 5e-5);
}

#[test]
fn identical_laws_are_at_distance_zero() {
    let dir = workspace();
    for rho in ["r1", "r2"] {
        let o = run(
            &[
                "wasserstein",
                "--nu1",
                "nu.csv",
                "--nu2",
                "nu.csv",
                "--rho",
                rho,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(field(&stdout(&o), "distance"), 0.0);
    }
}

#[test]
fn quadratic_distance_between_files() {
    let dir = workspace();
    let o = run(&["w2", "--nu1", "nu.csv", "--nu2", "mu.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    // quantile coupling: 0→1 (1/4), 1→1 (1/4), 1→3 (1/4), 2→3 (1/4)
    let want = ((1.0 + 0.0 + 4.0 + 1.0) / 4.0f64).sqrt();
    assert!((field(&stdout(&o), "distance") - want).abs() <= 1e-12);
}

#[test]
fn malformed_input_reports_its_line() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.csv"), "index,prob\n0,0.5\n1,oops\n").unwrap();
    let o = run(&["w2", "--nu1", "bad.csv", "--nu2", "nu.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.csv: line 3"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = workspace();
    assert_eq!(
        run(&["factors", "--rho", "r9", "--lambda", "1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["scan", "--grid", "log:1:0.5:3"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(
            &[
                "wasserstein",
                "--nu1",
                "nu.csv",
                "--nu2",
                "nu.csv",
                "--rho",
                "rhalf"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        run(
            &[
                "factors",
                "--rho",
                "r1",
                "--lambda",
                "1",
                "--eps-tail",
                "0.5"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn non_integral_second_moment_is_a_violation() {
    let dir = workspace();
    std::fs::write(dir.path().join("odd.csv"), "0.3\n0.6\n").unwrap();
    assert_eq!(
        run(&["poibin", "--probs", "odd.csv"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn json_carries_the_schema_version() {
    let dir = workspace();
    let o = run(
        &["--format", "json", "scan", "--grid", "0.5,2,40"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "scan");
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn table_output_has_a_header() {
    let dir = workspace();
    let o = run(&["conjecture", "--family", "p=0.5:n=4,8"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("p,n,mu,"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn output_is_deterministic() {
    let dir = workspace();
    let args = [
        "simulate", "--i", "2", "--lambda", "1.5", "--paths", "3000", "--seed", "17",
    ];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let f = run(&["factors", "--rho", "rhalf", "--lambda", "3"], dir.path());
    assert_eq!(
        f.stdout,
        run(&["factors", "--rho", "rhalf", "--lambda", "3"], dir.path()).stdout
    );
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = workspace();
    let base = ["simulate", "--i", "1", "--lambda", "1", "--paths", "500"];
    let flag = run(&[&base[..], &["--seed", "99"]].concat(), dir.path());
    let env = Command::new(env!("CARGO_BIN_EXE_stein-poisson"))
        .args(base)
        .current_dir(dir.path())
        .env("STEIN_POISSON_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
}

#[test]
fn output_file_matches_stdout() {
    let dir = workspace();
    let direct = run(&["poibin", "--probs", "four_halves.csv"], dir.path());
    let o = run(
        &["poibin", "--probs", "four_halves.csv", "-o", "cert.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("cert.csv")).unwrap(),
        direct.stdout
    );
}
