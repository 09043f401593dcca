use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rfgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfgf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .chain(text.lines())
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .trim()
        .parse()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn coeffs_of_named_activations() {
    let o = rfgf(&["coeffs", "--activation", "relu-centered"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((value(&s, "mu") - 0.5).abs() < 1e-9);
    assert!((value(&s, "nu") - 0.3014).abs() < 1e-4);
    let s = stdout(&rfgf(&["coeffs", "--activation", "identity"]));
    assert!((value(&s, "mu") - 1.0).abs() < 1e-9);
    assert_eq!(value(&s, "nu"), 0.0);
    let s = stdout(&rfgf(&["coeffs", "--activation", "tanh"]));
    assert!((value(&s, "mu") - 0.61).abs() < 0.01);
    assert!((value(&s, "nu") - 0.1656).abs() < 1e-3);
}

#[test]
fn unknown_activation_is_a_validation_error() {
    let o = rfgf(&["coeffs", "--activation", "softsign"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(
        &cfg,
        "[model]\nmu = 0.5\nnu = 0.3\npsi = 2\nphi = 3\nr = 2\ns = 0.4\nlambda = 0.001\n\n[sweep]\nparam = psi\nrange = 0.5, 6\ncount = 4\nlog = true\n",
    )
    .unwrap();
    let first = stdout(&rfgf(&["--config", cfg.to_str().unwrap(), "--dump-config"]));
    let echoed = dir.path().join("echo.ini");
    fs::write(&echoed, &first).unwrap();
    let second = stdout(&rfgf(&["--config", echoed.to_str().unwrap(), "--dump-config"]));
    assert_eq!(first, second);
    assert!(first.contains("mu = 5e-1"));
}

#[test]
fn curve_starts_at_the_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rfgf(&["--out", out, "--set", "numerics.times=0, 1", "curve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("curve.csv"));
    assert_eq!(rows[0], ["t", "train", "test", "g", "h", "l"]);
    let s = stdout(&rfgf(&["coeffs"]));
    let (mu, nu) = (value(&s, "mu"), value(&s, "nu"));
    let train0: f64 = rows[1][1].parse().unwrap();
    let test0: f64 = rows[1][2].parse().unwrap();
    assert!((test0 - (1.0 + mu * mu + nu * nu)).abs() < 5e-3);
    assert!((train0 - (1.0 + 0.01 + mu * mu + nu * nu)).abs() < 5e-3);
}

#[test]
fn degenerate_and_ridgeless_inputs_fail_validation() {
    let o = rfgf(&["--set", "model.mu=0", "--set", "model.nu=0", "--set", "model.r=0", "curve"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rfgf(&["--set", "model.lambda=0", "limit"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rfgf(&["--set", "model.psi=-1", "limit"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn limit_prints_both_errors() {
    let s = stdout(&rfgf(&["limit"]));
    assert!(value(&s, "test_inf") > value(&s, "train_inf"));
    assert!(value(&s, "dV_rel_diff") < 1e-6);
}

#[test]
fn heatmap_writes_matrices_axes_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rfgf(&[
        "--out",
        out,
        "--set",
        "sweep.param=psi",
        "--set",
        "sweep.range=1, 2",
        "--set",
        "sweep.count=2",
        "--set",
        "numerics.times=logspace(0.1, 10, 3)",
        "--set",
        "numerics.grid_points=60",
        "--set",
        "numerics.grid_points_2d=60",
        "heatmap",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for kind in ["test", "train"] {
        let m = read_csv(&dir.path().join(format!("heatmap_{kind}.csv")));
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|r| r.len() == 3));
        assert!(m.iter().flatten().all(|v| v == "nan" || v.parse::<f64>().is_ok()));
    }
    assert_eq!(read_csv(&dir.path().join("heatmap_psi.csv")).len(), 3);
    assert_eq!(read_csv(&dir.path().join("heatmap_t.csv")).len(), 4);
    let gp = fs::read_to_string(dir.path().join("heatmap.gp")).unwrap();
    assert!(gp.contains("set datafile missing \"nan\""));
    assert!(gp.contains("log10 t"));
}

#[test]
fn heatmap_requires_a_sweep() {
    let o = rfgf(&["heatmap"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let o = rfgf(&[
            "--out",
            out,
            "--seed",
            "7",
            "--set",
            "simulate.d=20",
            "--set",
            "simulate.seeds=3",
            "--set",
            "numerics.times=0, 1, 10",
            "simulate",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let agg = fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
        let runs = fs::read_to_string(dir.path().join("simulate_runs.csv")).unwrap();
        (agg, runs)
    };
    let (a1, r1) = run();
    let (a2, r2) = run();
    assert_eq!(a1, a2);
    assert_eq!(r1, r2);
    assert!(a1.starts_with("t,train_mean,train_std,test_mean,test_std,n_seeds\n"));
    assert_eq!(r1.lines().count(), 1 + 3 * 3);
}

#[test]
fn euler_simulation_follows_exact_flow() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--set", "simulate.d=20", "--set", "simulate.seeds=1", "--set", "numerics.times=0.5, 1"];
    let exact = dir.path().join("exact");
    let euler = dir.path().join("euler");
    let mut a = vec!["--out", exact.to_str().unwrap()];
    a.extend(common);
    a.push("simulate");
    assert!(rfgf(&a).status.success());
    let mut b = vec!["--out", euler.to_str().unwrap(), "--set", "simulate.dt=0.001"];
    b.extend(common);
    b.push("simulate");
    assert!(rfgf(&b).status.success());
    let e = read_csv(&exact.join("simulate.csv"));
    let f = read_csv(&euler.join("simulate.csv"));
    for i in 1..e.len() {
        let (x, y): (f64, f64) = (e[i][3].parse().unwrap(), f[i][3].parse().unwrap());
        assert!((x - y).abs() < 1e-2 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn verify_pencil_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rfgf(&["--out", out, "verify-pencil", "--d", "100", "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("pencil.csv"));
    assert_eq!(rows[0], ["block", "measured_re", "measured_im", "predicted_re", "predicted_im", "rel_err", "seed_median_rel_err"]);
    assert_eq!(rows.len(), 8);
    let o = rfgf(&["verify-pencil", "--d", "50"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn density_and_solve_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rfgf(&["--out", out, "--set", "numerics.grid_points=80", "density", "--transform", "g1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!((value(&s, "total_mass") - 1.0).abs() < 1e-2);
    assert!(dir.path().join("density_g1.csv").exists());
    let o = rfgf(&["solve", "--x", "1+0.2i", "--y", "2+0.2i"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("q1=") && s.contains("W="));
    assert!(value(&s, "residual") < 1e-10);
}
