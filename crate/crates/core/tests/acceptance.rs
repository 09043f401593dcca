//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p rfgf-core --test acceptance -- 1 7`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rfgf::curves::{error_curve, heatmap, limit_errors, SweepParam};
use rfgf::density::{density_1d, ExtractionOptions, Transform};
use rfgf::pencil::verify;
use rfgf::quadrature::logspace;
use rfgf::simulator::{
    aggregate, initial_errors, mean_std, ridge_sweep_seeds, sample_instance, simulate_parallel, spectrum,
    zero_fraction,
};
use rfgf::{solve_one_point, solve_two_point, Activation, Complex64 as C, ModelConfig};

type Check = std::result::Result<String, String>;

fn cfg(mu: f64, nu: f64, psi: f64, phi: f64, r: f64, s: f64, lambda: f64) -> ModelConfig {
    ModelConfig::new(mu, nu, psi, phi, r, s, lambda).expect("valid config")
}

/// The desk-scale reference configuration with a centered ReLU.
fn reference() -> ModelConfig {
    cfg(0.5, 0.3014, 1.4, 1.8, 1.0, 0.0, 0.01)
}

fn wide_sweep() -> ModelConfig {
    cfg(0.5, 0.3, 2.0, 3.0, 2.0, 0.4, 0.001)
}

fn bump_config() -> ModelConfig {
    cfg(0.5, 0.3, 6.0, 3.0, 2.0, 0.4, 1e-4)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Closed-form Stieltjes transform for `mu = 0`.
fn mp_g1(x: C, nu: f64, cc: f64) -> C {
    let nu2 = nu * nu;
    let b = x - nu2 * (cc - 1.0);
    let disc = (b * b - 4.0 * nu2 * x).sqrt();
    let r1 = (-b + disc) / (2.0 * nu2 * x);
    let r2 = (-b - disc) / (2.0 * nu2 * x);
    if r1.im > r2.im {
        r1
    } else {
        r2
    }
}

fn c1_marchenko_pastur() -> Check {
    let m = cfg(0.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.01);
    let mut worst_g: f64 = 0.0;
    for k in 0..100 {
        let x = C::new(-1.0 + 8.0 * k as f64 / 99.0, 1e-3 + 0.02 * (k % 7) as f64);
        let s = solve_one_point(x, &m, None).map_err(err)?;
        worst_g = worst_g.max((s.g1 - mp_g1(x, 1.0, 2.0)).norm());
    }
    ensure(worst_g < 1e-8, || format!("g1 deviation {worst_g:.2e}"))?;
    let meas = density_1d(Transform::G1, &m, 200, 1e-6).map_err(err)?;
    let (a, b) = ((2f64.sqrt() - 1.0).powi(2), (2f64.sqrt() + 1.0).powi(2));
    let mut worst_rho: f64 = 0.0;
    for (&u, &d) in meas.nodes.iter().zip(&meas.density) {
        let exact = if u > a && u < b { ((b - u) * (u - a)).sqrt() / (2.0 * PI * u) } else { 0.0 };
        worst_rho = worst_rho.max((d - exact).abs());
    }
    ensure(worst_rho < 1e-3, || format!("density deviation {worst_rho:.2e}"))?;
    Ok(format!("max |g1 err| {worst_g:.1e}, max |rho err| {worst_rho:.1e}"))
}

fn c2_residuals() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let (mut worst_res, mut worst_sym): (f64, f64) = (0.0, 0.0);
    for _ in 0..500 {
        let m = cfg(
            rng.random_range(0.0..2.0),
            rng.random_range(0.05..1.5),
            rng.random_range(0.3..4.0),
            rng.random_range(0.3..4.0),
            1.0,
            0.5,
            0.01,
        );
        let x = C::new(rng.random_range(-0.5..6.0), rng.random_range(1e-3..2.0));
        let yi: f64 = rng.random_range(1e-3..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let y = C::new(rng.random_range(-0.5..6.0), yi);
        let sx = solve_one_point(x, &m, None).map_err(err)?;
        let sy = solve_one_point(y, &m, None).map_err(err)?;
        let a = solve_two_point(x, y, &sx, &sy, &m).map_err(err)?;
        let b = solve_two_point(y, x, &sy, &sx, &m).map_err(err)?;
        let two = a.residuals(&sx, &sy, &m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst_res = worst_res.max(sx.residual_norm(&m)).max(sy.residual_norm(&m)).max(two);
        for (p, q) in a.as_array().iter().zip(b.as_array()) {
            worst_sym = worst_sym.max((p - q).norm() / (1.0 + p.norm()));
        }
    }
    ensure(worst_res < 1e-10, || format!("residual {worst_res:.2e}"))?;
    ensure(worst_sym < 1e-10, || format!("swap asymmetry {worst_sym:.2e}"))?;
    Ok(format!("500 points, max residual {worst_res:.1e}, max asymmetry {worst_sym:.1e}"))
}

fn c3_anchors() -> Check {
    let cases = [
        ("reference", reference(), Activation::relu_centered()),
        ("wide", wide_sweep(), Activation::hermite(0.5, 0.3)),
        ("bump", bump_config(), Activation::hermite(0.5, 0.3)),
    ];
    let mut out = Vec::new();
    for (name, m, act) in cases {
        let feat = m.r().powi(2) * (m.mu().powi(2) + m.nu().powi(2));
        let want_test = 1.0 + m.s().powi(2) + feat;
        let want_train = want_test + m.r().powi(2) * m.lambda();
        let curve = error_curve(&[0.0], &m, &ExtractionOptions::default()).map_err(err)?;
        let (test0, train0) = (curve.test[0], curve.train[0]);
        ensure((test0 - want_test).abs() < 5e-3, || format!("{name}: test(0) {test0} vs {want_test}"))?;
        ensure((train0 - want_train).abs() < 5e-3, || format!("{name}: train(0) {train0} vs {want_train}"))?;
        let sims = initial_errors(2000, &m, &act, 300, 10).map_err(err)?;
        let (tm, ts) = mean_std(&sims.iter().map(|e| e.test).collect::<Vec<_>>());
        let (rm, rs) = mean_std(&sims.iter().map(|e| e.train).collect::<Vec<_>>());
        ensure((tm - test0).abs() <= 2.0 * ts, || {
            format!("{name}: simulated test(0) {tm:.4}+-{ts:.4} vs {test0:.4}")
        })?;
        ensure((rm - train0).abs() <= 2.0 * rs, || {
            format!("{name}: simulated train(0) {rm:.4}+-{rs:.4} vs {train0:.4}")
        })?;
        out.push(format!("{name} test {test0:.4}/{tm:.4} train {train0:.4}/{rm:.4}"));
    }
    Ok(out.join("; "))
}

fn c4_full_curve() -> Check {
    let m = reference();
    let times = logspace(1e-2, 1e2, 40);
    let curve = error_curve(&times, &m, &ExtractionOptions::default()).map_err(err)?;
    let runs = simulate_parallel(1000, &m, &Activation::relu_centered(), 400, 10, &times).map_err(err)?;
    let agg = aggregate(&times, &runs);
    let mut worst: f64 = 0.0;
    for i in 0..times.len() {
        for (a, mean, sd, what) in [
            (curve.train[i], agg.train_mean[i], agg.train_std[i], "train"),
            (curve.test[i], agg.test_mean[i], agg.test_std[i], "test"),
        ] {
            let z = (a - mean).abs() / sd;
            worst = worst.max(z);
            ensure(z <= 2.0, || {
                format!("{what} at t = {:.3e}: analytic {a:.5} vs {mean:.5}+-{sd:.5}", times[i])
            })?;
        }
    }
    Ok(format!("40 times x 2 errors inside 2 sigma (max {worst:.2} sigma)"))
}

fn interior_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).collect()
}

fn c5_triple_descent() -> Check {
    let base = cfg(10.0, 1.0, 2.0, 1.0, 1.0, 0.5, 0.01);
    let phis = logspace(0.25, 8.0, 40);
    let limits: Vec<_> = phis
        .iter()
        .map(|&p| limit_errors(&base.with_phi(p).map_err(err)?).map_err(err))
        .collect::<Result<_, _>>()?;
    let test: Vec<f64> = limits.iter().map(|l| l.test_inf).collect();
    let maxima = interior_maxima(&test);
    for target in [1.0, 2.0] {
        let k = phis.iter().position(|&p| p > target).unwrap();
        ensure(maxima.iter().any(|&i| i == k - 1 || i == k), || {
            let at: Vec<f64> = maxima.iter().map(|&i| phis[i]).collect();
            format!("no test-error peak next to phi = {target}; maxima at {at:?}")
        })?;
    }
    let sims = ridge_sweep_seeds(2000, &base, &Activation::hermite(10.0, 1.0), &phis, 500, 10).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (i, (&p, l)) in phis.iter().zip(&limits).enumerate() {
        let (rm, rs, tm, ts) = sims[i];
        for (a, mean, sd, what) in [(l.train_inf, rm, rs, "train"), (l.test_inf, tm, ts, "test")] {
            let z = (a - mean).abs() / sd;
            worst = worst.max(z);
            ensure(z <= 2.0, || format!("{what} at phi = {p:.4}: limit {a:.5} vs {mean:.5}+-{sd:.5}"))?;
        }
    }
    let at: Vec<String> = maxima.iter().map(|&i| format!("{:.3}", phis[i])).collect();
    Ok(format!("peaks at phi = {}; ridge within 2 sigma (max {worst:.2})", at.join(", ")))
}

/// Index of a local maximum inside `window` that rises above the minimum
/// before it and falls below after it.
fn bump(times: &[f64], v: &[f64], window: (f64, f64)) -> Option<usize> {
    (1..v.len() - 1)
        .filter(|&j| times[j] >= window.0 && times[j] <= window.1)
        .filter(|&j| v[j] >= v[j - 1] && v[j] >= v[j + 1])
        .find(|&j| {
            let before = v[..j].iter().cloned().fold(f64::INFINITY, f64::min);
            let after = v[j + 1..].iter().cloned().fold(f64::INFINITY, f64::min);
            v[j] > before && v[j] > after
        })
}

fn c6_epoch_bump() -> Check {
    let m = bump_config();
    let times = logspace(1e-1, 1e6, 80);
    let curve = error_curve(&times, &m, &ExtractionOptions::default()).map_err(err)?;
    let j = bump(&times, &curve.test, (1.0, 1e4)).ok_or("analytic test curve has no bump in [1, 1e4]")?;
    let runs = simulate_parallel(100, &m, &Activation::hermite(0.5, 0.3), 600, 10, &times).map_err(err)?;
    let agg = aggregate(&times, &runs);
    let k = bump(&times, &agg.test_mean, (1.0, 1e4)).ok_or("simulated mean test curve has no bump in [1, 1e4]")?;
    Ok(format!("analytic peak at t = {:.3e}, simulated peak at t = {:.3e}", times[j], times[k]))
}

fn c7_limits() -> Check {
    let m = reference();
    let curve = error_curve(&[1e6], &m, &ExtractionOptions::default()).map_err(err)?;
    let l = limit_errors(&m).map_err(err)?;
    let dt = (curve.test[0] - l.test_inf).abs();
    let dr = (curve.train[0] - l.train_inf).abs();
    ensure(dt < 1e-3, || format!("test: curve {} vs limit {}", curve.test[0], l.test_inf))?;
    ensure(dr < 1e-3, || format!("train: curve {} vs limit {}", curve.train[0], l.train_inf))?;
    ensure(l.dv_rel_diff < 1e-6, || format!("dV/dx relative difference {:.2e}", l.dv_rel_diff))?;
    Ok(format!("|test diff| {dt:.1e}, |train diff| {dr:.1e}, dV rel {:.1e}", l.dv_rel_diff))
}

fn c8_mass() -> Check {
    let m = reference();
    let meas = density_1d(Transform::G1, &m, 200, 1e-6).map_err(err)?;
    let mass = meas.total_mass();
    ensure((mass - 1.0).abs() < 1e-3, || format!("reference mass {mass}"))?;
    let mut out = vec![format!("reference mass {mass:.6}")];
    for (psi, phi) in [(2.0, 1.0), (1.0, 2.0)] {
        let m = cfg(0.5, 0.3014, psi, phi, 1.0, 0.0, 0.01);
        let want = (1.0 - m.c()).max(0.0);
        let meas = density_1d(Transform::G1, &m, 200, 1e-6).map_err(err)?;
        let inst = sample_instance(2000, &m, &Activation::relu_centered(), 800).map_err(err)?;
        let zeros = zero_fraction(&spectrum(&inst).map_err(err)?, 1e-10);
        let c = m.c();
        ensure((meas.atom0 - want).abs() < 1e-3, || format!("c = {c}: atom {} vs {want}", meas.atom0))?;
        ensure((meas.total_mass() - 1.0).abs() < 1e-3, || format!("c = {c}: mass {}", meas.total_mass()))?;
        ensure((zeros - want).abs() < 1e-3, || format!("c = {c}: zero eigenvalue fraction {zeros} vs {want}"))?;
        out.push(format!("c = {c}: atom {:.5}, zero fraction {zeros:.5}", meas.atom0));
    }
    Ok(out.join("; "))
}

fn c9_pencil() -> Check {
    let m = reference();
    let (x, y) = (C::new(1.0, 0.2), C::new(2.0, 0.2));
    let big = verify(&m, x, y, 400, 20, 900).map_err(err)?;
    for b in &big.blocks {
        ensure(b.rel_err < 0.05, || format!("block {:?}: rel err {:.4}", b.block, b.rel_err))?;
    }
    let small = verify(&m, x, y, 100, 20, 900).map_err(err)?;
    let ratio = big.median_seed_deviation() / small.median_seed_deviation();
    ensure(ratio < 0.75, || format!("median deviation ratio {ratio:.3}"))?;
    Ok(format!(
        "max rel err {:.4} at d = 400; median seed deviation {:.4} -> {:.4} (ratio {ratio:.3})",
        big.max_rel_err(),
        small.median_seed_deviation(),
        big.median_seed_deviation()
    ))
}

fn c10_performance() -> Check {
    let m = reference();
    let start = Instant::now();
    let curve = error_curve(&logspace(1e-2, 1e2, 200), &m, &ExtractionOptions::default()).map_err(err)?;
    let one = start.elapsed();
    ensure(curve.test.iter().all(|v| v.is_finite()), || "non-finite curve".into())?;
    ensure(one < Duration::from_secs(60), || format!("curve took {one:?}"))?;
    let start = Instant::now();
    let h = heatmap(
        &wide_sweep(),
        SweepParam::Psi,
        &logspace(0.5, 10.0, 30),
        &logspace(1e-1, 1e5, 100),
        &ExtractionOptions::default(),
    )
    .map_err(err)?;
    let mesh = start.elapsed();
    ensure(mesh < Duration::from_secs(3600), || format!("heatmap took {mesh:?}"))?;
    Ok(format!(
        "curve {:.1} s, 30x100 heatmap {:.1} s ({} failed cells)",
        one.as_secs_f64(),
        mesh.as_secs_f64(),
        h.failed_cells()
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let all = [
        Criterion { id: 1, name: "marchenko-pastur oracle", budget: Some(Duration::from_secs(10)), run: c1_marchenko_pastur },
        Criterion { id: 2, name: "fixed-point residuals", budget: min(1), run: c2_residuals },
        Criterion { id: 3, name: "t = 0 anchors", budget: None, run: c3_anchors },
        Criterion { id: 4, name: "full-curve reproduction", budget: min(15), run: c4_full_curve },
        Criterion { id: 5, name: "infinite-time triple descent", budget: min(30), run: c5_triple_descent },
        Criterion { id: 6, name: "epoch-wise bump", budget: min(10), run: c6_epoch_bump },
        Criterion { id: 7, name: "limit consistency", budget: None, run: c7_limits },
        Criterion { id: 8, name: "mass sum rules", budget: None, run: c8_mass },
        Criterion { id: 9, name: "pencil verification", budget: min(20), run: c9_pencil },
        Criterion { id: 10, name: "performance envelope", budget: None, run: c10_performance },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in all.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("exceeded the {:.0} s budget", b.as_secs_f64())),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        failed += result.is_err() as usize;
        println!("{tag} [{:>2}] {} ({:.1} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
