//! Command implementations and exit-code mapping.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use rfgf::curves::{self, SweepParam};
use rfgf::density::{density_2d_on, locate_support_with, support_window, Samples, Transform, Transform2};
use rfgf::model::DEFAULT_HERMITE_NODES;
use rfgf::simulator::{self, SeedCurve};
use rfgf::{hermite_coefficients, pencil, stieltjes, Activation, Complex64, Error};

use crate::config::{complex_arg, RunConfig, SweepName};

/// Process exit status for a failed command.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(err) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match err {
        Error::InvalidConfig(_) | Error::NonCenteredActivation { .. } | Error::Ridgeless | Error::MemoryBudget { .. } => 2,
        Error::BranchSelection { .. }
        | Error::AmbiguousBranch { .. }
        | Error::SolverDivergence { .. }
        | Error::DegeneratePoint { .. }
        | Error::Continuation { .. }
        | Error::LinearAlgebra(_) => 3,
        Error::Quadrature(_)
        | Error::EmptySupport
        | Error::Extraction { .. }
        | Error::NegativeMass { .. }
        | Error::UnreliableAtom { .. }
        | Error::MeshFailures { .. } => 4,
        Error::SeedFailures { .. } => 5,
    }
}

fn fmt_c(z: Complex64) -> String {
    format!("{:e}{:+e}i", z.re, z.im)
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

fn output(cfg: &RunConfig, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(&cfg.output.directory)
        .with_context(|| format!("creating {}", cfg.output.directory.display()))?;
    let path = cfg.output.directory.join(format!("{}{name}", cfg.output.prefix));
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn finish(path: PathBuf, mut w: BufWriter<File>) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn coeffs(cfg: &RunConfig, activation: Option<&str>) -> Result<()> {
    let (mu, nu) = match activation {
        Some(name) => {
            let h = hermite_coefficients(&Activation::by_name(name)?, DEFAULT_HERMITE_NODES)?;
            (h.mu, h.nu)
        }
        None => {
            let m = cfg.model_config()?;
            (m.mu(), m.nu())
        }
    };
    // Quadrature noise below 1e-12 is reported as an exact zero.
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    println!("mu={} nu={}", clean(mu), clean(nu));
    Ok(())
}

pub fn solve(cfg: &RunConfig, x: &str, y: Option<&str>) -> Result<()> {
    let m = cfg.model_config()?;
    let x = complex_arg(x)?;
    let sx = stieltjes::solve_one_point(x, &m, None)?;
    println!("x={}", fmt_c(x));
    for (k, v) in [("g1", sx.g1), ("h4", sx.h4), ("t1", sx.t1), ("g3", sx.g3), ("h1", sx.h1)] {
        println!("{k}={}", fmt_c(v));
    }
    println!("residual={:e}", sx.residual_norm(&m));
    let two = match y {
        Some(y) => {
            let y = complex_arg(y)?;
            let sy = stieltjes::solve_one_point(y, &m, None)?;
            let q = stieltjes::solve_two_point(x, y, &sx, &sy, &m)?;
            println!("y={}", fmt_c(y));
            for (k, v) in [("q1", q.q1), ("q2", q.q2), ("q4", q.q4), ("q5", q.q5)] {
                println!("{k}={}", fmt_c(v));
            }
            Some(q)
        }
        None => None,
    };
    let t = stieltjes::evaluate_transforms(&sx, two.as_ref(), &m);
    println!("K={}\nL0={}\nV={}", fmt_c(t.k), fmt_c(t.l0), fmt_c(t.v));
    if let (Some(h0), Some(w)) = (t.h0, t.w) {
        println!("H0={}\nW={}", fmt_c(h0), fmt_c(w));
    }
    Ok(())
}

pub fn density(cfg: &RunConfig, transform: &str) -> Result<()> {
    let m = cfg.model_config()?;
    let opts = cfg.extraction();
    let lower = transform.to_ascii_lowercase();
    if lower == "h0" || lower == "w" {
        let support = locate_support_with(&m, 1e-12 * support_window(&m), opts.density_floor, opts.scan_points)?;
        let both = density_2d_on(&m, &support, opts.grid_points_2d, &opts)?;
        let (meas, name) = match lower.as_str() {
            "h0" => (&both.h0, "H0"),
            _ => (&both.w, "W"),
        };
        debug_assert!(matches!(meas.transform, Transform2::H0 | Transform2::W));
        let (pm, mut wm) = output(cfg, &format!("density_{name}.csv"))?;
        let (pa, mut wa) = output(cfg, &format!("density_{name}_axis.csv"))?;
        meas.write_csv(&mut wm, &mut wa)?;
        finish(pm, wm)?;
        finish(pa, wa)?;
        println!("total_mass={:e} mass_budget={:e}", meas.total_mass(), meas.mass_budget);
        return Ok(());
    }
    let t = Transform::parse(transform)?;
    let meas = Samples::new(&m, opts.grid_points, &opts)?.measure(t, &m)?;
    let (p, mut w) = output(cfg, &format!("density_{}.csv", t.name()))?;
    meas.write_csv(&mut w)?;
    finish(p, w)?;
    println!(
        "atom0={:e} continuous_mass={:e} total_mass={:e}",
        meas.atom0,
        meas.continuous_mass(),
        meas.total_mass()
    );
    Ok(())
}

pub fn curve(cfg: &RunConfig) -> Result<()> {
    let m = cfg.model_config()?;
    let c = curves::error_curve(&cfg.times(), &m, &cfg.extraction()).with_context(|| format!("at {m}"))?;
    let (p, mut w) = output(cfg, "curve.csv")?;
    c.write_csv(&mut w)?;
    finish(p, w)
}

pub fn limit(cfg: &RunConfig) -> Result<()> {
    let m = cfg.model_config()?;
    let l = curves::limit_errors(&m).with_context(|| format!("at {m}"))?;
    println!("test_inf={:e}", l.test_inf);
    println!("train_inf={:e}", l.train_inf);
    println!("K={:e}\nW={:e}\nV={:e}", l.k, l.w, l.v);
    println!("dV={:e}\ndV_fd={:e}\ndV_rel_diff={:e}", l.dv, l.dv_fd, l.dv_rel_diff);
    Ok(())
}

fn write_matrix(cfg: &RunConfig, name: &str, rows: &[Vec<f64>]) -> Result<()> {
    let (p, mut w) = output(cfg, name)?;
    for r in rows {
        writeln!(w, "{}", r.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(","))?;
    }
    finish(p, w)
}

fn write_axis(cfg: &RunConfig, name: &str, header: &str, values: &[f64]) -> Result<()> {
    let (p, mut w) = output(cfg, name)?;
    writeln!(w, "{header}")?;
    for v in values {
        writeln!(w, "{}", fmt_f(*v))?;
    }
    finish(p, w)
}

/// Gnuplot expression mapping a matrix index column to the axis value.
fn axis_map(values: &[f64], log: bool, column: &str) -> (String, &'static str) {
    let n = values.len();
    if n < 2 {
        return (format!("({column})"), "index");
    }
    let (a, b) = (values[0], values[n - 1]);
    if log {
        let (la, lb) = (a.log10(), b.log10());
        (format!("({la:e} + {column} * {:e})", (lb - la) / (n - 1) as f64), "log10 ")
    } else {
        (format!("({a:e} + {column} * {:e})", (b - a) / (n - 1) as f64), "")
    }
}

pub fn heatmap(cfg: &RunConfig) -> Result<()> {
    let m = cfg.model_config()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("heatmap needs a [sweep] section".into()))?;
    if sweep.param == SweepName::T {
        return Err(Error::InvalidConfig("heatmap rows sweep psi, phi or lambda; time is the column axis".into()).into());
    }
    let param = SweepParam::parse(sweep.param.name())?;
    let values = sweep.values();
    let times = cfg.numerics.times.values();
    let h = curves::heatmap(&m, param, &values, &times, &cfg.extraction())?;

    let pre = &cfg.output.prefix;
    write_matrix(cfg, "heatmap_test.csv", &h.test)?;
    write_matrix(cfg, "heatmap_train.csv", &h.train)?;
    write_axis(cfg, &format!("heatmap_{}.csv", param.name()), param.name(), &values)?;
    write_axis(cfg, "heatmap_t.csv", "t", &times)?;

    let uniform_t = !matches!(cfg.numerics.times, crate::config::Grid::List(_));
    let (xmap, xlab) = if uniform_t {
        axis_map(&times, cfg.times_are_log(), "$1")
    } else {
        ("($1)".into(), "index")
    };
    let (ymap, ylab) = axis_map(&values, sweep.log, "$2");
    let (p, mut w) = output(cfg, "heatmap.gp")?;
    writeln!(w, "# rows: {} ({} points), columns: t ({} points)", param.name(), values.len(), times.len())?;
    writeln!(w, "set terminal pngcairo size 900,600")?;
    writeln!(w, "set datafile separator \",\"")?;
    writeln!(w, "set datafile missing \"nan\"")?;
    writeln!(w, "set view map")?;
    writeln!(w, "set xlabel \"{}t\"", if xlab == "index" { "index of " } else { xlab })?;
    writeln!(w, "set ylabel \"{}{}\"", if ylab == "index" { "index of " } else { ylab }, param.name())?;
    writeln!(w, "do for [kind in \"test train\"] {{")?;
    writeln!(w, "  set output sprintf(\"{pre}heatmap_%s.png\", kind)")?;
    writeln!(w, "  set title kind.\" error\"")?;
    writeln!(w, "  plot sprintf(\"{pre}heatmap_%s.csv\", kind) matrix using {xmap}:{ymap}:3 with image notitle")?;
    writeln!(w, "}}")?;
    finish(p, w)?;

    println!("failed_cells={} of {}", h.failed_cells(), values.len() * times.len());
    for (v, e) in &h.failures {
        eprintln!("warning: {}={v:e} failed: {e}", param.name());
    }
    Ok(())
}

fn euler_seed(d: usize, m: &rfgf::ModelConfig, act: &Activation, seed: u64, times: &[f64], dt: f64) -> rfgf::Result<SeedCurve> {
    let inst = simulator::sample_instance(d, m, act, seed)?;
    let weights = simulator::euler_descent(&inst, m, times, &[(f64::INFINITY, dt)])?;
    let errs: Vec<_> = weights.iter().map(|a| simulator::empirical_errors(&inst, m, a)).collect();
    Ok(SeedCurve {
        seed,
        train: errs.iter().map(|e| e.train).collect(),
        test: errs.iter().map(|e| e.test).collect(),
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let m = cfg.model_config()?;
    let act = cfg.activation()?;
    let times = cfg.times();
    let s = &cfg.simulate;
    let runs = match s.dt {
        None => simulator::simulate_parallel(s.d, &m, &act, s.seed, s.seeds, &times)?,
        Some(dt) => (0..s.seeds as u64)
            .into_par_iter()
            .map(|k| euler_seed(s.d, &m, &act, s.seed + k, &times, dt))
            .collect::<rfgf::Result<Vec<_>>>()?,
    };
    let agg = simulator::aggregate(&times, &runs);
    let (p, mut w) = output(cfg, "simulate.csv")?;
    agg.write_csv(&mut w)?;
    finish(p, w)?;
    let (p, mut w) = output(cfg, "simulate_runs.csv")?;
    simulator::write_runs_csv(&mut w, &times, &runs)?;
    finish(p, w)
}

pub fn verify_pencil(cfg: &RunConfig) -> Result<()> {
    let m = cfg.model_config()?;
    let pc = &cfg.pencil;
    let rep = pencil::verify(&m, pc.x, pc.y, pc.d, pc.seeds, cfg.simulate.seed)?;
    let (p, mut w) = output(cfg, "pencil.csv")?;
    rep.write_csv(&mut w)?;
    finish(p, w)?;
    println!(
        "d={} seeds={} failed={} max_rel_err={:e} median_rel_err={:e} median_seed_deviation={:e}",
        rep.d,
        rep.seeds,
        rep.failed_seeds,
        rep.max_rel_err(),
        rep.median_rel_err(),
        rep.median_seed_deviation()
    );
    Ok(())
}
