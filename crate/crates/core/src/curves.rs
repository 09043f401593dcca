//! Training and test error curves from the extracted spectral measures, and
//! their infinite-time limits.

use std::io::{self, Write};

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::density::{density_2d_on, ExtractionOptions, Samples, SpectralMeasure1D, SpectralMeasure2D, Transform};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::stieltjes::{dv_dx, solve_real_negative, solve_two_point, v_transform, w_transform};

/// `(1 - exp(-t (omega + delta))) / (omega + delta)`, by its Taylor series
/// when the exponent is small.
pub fn time_kernel(omega: f64, t: f64, delta: f64) -> f64 {
    let a = omega + delta;
    let z = t * a;
    if z.abs() < 1e-4 {
        t * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0)
    } else {
        -(-z).exp_m1() / a
    }
}

/// The five measures entering the error formulas, extracted on a shared support.
#[derive(Debug, Clone)]
pub struct Measures {
    pub k: SpectralMeasure1D,
    pub l0: SpectralMeasure1D,
    pub v: SpectralMeasure1D,
    pub h0: SpectralMeasure2D,
    pub w: SpectralMeasure2D,
}

pub fn extract_measures(cfg: &ModelConfig, opts: &ExtractionOptions) -> Result<Measures> {
    let samples = Samples::new(cfg, opts.grid_points, opts)?;
    let k = samples.measure(Transform::K, cfg)?;
    let l0 = samples.measure(Transform::L0, cfg)?;
    let v = samples.measure(Transform::V, cfg)?;
    let two = density_2d_on(cfg, &samples.support, opts.grid_points_2d, opts)?;
    Ok(Measures {
        k,
        l0,
        v,
        h0: two.h0,
        w: two.w,
    })
}

pub fn g_bar(t: f64, rho_k: &SpectralMeasure1D, cfg: &ModelConfig) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let delta = cfg.delta();
    rho_k.integrate(|u| time_kernel(u, t, delta))
}

pub fn l_bar(t: f64, rho_l0: &SpectralMeasure1D, rho_v: &SpectralMeasure1D, cfg: &ModelConfig) -> f64 {
    let delta = cfg.delta();
    let init = rho_l0.integrate(|u| (-2.0 * t * (u + delta)).exp());
    let forced = rho_v.integrate(|u| time_kernel(u, t, delta).powi(2));
    init + forced
}

pub fn h_bar(t: f64, rho_h0: &SpectralMeasure2D, rho_w: &SpectralMeasure2D, cfg: &ModelConfig) -> f64 {
    let delta = cfg.delta();
    let decay = |nodes: &[f64]| -> Vec<f64> { nodes.iter().map(|u| (-t * (u + delta)).exp()).collect() };
    let gamma = |nodes: &[f64]| -> Vec<f64> { nodes.iter().map(|&u| time_kernel(u, t, delta)).collect() };
    let init = rho_h0.integrate_separable(&decay(&rho_h0.nodes), (-t * delta).exp());
    let forced = rho_w.integrate_separable(&gamma(&rho_w.nodes), time_kernel(0.0, t, delta));
    init + forced
}

/// Per-time components of the test error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub g: f64,
    pub h: f64,
    pub l: f64,
}

pub fn components(t: f64, cfg: &ModelConfig, m: &Measures) -> Components {
    Components {
        g: g_bar(t, &m.k, cfg),
        h: h_bar(t, &m.h0, &m.w, cfg),
        l: l_bar(t, &m.l0, &m.v, cfg),
    }
}

fn assemble_test(cfg: &ModelConfig, c: &Components) -> f64 {
    let (mu, nu) = (cfg.mu(), cfg.nu());
    1.0 + cfg.s().powi(2) - 2.0 * mu * c.g + mu * mu * c.h + nu * nu * c.l
}

fn train_at(t: f64, cfg: &ModelConfig, m: &Measures) -> f64 {
    let delta = cfg.delta();
    let init = m.l0.integrate(|u| (u + delta) * (-2.0 * t * (u + delta)).exp());
    let forced = m.v.integrate(|u| time_kernel(u, 2.0 * t, delta));
    1.0 + cfg.s().powi(2) + (init - forced) / cfg.c()
}

pub fn test_error(times: &[f64], cfg: &ModelConfig, m: &Measures) -> Vec<f64> {
    times.par_iter().map(|&t| assemble_test(cfg, &components(t, cfg, m))).collect()
}

pub fn train_error(times: &[f64], cfg: &ModelConfig, m: &Measures) -> Vec<f64> {
    times.par_iter().map(|&t| train_at(t, cfg, m)).collect()
}

/// Training and test errors on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub times: Vec<f64>,
    pub test: Vec<f64>,
    pub train: Vec<f64>,
    pub components: Option<Vec<Components>>,
}

impl ErrorCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match &self.components {
            Some(_) => writeln!(out, "t,train,test,g,h,l")?,
            None => writeln!(out, "t,train,test")?,
        }
        for i in 0..self.times.len() {
            write!(out, "{:e},{:e},{:e}", self.times[i], self.train[i], self.test[i])?;
            if let Some(c) = &self.components {
                write!(out, ",{:e},{:e},{:e}", c[i].g, c[i].h, c[i].l)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Both curves with their components from already extracted measures.
pub fn error_curve_from(times: &[f64], cfg: &ModelConfig, m: &Measures) -> Result<ErrorCurve> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidConfig("times must be finite and nonnegative".into()));
    }
    let rows: Vec<(Components, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let c = components(t, cfg, m);
            (c, assemble_test(cfg, &c), train_at(t, cfg, m))
        })
        .collect();
    Ok(ErrorCurve {
        times: times.to_vec(),
        test: rows.iter().map(|r| r.1).collect(),
        train: rows.iter().map(|r| r.2).collect(),
        components: Some(rows.iter().map(|r| r.0).collect()),
    })
}

/// Extracts the measures and evaluates both curves.
pub fn error_curve(times: &[f64], cfg: &ModelConfig, opts: &ExtractionOptions) -> Result<ErrorCurve> {
    if cfg.is_trivial_activation() {
        return Err(Error::InvalidConfig("mu = nu = 0: the features vanish identically".into()));
    }
    let m = extract_measures(cfg, opts)?;
    error_curve_from(times, cfg, &m)
}

/// Infinite-time errors for a positive ridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitErrors {
    pub test_inf: f64,
    pub train_inf: f64,
    /// `dV/dx` at `-delta` by implicit differentiation.
    pub dv: f64,
    /// Central finite-difference estimate of the same derivative.
    pub dv_fd: f64,
    /// `|dv - dv_fd| / |dv|`.
    pub dv_rel_diff: f64,
    pub k: f64,
    pub w: f64,
    pub v: f64,
}

pub fn limit_errors(cfg: &ModelConfig) -> Result<LimitErrors> {
    let delta = cfg.delta();
    if !(delta > 0.0) {
        return Err(Error::Ridgeless);
    }
    if cfg.is_trivial_activation() {
        return Err(Error::InvalidConfig("mu = nu = 0: the features vanish identically".into()));
    }
    let x0 = -delta;
    let s = solve_real_negative(x0, cfg)?;
    let q = solve_two_point(s.x, s.x, &s, &s, cfg)?;
    let k = s.t1.re;
    let w = w_transform(&q, cfg).re;
    let v = v_transform(&s, cfg).re;
    let dv = dv_dx(&s, cfg)?.re;
    let h = 1e-5 * delta;
    let vp = v_transform(&solve_real_negative(x0 + h, cfg)?, cfg);
    let vm = v_transform(&solve_real_negative(x0 - h, cfg)?, cfg);
    let dv_fd = ((vp - vm) / C::new(2.0 * h, 0.0)).re;
    let (mu, nu) = (cfg.mu(), cfg.nu());
    let base = 1.0 + cfg.s().powi(2);
    Ok(LimitErrors {
        test_inf: base - 2.0 * mu * k + mu * mu * w + nu * nu * dv,
        train_inf: base - v / cfg.c(),
        dv,
        dv_fd,
        dv_rel_diff: (dv - dv_fd).abs() / dv.abs().max(1e-300),
        k,
        w,
        v,
    })
}

/// Parameter swept along the rows of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Psi,
    Phi,
    Lambda,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psi" => Ok(SweepParam::Psi),
            "phi" => Ok(SweepParam::Phi),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(Error::InvalidConfig(format!("cannot sweep '{other}' in a heatmap"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Psi => "psi",
            SweepParam::Phi => "phi",
            SweepParam::Lambda => "lambda",
        }
    }

    pub fn apply(&self, cfg: &ModelConfig, value: f64) -> Result<ModelConfig> {
        match self {
            SweepParam::Psi => cfg.with_psi(value),
            SweepParam::Phi => cfg.with_phi(value),
            SweepParam::Lambda => cfg.with_lambda(value),
        }
    }
}

/// Error surfaces over (sweep value, time); failed rows hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub times: Vec<f64>,
    /// Row-major, one row per sweep value.
    pub test: Vec<Vec<f64>>,
    pub train: Vec<Vec<f64>>,
    pub failures: Vec<(f64, String)>,
}

impl Heatmap {
    pub fn failed_cells(&self) -> usize {
        self.test.iter().flatten().filter(|v| v.is_nan()).count()
    }
}

/// Maximum fraction of failed mesh points before a heatmap aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

pub fn heatmap(
    base: &ModelConfig,
    param: SweepParam,
    values: &[f64],
    times: &[f64],
    opts: &ExtractionOptions,
) -> Result<Heatmap> {
    if values.is_empty() || times.is_empty() {
        return Err(Error::InvalidConfig("heatmap needs at least one sweep value and one time".into()));
    }
    let rows: Vec<std::result::Result<ErrorCurve, String>> = values
        .par_iter()
        .map(|&v| {
            param
                .apply(base, v)
                .and_then(|cfg| error_curve(times, &cfg, opts))
                .map_err(|e| e.to_string())
        })
        .collect();
    let nan_row = vec![f64::NAN; times.len()];
    let mut test = Vec::with_capacity(values.len());
    let mut train = Vec::with_capacity(values.len());
    let mut failures = Vec::new();
    for (&v, row) in values.iter().zip(rows) {
        match row {
            Ok(c) => {
                test.push(c.test);
                train.push(c.train);
            }
            Err(e) => {
                failures.push((v, e));
                test.push(nan_row.clone());
                train.push(nan_row.clone());
            }
        }
    }
    let total = values.len() * times.len();
    let failed = failures.len() * times.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::MeshFailures {
            failed: failures.len(),
            total: values.len(),
        });
    }
    Ok(Heatmap {
        param,
        values: values.to_vec(),
        times: times.to_vec(),
        test,
        train,
        failures,
    })
}
