//! Finite-dimensional random-feature model: sampling, exact gradient flow,
//! empirical errors and resolvent-trace oracles.
//!
//! Random streams: every matrix draws from its own ChaCha20 stream of the
//! run seed (X = 0, Theta = 1, beta = 2, xi = 3, a0 = 4, Omega = 5, test
//! points = 6, test noise = 7), filled in row-major order.

use std::io::{self, Write};

use faer::linalg::matmul::{matmul, triangular};
use faer::{get_global_parallelism, Accum, Mat, Side};
use num_complex::Complex64 as C;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig};

pub const STREAM_X: u64 = 0;
pub const STREAM_THETA: u64 = 1;
pub const STREAM_BETA: u64 = 2;
pub const STREAM_XI: u64 = 3;
pub const STREAM_A0: u64 = 4;
pub const STREAM_OMEGA: u64 = 5;
pub const STREAM_TEST_X: u64 = 6;
pub const STREAM_TEST_NOISE: u64 = 7;

/// Default cap on the memory of one sampled instance.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

/// Modes with `lambda_i + delta` below this fraction of the top eigenvalue
/// are treated as null modes of the flow.
pub const NULL_MODE_THRESHOLD: f64 = 1e-12;

fn stream(seed: u64, k: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn gaussian_vec(seed: u64, k: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = stream(seed, k);
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn gaussian_mat(seed: u64, k: u64, rows: usize, cols: usize) -> Mat<f64> {
    let mut rng = stream(seed, k);
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// `n = round(phi d)`, `N = round(psi d)`.
pub fn dimensions(d: usize, cfg: &ModelConfig) -> (usize, usize) {
    let n = ((cfg.phi() * d as f64).round() as usize).max(1);
    let big_n = ((cfg.psi() * d as f64).round() as usize).max(1);
    (n, big_n)
}

/// Sampling knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    /// Also draw the gaussian surrogate `Omega` used by the pencil.
    pub with_omega: bool,
    pub memory_budget: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            with_omega: false,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// A sampled finite-dimensional model.
#[derive(Debug, Clone)]
pub struct Instance {
    pub d: usize,
    pub n: usize,
    pub big_n: usize,
    /// `n x d` inputs.
    pub x: Mat<f64>,
    /// `N x d` first-layer weights.
    pub theta: Mat<f64>,
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    pub a0: Vec<f64>,
    /// `n x N` features `sigma(X Theta^T / sqrt d)`.
    pub z: Mat<f64>,
    pub omega: Option<Mat<f64>>,
    /// Labels `X beta / sqrt d + xi`.
    pub y: Vec<f64>,
    pub seed: u64,
}

/// Bytes held by an instance of the given size.
pub fn instance_bytes(d: usize, n: usize, big_n: usize, with_omega: bool) -> usize {
    let nn = n * big_n;
    8 * (n * d + big_n * d + nn * if with_omega { 2 } else { 1 } + d + 2 * n + big_n)
}

pub fn sample_instance(d: usize, cfg: &ModelConfig, activation: &Activation, seed: u64) -> Result<Instance> {
    sample_instance_with(d, cfg, activation, seed, &SampleOptions::default())
}

pub fn sample_instance_with(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    seed: u64,
    opts: &SampleOptions,
) -> Result<Instance> {
    if d < 10 {
        return Err(Error::InvalidConfig(format!("simulation needs d >= 10, got {d}")));
    }
    let (n, big_n) = dimensions(d, cfg);
    let bytes = instance_bytes(d, n, big_n, opts.with_omega);
    if bytes > opts.memory_budget {
        return Err(Error::MemoryBudget { bytes });
    }
    let x = gaussian_mat(seed, STREAM_X, n, d);
    let theta = gaussian_mat(seed, STREAM_THETA, big_n, d);
    let beta = gaussian_vec(seed, STREAM_BETA, d, 1.0);
    let xi = gaussian_vec(seed, STREAM_XI, n, cfg.s());
    let a0 = gaussian_vec(seed, STREAM_A0, big_n, cfg.r());
    let omega = opts.with_omega.then(|| gaussian_mat(seed, STREAM_OMEGA, n, big_n));
    let z = features(&x, &theta, activation);
    let sd = (d as f64).sqrt();
    let y = (0..n)
        .map(|i| (0..d).map(|k| x[(i, k)] * beta[k]).sum::<f64>() / sd + xi[i])
        .collect();
    Ok(Instance {
        d,
        n,
        big_n,
        x,
        theta,
        beta,
        xi,
        a0,
        z,
        omega,
        y,
        seed,
    })
}

/// `sigma(X Theta^T / sqrt d)`.
pub fn features(x: &Mat<f64>, theta: &Mat<f64>, activation: &Activation) -> Mat<f64> {
    let d = x.ncols();
    let mut w = Mat::zeros(x.nrows(), theta.nrows());
    matmul(
        w.as_mut(),
        Accum::Replace,
        x.as_ref(),
        theta.transpose(),
        1.0 / (d as f64).sqrt(),
        get_global_parallelism(),
    );
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            w[(i, j)] = activation.eval(w[(i, j)]);
        }
    }
    w
}

fn mat_vec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let vj = v[j];
        if vj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

fn mat_t_vec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            (0..a.nrows()).map(|i| col[i] * v[i]).sum()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower triangle of `Z^T Z` completed to the full symmetric matrix, scaled.
fn gram_full(z: &Mat<f64>, scale: f64) -> Mat<f64> {
    let mut g = Mat::zeros(z.ncols(), z.ncols());
    triangular::matmul(
        g.as_mut(),
        triangular::BlockStructure::TriangularLower,
        Accum::Replace,
        z.transpose(),
        triangular::BlockStructure::Rectangular,
        z.as_ref(),
        triangular::BlockStructure::Rectangular,
        scale,
        get_global_parallelism(),
    );
    symmetrize_lower(&mut g);
    g
}

fn symmetrize_lower(g: &mut Mat<f64>) {
    for j in 0..g.ncols() {
        for i in 0..j {
            g[(i, j)] = g[(j, i)];
        }
    }
}

/// Spectral data of the flow `da/dt = -(Z^T Z / N + delta) a + Z^T Y / sqrt N`.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// Eigenvalues of `Z^T Z / N`, nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: Mat<f64>,
    /// `V^T a0`.
    pub a0_proj: Vec<f64>,
    /// `V^T b`, `b = Z^T Y / sqrt N`.
    pub b_proj: Vec<f64>,
    pub delta: f64,
}

impl FlowState {
    pub fn new(inst: &Instance, cfg: &ModelConfig) -> Result<FlowState> {
        let nf = inst.big_n as f64;
        let g = gram_full(&inst.z, 1.0 / nf);
        let evd = g
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let eigenvalues: Vec<f64> = (0..inst.big_n).map(|i| s[i]).collect();
        let u = evd.U().to_owned();
        let b: Vec<f64> = mat_t_vec(&inst.z, &inst.y).into_iter().map(|v| v / nf.sqrt()).collect();
        let a0_proj = mat_t_vec(&u, &inst.a0);
        let b_proj = mat_t_vec(&u, &b);
        Ok(FlowState {
            eigenvalues,
            eigenvectors: u,
            a0_proj,
            b_proj,
            delta: cfg.delta(),
        })
    }

    fn null_floor(&self) -> f64 {
        NULL_MODE_THRESHOLD * self.eigenvalues.last().copied().unwrap_or(0.0).abs().max(1e-300)
    }

    /// Mode coordinates of `a_t`.
    pub fn modes_at(&self, t: f64) -> Vec<f64> {
        let floor = self.null_floor();
        self.eigenvalues
            .iter()
            .zip(self.a0_proj.iter().zip(&self.b_proj))
            .map(|(&lam, (&p, &b))| {
                let rate = lam + self.delta;
                if rate < floor {
                    // b has no component along null modes: the mode is frozen.
                    p
                } else {
                    let c = b / rate;
                    (-rate * t).exp() * (p - c) + c
                }
            })
            .collect()
    }

    pub fn weights_at(&self, t: f64) -> Vec<f64> {
        mat_vec(&self.eigenvectors, &self.modes_at(t))
    }

    /// Spectral-norm-bounded reconstruction error `|V diag(lambda) V^T - G|_F`.
    pub fn reconstruction_error(&self, inst: &Instance) -> f64 {
        let g = gram_full(&inst.z, 1.0 / inst.big_n as f64);
        let mut vl = self.eigenvectors.clone();
        for j in 0..vl.ncols() {
            let l = self.eigenvalues[j];
            for i in 0..vl.nrows() {
                vl[(i, j)] *= l;
            }
        }
        let r = &vl * self.eigenvectors.transpose();
        let mut err = 0.0f64;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                err += (r[(i, j)] - g[(i, j)]).powi(2);
            }
        }
        err.sqrt()
    }
}

/// Weights `a_t` of the exact gradient flow at each time.
pub fn exact_flow(inst: &Instance, cfg: &ModelConfig, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidConfig("times must be nonnegative".into()));
    }
    if times.iter().all(|&t| t == 0.0) {
        return Ok(times.iter().map(|_| inst.a0.clone()).collect());
    }
    let flow = FlowState::new(inst, cfg)?;
    Ok(times
        .iter()
        .map(|&t| if t == 0.0 { inst.a0.clone() } else { flow.weights_at(t) })
        .collect())
}

/// Explicit-Euler gradient descent. `schedule` lists `(t_until, dt)` pairs
/// in increasing `t_until`; the last step before each requested time is
/// shortened to land on it exactly.
pub fn euler_descent(inst: &Instance, cfg: &ModelConfig, times: &[f64], schedule: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
    if schedule.is_empty() || schedule.iter().any(|&(_, dt)| !(dt > 0.0)) {
        return Err(Error::InvalidConfig("Euler schedule needs positive steps".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidConfig("Euler times must be nonnegative and sorted".into()));
    }
    let nf = inst.big_n as f64;
    let g = gram_full(&inst.z, 1.0 / nf);
    let b: Vec<f64> = mat_t_vec(&inst.z, &inst.y).into_iter().map(|v| v / nf.sqrt()).collect();
    let delta = cfg.delta();
    let dt_at = |t: f64| schedule.iter().find(|&&(until, _)| t < until).unwrap_or(schedule.last().unwrap()).1;
    let mut a = inst.a0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target * (1.0 - 1e-15) {
            let dt = dt_at(t).min(target - t);
            let ga = mat_vec(&g, &a);
            for i in 0..a.len() {
                a[i] -= dt * (ga[i] + delta * a[i] - b[i]);
            }
            t += dt;
        }
        t = t.max(target);
        out.push(a.clone());
    }
    Ok(out)
}

/// Empirical errors of one weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalErrors {
    pub train: f64,
    pub test: f64,
    pub g: f64,
    pub h: f64,
    pub l: f64,
}

/// Training error from the penalized loss and test error from its
/// decomposition `1 + s^2 - 2 mu g + mu^2 h + nu^2 l`.
pub fn empirical_errors(inst: &Instance, cfg: &ModelConfig, a: &[f64]) -> EmpiricalErrors {
    let nf = inst.big_n as f64;
    let pred = mat_vec(&inst.z, a);
    let resid: f64 = inst.y.iter().zip(&pred).map(|(y, p)| (y - p / nf.sqrt()).powi(2)).sum();
    let a2 = dot(a, a);
    let train = resid / inst.n as f64 + cfg.lambda() * a2 / nf;
    decomposed(inst, cfg, a, train)
}

fn decomposed(inst: &Instance, cfg: &ModelConfig, a: &[f64], train: f64) -> EmpiricalErrors {
    let nf = inst.big_n as f64;
    let sd = (inst.d as f64).sqrt();
    let u: Vec<f64> = mat_t_vec(&inst.theta, a).into_iter().map(|v| v / (sd * nf.sqrt())).collect();
    let g = dot(&inst.beta, &u) / sd;
    let h = dot(&u, &u);
    let l = dot(a, a) / nf;
    let (mu, nu) = (cfg.mu(), cfg.nu());
    EmpiricalErrors {
        train,
        test: 1.0 + cfg.s().powi(2) - 2.0 * mu * g + mu * mu * h + nu * nu * l,
        g,
        h,
        l,
    }
}

/// Monte Carlo estimate of `E[(y0 - yhat(x0))^2]` over fresh gaussian test
/// points with label noise; returns `(mean, standard error)`.
pub fn monte_carlo_test_error(
    inst: &Instance,
    cfg: &ModelConfig,
    activation: &Activation,
    a: &[f64],
    samples: usize,
) -> (f64, f64) {
    let batch = 2048usize;
    let d = inst.d;
    let sd = (d as f64).sqrt();
    let nf = inst.big_n as f64;
    let mut rng_x = stream(inst.seed, STREAM_TEST_X);
    let mut rng_e = stream(inst.seed, STREAM_TEST_NOISE);
    let (mut sum, mut sum2, mut done) = (0.0, 0.0, 0usize);
    while done < samples {
        let b = batch.min(samples - done);
        let mut x0 = Mat::zeros(b, d);
        for i in 0..b {
            for k in 0..d {
                x0[(i, k)] = rng_x.sample(StandardNormal);
            }
        }
        let z0 = features(&x0, &inst.theta, activation);
        let pred = mat_vec(&z0, a);
        for i in 0..b {
            let y0 = (0..d).map(|k| x0[(i, k)] * inst.beta[k]).sum::<f64>() / sd
                + cfg.s() * rng_e.sample::<f64, _>(StandardNormal);
            let e = (y0 - pred[i] / nf.sqrt()).powi(2);
            sum += e;
            sum2 += e * e;
        }
        done += b;
    }
    let m = sum / samples as f64;
    let var = (sum2 / samples as f64 - m * m).max(0.0);
    (m, (var / samples as f64).sqrt())
}

/// Full spectrum of `Z^T Z / N` (length N), computed from the smaller Gram
/// matrix and padded with zeros.
pub fn spectrum(inst: &Instance) -> Result<Vec<f64>> {
    let nf = inst.big_n as f64;
    let small = if inst.n < inst.big_n {
        gram_full(&inst.z.transpose().to_owned(), 1.0 / nf)
    } else {
        gram_full(&inst.z, 1.0 / nf)
    };
    let mut ev = small
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalues failed: {e:?}")))?;
    ev.resize(inst.big_n, 0.0);
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Fraction of eigenvalues of `Z^T Z / N` below `rel_tol` times the largest.
pub fn zero_fraction(eigenvalues: &[f64], rel_tol: f64) -> f64 {
    let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let zeros = eigenvalues.iter().filter(|&&l| l <= rel_tol * top).count();
    zeros as f64 / eigenvalues.len() as f64
}

/// `(1/N) Tr (Z^T Z / N - x)^{-1}` from a precomputed spectrum.
pub fn resolvent_trace_from(eigenvalues: &[f64], x: C) -> Result<C> {
    let mut acc = C::new(0.0, 0.0);
    for &l in eigenvalues {
        let den = C::new(l, 0.0) - x;
        if den.norm() < 1e-10 {
            return Err(Error::LinearAlgebra(format!("x = {x} is within 1e-10 of an eigenvalue")));
        }
        acc += den.inv();
    }
    Ok(acc / eigenvalues.len() as f64)
}

pub fn resolvent_trace(inst: &Instance, x: C) -> Result<C> {
    resolvent_trace_from(&spectrum(inst)?, x)
}

/// `(1/N) Tr R(x) (Theta Theta^T / d) R(y)` with `R(z) = (Z^T Z / N - z)^{-1}`.
pub fn two_resolvent_trace(inst: &Instance, x: C, y: C) -> Result<C> {
    let nf = inst.big_n as f64;
    let g = gram_full(&inst.z, 1.0 / nf);
    let evd = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    // diag(V^T Theta Theta^T V) / d = squared column norms of Theta^T V / sqrt d.
    let tv = inst.theta.transpose() * evd.U();
    let mut acc = C::new(0.0, 0.0);
    for i in 0..inst.big_n {
        let w: f64 = (0..inst.d).map(|k| tv[(k, i)].powi(2)).sum::<f64>() / inst.d as f64;
        let (dx, dy) = (C::new(s[i], 0.0) - x, C::new(s[i], 0.0) - y);
        if dx.norm() < 1e-10 || dy.norm() < 1e-10 {
            return Err(Error::LinearAlgebra("evaluation point on the spectrum".into()));
        }
        acc += w / (dx * dy);
    }
    Ok(acc / nf)
}

/// Per-seed errors on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurve {
    pub seed: u64,
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

pub fn simulate_seed(d: usize, cfg: &ModelConfig, activation: &Activation, seed: u64, times: &[f64]) -> Result<SeedCurve> {
    let inst = sample_instance(d, cfg, activation, seed)?;
    let weights = exact_flow(&inst, cfg, times)?;
    let errs: Vec<EmpiricalErrors> = weights.iter().map(|a| empirical_errors(&inst, cfg, a)).collect();
    Ok(SeedCurve {
        seed,
        train: errs.iter().map(|e| e.train).collect(),
        test: errs.iter().map(|e| e.test).collect(),
    })
}

/// Runs seeds `0..seeds` offset by `base_seed`, sequentially to bound memory.
pub fn simulate(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    base_seed: u64,
    seeds: usize,
    times: &[f64],
) -> Result<Vec<SeedCurve>> {
    (0..seeds as u64)
        .map(|k| simulate_seed(d, cfg, activation, base_seed + k, times))
        .collect()
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub times: Vec<f64>,
    pub train_mean: Vec<f64>,
    pub train_std: Vec<f64>,
    pub test_mean: Vec<f64>,
    pub test_std: Vec<f64>,
    pub n_seeds: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub fn aggregate(times: &[f64], runs: &[SeedCurve]) -> Aggregate {
    let col = |i: usize, f: &dyn Fn(&SeedCurve) -> &Vec<f64>| -> (f64, f64) {
        mean_std(&runs.iter().map(|r| f(r)[i]).collect::<Vec<_>>())
    };
    let mut agg = Aggregate {
        times: times.to_vec(),
        train_mean: Vec::new(),
        train_std: Vec::new(),
        test_mean: Vec::new(),
        test_std: Vec::new(),
        n_seeds: runs.len(),
    };
    for i in 0..times.len() {
        let (m, s) = col(i, &|r| &r.train);
        agg.train_mean.push(m);
        agg.train_std.push(s);
        let (m, s) = col(i, &|r| &r.test);
        agg.test_mean.push(m);
        agg.test_std.push(s);
    }
    agg
}

impl Aggregate {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,train_mean,train_std,test_mean,test_std,n_seeds")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{}",
                self.times[i], self.train_mean[i], self.train_std[i], self.test_mean[i], self.test_std[i], self.n_seeds
            )?;
        }
        Ok(())
    }
}

pub fn write_runs_csv<W: Write>(mut out: W, times: &[f64], runs: &[SeedCurve]) -> io::Result<()> {
    writeln!(out, "t,train,test,seed")?;
    for r in runs {
        for i in 0..times.len() {
            writeln!(out, "{:e},{:e},{:e},{}", times[i], r.train[i], r.test[i], r.seed)?;
        }
    }
    Ok(())
}

/// Ridge (infinite-time) errors over a sweep of sample ratios `phi` from
/// one seed. Designs are nested: the sample for each `phi` is the leading
/// `round(phi d)` rows of one draw sized for the largest `phi`, so the
/// features and the Gram matrix are built once and grown row block by row block.
pub fn ridge_sweep(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    phis: &[f64],
    seed: u64,
) -> Result<Vec<EmpiricalErrors>> {
    if phis.is_empty() || phis.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidConfig("phi sweep needs positive values".into()));
    }
    if !(cfg.lambda() > 0.0) {
        return Err(Error::Ridgeless);
    }
    let phi_max = phis.iter().cloned().fold(0.0, f64::max);
    let big_cfg = cfg.with_phi(phi_max)?;
    let inst = sample_instance(d, &big_cfg, activation, seed)?;
    let big_n = inst.big_n;
    let nf = big_n as f64;
    let mut order: Vec<usize> = (0..phis.len()).collect();
    order.sort_by(|&i, &j| phis[i].total_cmp(&phis[j]));
    let mut gram = Mat::<f64>::zeros(big_n, big_n);
    let mut b = vec![0.0; big_n];
    let mut rows_done = 0usize;
    let mut out = vec![None; phis.len()];
    for &k in &order {
        let phi = phis[k];
        let nk = ((phi * d as f64).round() as usize).clamp(1, inst.n);
        if nk > rows_done {
            let block = inst.z.subrows(rows_done, nk - rows_done);
            triangular::matmul(
                gram.as_mut(),
                triangular::BlockStructure::TriangularLower,
                Accum::Add,
                block.transpose(),
                triangular::BlockStructure::Rectangular,
                block,
                triangular::BlockStructure::Rectangular,
                1.0,
                get_global_parallelism(),
            );
            for i in rows_done..nk {
                let yi = inst.y[i];
                for j in 0..big_n {
                    b[j] += inst.z[(i, j)] * yi;
                }
            }
            rows_done = nk;
        }
        // Stationary point of the loss with n = nk: (G/N + (nk/N) lambda) a = b / sqrt N.
        let delta = nk as f64 / nf * cfg.lambda();
        let mut sys = Mat::<f64>::zeros(big_n, big_n);
        for j in 0..big_n {
            for i in j..big_n {
                sys[(i, j)] = gram[(i, j)] / nf;
            }
            sys[(j, j)] += delta;
        }
        let llt = sys
            .llt(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("Cholesky failed: {e:?}")))?;
        let mut rhs = Mat::<f64>::from_fn(big_n, 1, |i, _| b[i] / nf.sqrt());
        faer::linalg::solvers::Solve::solve_in_place(&llt, rhs.as_mut());
        let a: Vec<f64> = (0..big_n).map(|i| rhs[(i, 0)]).collect();
        let zk = inst.z.subrows(0, nk);
        let mut resid = 0.0;
        for i in 0..nk {
            let p: f64 = (0..big_n).map(|j| zk[(i, j)] * a[j]).sum::<f64>() / nf.sqrt();
            resid += (inst.y[i] - p).powi(2);
        }
        let train = resid / nk as f64 + cfg.lambda() * dot(&a, &a) / nf;
        let cfg_k = cfg.with_phi(phi)?;
        out[k] = Some(decomposed(&inst, &cfg_k, &a, train));
    }
    Ok(out.into_iter().map(|e| e.unwrap()).collect())
}

/// Ridge sweeps over several seeds, aggregated per sweep point as
/// `(train_mean, train_std, test_mean, test_std)`.
pub fn ridge_sweep_seeds(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    phis: &[f64],
    base_seed: u64,
    seeds: usize,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let runs: Vec<Vec<EmpiricalErrors>> = (0..seeds as u64)
        .map(|k| ridge_sweep(d, cfg, activation, phis, base_seed + k))
        .collect::<Result<_>>()?;
    Ok((0..phis.len())
        .map(|i| {
            let (tm, ts) = mean_std(&runs.iter().map(|r| r[i].train).collect::<Vec<_>>());
            let (em, es) = mean_std(&runs.iter().map(|r| r[i].test).collect::<Vec<_>>());
            (tm, ts, em, es)
        })
        .collect())
}

/// Errors at initialization for several seeds, without forming the flow.
pub fn initial_errors(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    base_seed: u64,
    seeds: usize,
) -> Result<Vec<EmpiricalErrors>> {
    (0..seeds as u64)
        .map(|k| {
            let inst = sample_instance(d, cfg, activation, base_seed + k)?;
            Ok(empirical_errors(&inst, cfg, &inst.a0))
        })
        .collect()
}

/// Seeds run in parallel when memory allows; used by lightweight callers.
pub fn simulate_parallel(
    d: usize,
    cfg: &ModelConfig,
    activation: &Activation,
    base_seed: u64,
    seeds: usize,
    times: &[f64],
) -> Result<Vec<SeedCurve>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| simulate_seed(d, cfg, activation, base_seed + k, times))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::logspace;

    fn reference() -> ModelConfig {
        ModelConfig::new(0.5, 0.3014, 1.4, 1.8, 1.0, 0.5, 0.01).unwrap()
    }

    fn act() -> Activation {
        Activation::hermite(0.5, 0.3014)
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_instance(30, &reference(), &act(), 7).unwrap();
        let b = sample_instance(30, &reference(), &act(), 7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
        assert_eq!(a.y, b.y);
        assert_eq!((a.n, a.big_n), (54, 42));
        let c = sample_instance(30, &reference(), &act(), 8).unwrap();
        assert_ne!(a.beta, c.beta);
        assert_eq!(features(&a.x, &a.theta, &act()), a.z);
    }

    #[test]
    fn zero_initial_variance() {
        let inst = sample_instance(20, &reference().with_r(0.0).unwrap(), &act(), 1).unwrap();
        assert!(inst.a0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_variance_matches_hermite_power() {
        let cfg = reference();
        let inst = sample_instance(200, &cfg, &act(), 3).unwrap();
        let cnt = (inst.n * inst.big_n) as f64;
        let mut s2 = 0.0;
        for j in 0..inst.big_n {
            for i in 0..inst.n {
                s2 += inst.z[(i, j)].powi(2);
            }
        }
        // Entries are correlated through shared rows and columns, so the
        // fluctuation scale is set by the smaller dimension.
        let tol = 3.0 / (inst.n.min(inst.big_n) as f64).sqrt();
        assert!((s2 / cnt - cfg.feature_power()).abs() < tol * cfg.feature_power());
    }

    #[test]
    fn memory_budget_is_enforced() {
        let opts = SampleOptions {
            with_omega: true,
            memory_budget: 1000,
        };
        assert!(matches!(
            sample_instance_with(20, &reference(), &act(), 0, &opts),
            Err(Error::MemoryBudget { .. })
        ));
        assert!(sample_instance(5, &reference(), &act(), 0).is_err());
    }

    #[test]
    fn flow_endpoints() {
        let cfg = reference();
        let inst = sample_instance(40, &cfg, &act(), 2).unwrap();
        let flow = FlowState::new(&inst, &cfg).unwrap();
        assert!(flow.reconstruction_error(&inst) < 1e-8);
        let w = exact_flow(&inst, &cfg, &[0.0, 1e8]).unwrap();
        assert_eq!(w[0], inst.a0);
        // Ridge solution.
        let nf = inst.big_n as f64;
        let mut sys = gram_full(&inst.z, 1.0 / nf);
        for j in 0..inst.big_n {
            sys[(j, j)] += cfg.delta();
        }
        let b: Vec<f64> = mat_t_vec(&inst.z, &inst.y).into_iter().map(|v| v / nf.sqrt()).collect();
        let resid = mat_vec(&sys, &w[1]);
        let err = resid.iter().zip(&b).map(|(r, b)| (r - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_predictor_errors() {
        let cfg = reference();
        let inst = sample_instance(30, &cfg, &act(), 4).unwrap();
        let zero = vec![0.0; inst.big_n];
        let e = empirical_errors(&inst, &cfg, &zero);
        let y2 = dot(&inst.y, &inst.y) / inst.n as f64;
        assert!((e.train - y2).abs() < 1e-14);
        assert!((e.test - (1.0 + cfg.s().powi(2))).abs() < 1e-14);
    }

    #[test]
    fn training_error_decreases_along_flow() {
        let cfg = reference();
        let inst = sample_instance(50, &cfg, &act(), 5).unwrap();
        let times = logspace(1e-3, 1e4, 60);
        let w = exact_flow(&inst, &cfg, &times).unwrap();
        let train: Vec<f64> = w.iter().map(|a| empirical_errors(&inst, &cfg, a).train).collect();
        for p in train.windows(2) {
            assert!(p[1] <= p[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn euler_converges_to_exact_flow_at_first_order() {
        let cfg = reference();
        let inst = sample_instance(30, &cfg, &act(), 6).unwrap();
        let times = [1.0, 5.0, 10.0];
        let exact: Vec<f64> = exact_flow(&inst, &cfg, &times)
            .unwrap()
            .iter()
            .map(|a| empirical_errors(&inst, &cfg, a).train)
            .collect();
        let dev = |dt: f64| -> f64 {
            let e = euler_descent(&inst, &cfg, &times, &[(f64::INFINITY, dt)]).unwrap();
            e.iter()
                .zip(&exact)
                .map(|(a, x)| ((empirical_errors(&inst, &cfg, a).train - x) / x).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (dev(0.02), dev(0.01));
        assert!(e2 < 0.05, "{e2}");
        let order = (e1 / e2).log2();
        assert!(order > 0.9, "observed order {order}");
    }

    #[test]
    fn two_stage_step_schedule_runs() {
        let cfg = reference();
        let inst = sample_instance(20, &cfg, &act(), 6).unwrap();
        let w = euler_descent(&inst, &cfg, &[0.5, 2.0], &[(1.0, 0.01), (f64::INFINITY, 0.1)]).unwrap();
        assert_eq!(w.len(), 2);
        assert!(euler_descent(&inst, &cfg, &[2.0, 1.0], &[(f64::INFINITY, 0.1)]).is_err());
    }

    #[test]
    fn decomposition_matches_monte_carlo() {
        let cfg = reference();
        let a = act();
        let inst = sample_instance(400, &cfg, &a, 9).unwrap();
        let w = exact_flow(&inst, &cfg, &[0.0, 3.0]).unwrap();
        // The decomposition uses the limit 1 of |beta|^2 / d; the Monte Carlo
        // target carries the sampled value, which fluctuates at O(d^{-1/2}).
        let shift = dot(&inst.beta, &inst.beta) / inst.d as f64 - 1.0;
        for wi in &w {
            let e = empirical_errors(&inst, &cfg, wi);
            let (m, se) = monte_carlo_test_error(&inst, &cfg, &a, wi, 100_000);
            assert!((m - shift - e.test).abs() < 3.0 * se, "{m} +- {se} vs {}", e.test);
        }
    }

    #[test]
    fn resolvent_asymptotics_and_spectrum() {
        let inst = sample_instance(30, &reference(), &act(), 10).unwrap();
        let x = C::new(0.0, 1e6);
        let r = resolvent_trace(&inst, x).unwrap();
        assert!((r + x.inv()).norm() < 1e-4 * x.inv().norm());
        let ev = spectrum(&inst).unwrap();
        assert_eq!(ev.len(), inst.big_n);
        let flow = FlowState::new(&inst, &reference()).unwrap();
        for (a, b) in ev.iter().zip(&flow.eigenvalues) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregate_and_csv() {
        let times = [0.0, 1.0];
        let runs = vec![
            SeedCurve {
                seed: 0,
                train: vec![1.0, 2.0],
                test: vec![3.0, 4.0],
            },
            SeedCurve {
                seed: 1,
                train: vec![3.0, 2.0],
                test: vec![5.0, 4.0],
            },
        ];
        let agg = aggregate(&times, &runs);
        assert_eq!(agg.train_mean, vec![2.0, 2.0]);
        assert!((agg.train_std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg.test_std[1], 0.0);
        let mut buf = Vec::new();
        agg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,train_mean,train_std,test_mean,test_std,n_seeds"));
        let mut buf = Vec::new();
        write_runs_csv(&mut buf, &times, &runs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn nested_ridge_matches_direct_solution() {
        let cfg = reference();
        let a = act();
        let phis = [2.0, 0.5, 1.0];
        let sweep = ridge_sweep(30, &cfg, &a, &phis, 11).unwrap();
        // phi = 2 is the largest: its sample is the full draw.
        let big = sample_instance(30, &cfg.with_phi(2.0).unwrap(), &a, 11).unwrap();
        let w = exact_flow(&big, &cfg.with_phi(2.0).unwrap(), &[1e9]).unwrap();
        let e = empirical_errors(&big, &cfg.with_phi(2.0).unwrap(), &w[0]);
        assert!((sweep[0].train - e.train).abs() < 1e-8 * e.train.abs().max(1.0));
        assert!((sweep[0].test - e.test).abs() < 1e-8 * e.test.abs().max(1.0));
        assert!(sweep.iter().all(|e| e.test.is_finite() && e.train >= 0.0));
    }

    fn oracle_check(d: usize, tol: f64) {
        use crate::stieltjes::{solve_one_point, solve_two_point};
        let cfg = reference();
        let inst = sample_instance(d, &cfg, &act(), 11).unwrap();
        let (x, y) = (C::new(1.0, 0.2), C::new(2.0, 0.2));
        let sx = solve_one_point(x, &cfg, None).unwrap();
        let sy = solve_one_point(y, &cfg, None).unwrap();
        let g = resolvent_trace(&inst, x).unwrap();
        assert!((g - sx.g1).norm() < tol * sx.g1.norm(), "{g} vs {}", sx.g1);
        let q = solve_two_point(x, y, &sx, &sy, &cfg).unwrap();
        let t = two_resolvent_trace(&inst, x, y).unwrap();
        assert!((t - q.q1).norm() < tol * q.q1.norm(), "{t} vs {}", q.q1);
    }

    #[test]
    fn resolvent_traces_match_solver_at_moderate_size() {
        oracle_check(300, 0.1);
    }

    #[test]
    #[ignore = "large eigendecomposition; run with --ignored"]
    fn resolvent_traces_match_solver_at_large_size() {
        oracle_check(3000, 1e-2);
    }
}
