//! One-point and two-point algebraic systems and the Stieltjes transforms
//! built from their solutions.
//!
//! Conventions: `g1(x) = lim (1/N) tr (Z^T Z / N - x)^{-1}`, so every transform
//! is `F(x) = \int rho(w) / (w - x) dw` and `Im F > 0` above the real axis for a
//! positive measure.

use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::poly::Poly;
use crate::small;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;
const MAX_HALVINGS: usize = 40;
/// Residual level accepted when round-off prevents reaching `NEWTON_TOL`.
const RESIDUAL_FLOOR: f64 = 1e-10;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Solution of the one-point system at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePointSolution {
    pub x: C,
    pub g1: C,
    pub h4: C,
    pub t1: C,
    /// `(c - 1 - x g1) / c`
    pub g3: C,
    /// `1 - mu t1`
    pub h1: C,
}

impl OnePointSolution {
    fn from_unknowns(cfg: &ModelConfig, x: C, v: [C; 3]) -> Self {
        let [g1, h4, t1] = v;
        OnePointSolution {
            x,
            g1,
            h4,
            t1,
            g3: (c(cfg.c() - 1.0) - x * g1) / cfg.c(),
            h1: c(1.0) - cfg.mu() * t1,
        }
    }

    fn unknowns(&self) -> [C; 3] {
        [self.g1, self.h4, self.t1]
    }

    /// Entrywise complex conjugate, i.e. the solution at `conj(x)`.
    pub fn conj(&self) -> Self {
        OnePointSolution {
            x: self.x.conj(),
            g1: self.g1.conj(),
            h4: self.h4.conj(),
            t1: self.t1.conj(),
            g3: self.g3.conj(),
            h1: self.h1.conj(),
        }
    }

    /// Residuals of the three one-point equations.
    pub fn residuals(&self, cfg: &ModelConfig) -> [C; 3] {
        one_point_residuals(cfg, self.x, self.unknowns())
    }

    pub fn residual_norm(&self, cfg: &ModelConfig) -> f64 {
        small::norm_inf(&self.residuals(cfg))
    }
}

/// Residuals `[E1, E2, E3]` of the one-point system.
pub fn one_point_residuals(cfg: &ModelConfig, x: C, v: [C; 3]) -> [C; 3] {
    let [g1, h4, t1] = v;
    let (mu, nu2, psi, phi, cc) = (cfg.mu(), cfg.nu().powi(2), cfg.psi(), cfg.phi(), cfg.c());
    let a = c(cc - 1.0) - x * g1;
    [
        mu * psi * g1 * h4 - t1,
        a * (c(cc) - mu * mu * phi * g1 * h4) - cc * h4,
        c(1.0) - g1 * (mu * mu * h4 + a * nu2 - x),
    ]
}

fn one_point_jacobian(cfg: &ModelConfig, x: C, v: [C; 3]) -> [[C; 3]; 3] {
    let [g1, h4, _] = v;
    let (mu, nu2, psi, phi, cc) = (cfg.mu(), cfg.nu().powi(2), cfg.psi(), cfg.phi(), cfg.c());
    let mu2 = mu * mu;
    let a = c(cc - 1.0) - x * g1;
    let z = c(0.0);
    [
        [mu * psi * h4, mu * psi * g1, c(-1.0)],
        [
            -x * (c(cc) - mu2 * phi * g1 * h4) - a * mu2 * phi * h4,
            -a * mu2 * phi * g1 - cc,
            z,
        ],
        [-(mu2 * h4 + a * nu2 - x) + x * nu2 * g1, -g1 * mu2, z],
    ]
}

/// Residual norm relative to the size of the terms in each equation, so that
/// convergence is judged consistently when `g1` is large (near an atom).
fn scaled_norm(cfg: &ModelConfig, x: C, v: [C; 3], r: &[C; 3]) -> f64 {
    let [g1, h4, t1] = v;
    let (mu2, nu2, psi, phi, cc) = (cfg.mu().powi(2), cfg.nu().powi(2), cfg.psi(), cfg.phi(), cfg.c());
    let a = (c(cc - 1.0) - x * g1).norm();
    let s1 = 1.0 + mu2.sqrt() * psi * (g1 * h4).norm() + t1.norm();
    let s2 = 1.0 + a * (cc + mu2 * phi * (g1 * h4).norm()) + cc * h4.norm();
    let s3 = 1.0 + g1.norm() * (mu2 * h4.norm() + a * nu2 + x.norm());
    (r[0].norm() / s1).max(r[1].norm() / s2).max(r[2].norm() / s3)
}

/// Partial derivatives of the residuals with respect to `x`.
fn one_point_dx(cfg: &ModelConfig, v: [C; 3]) -> [C; 3] {
    let [g1, h4, _] = v;
    let (mu, nu2, phi, cc) = (cfg.mu(), cfg.nu().powi(2), cfg.phi(), cfg.c());
    [
        c(0.0),
        -g1 * (c(cc) - mu * mu * phi * g1 * h4),
        g1 * (nu2 * g1 + 1.0),
    ]
}

#[derive(Debug)]
struct NewtonFailure {
    residual: f64,
    iterations: usize,
    last: [C; 3],
}

/// Damped Newton on the one-point system.
fn newton(cfg: &ModelConfig, x: C, init: [C; 3], max_iter: usize) -> std::result::Result<[C; 3], NewtonFailure> {
    let mut v = init;
    let mut r = one_point_residuals(cfg, x, v);
    let mut nr = scaled_norm(cfg, x, v, &r);
    let fail = |v: [C; 3], nr: f64, it: usize| NewtonFailure {
        residual: nr,
        iterations: it,
        last: v,
    };
    for it in 0..max_iter {
        if !nr.is_finite() {
            return Err(fail(v, nr, it));
        }
        if nr < NEWTON_TOL {
            // A couple of undamped polishing steps; keep them only if they help.
            for _ in 0..2 {
                let j = one_point_jacobian(cfg, x, v);
                let Some(step) = small::solve(j, [-r[0], -r[1], -r[2]]) else { break };
                let w = [v[0] + step[0], v[1] + step[1], v[2] + step[2]];
                let rw = one_point_residuals(cfg, x, w);
                let nw = scaled_norm(cfg, x, w, &rw);
                if nw < nr {
                    v = w;
                    r = rw;
                    nr = nw;
                } else {
                    break;
                }
            }
            return Ok(v);
        }
        let j = one_point_jacobian(cfg, x, v);
        let Some(step) = small::solve(j, [-r[0], -r[1], -r[2]]) else {
            return Err(fail(v, nr, it));
        };
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let w = [v[0] + lam * step[0], v[1] + lam * step[1], v[2] + lam * step[2]];
            let rw = one_point_residuals(cfg, x, w);
            let nw = scaled_norm(cfg, x, w, &rw);
            if nw.is_finite() && nw < nr {
                v = w;
                r = rw;
                nr = nw;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            if nr < RESIDUAL_FLOOR {
                return Ok(v);
            }
            return Err(fail(v, nr, it));
        }
    }
    if nr < RESIDUAL_FLOOR {
        Ok(v)
    } else {
        Err(fail(v, nr, max_iter))
    }
}

fn divergence(x: C, f: NewtonFailure) -> Error {
    Error::SolverDivergence {
        x,
        residual: f.residual,
        iterations: f.iterations,
        last: f.last,
    }
}

/// Branch rule for `Im x > 0`: `Im g1 >= 0` and `Im(x g1) >= 0`, the latter
/// being `Im g3 <= 0`. Both hold for the Stieltjes transform of any
/// probability measure on the nonnegative half-line.
pub fn is_admissible(sol: &OnePointSolution) -> bool {
    let tol = 1e-10 * (1.0 + sol.g1.norm());
    let xg = sol.x * sol.g1;
    let finite = sol.g1.is_finite() && sol.h4.is_finite() && sol.t1.is_finite();
    if sol.x.im == 0.0 {
        // Real evaluation left of the support.
        return finite
            && sol.g1.re > 0.0
            && sol.g3.re > -1e-12
            && sol.g1.im.abs() <= tol
            && sol.g3.im.abs() <= tol;
    }
    finite && sol.g1.im >= -tol && xg.im >= -1e-10 * (1.0 + xg.norm())
}

/// Imaginary height of the continuation anchor.
pub fn anchor_height(cfg: &ModelConfig) -> f64 {
    (10.0 * cfg.feature_power() * (1.0 + cfg.c().sqrt()).powi(2)).max(10.0)
}

/// Leading large-`|x|` asymptotics: `g1 ~ -1/x`, `h4 ~ c`, `t1 ~ mu psi g1 c`.
fn asymptotic_guess(cfg: &ModelConfig, x: C) -> [C; 3] {
    let g1 = -x.inv();
    [g1, c(cfg.c()), cfg.mu() * cfg.psi() * cfg.c() * g1]
}

/// Follows the solution along `path(tau)`, `tau` from 0 to 1, starting from the
/// known solution at `path(0)`, with adaptive steps and a secant predictor.
fn track(
    cfg: &ModelConfig,
    path: &dyn Fn(f64) -> C,
    start: [C; 3],
    admissible: &dyn Fn(&OnePointSolution) -> bool,
) -> Result<[C; 3]> {
    let mut tau = 0.0;
    let mut v = start;
    let mut prev: Option<(f64, [C; 3])> = None;
    let mut dtau: f64 = 0.05;
    let mut steps = 0usize;
    while tau < 1.0 {
        steps += 1;
        if steps > 20_000 || dtau < 1e-12 {
            let x = path(tau);
            return Err(Error::SolverDivergence {
                x,
                residual: small::norm_inf(&one_point_residuals(cfg, x, v)),
                iterations: steps,
                last: v,
            });
        }
        let next = (tau + dtau).min(1.0);
        let x = path(next);
        // Secant predictor in tau.
        let guess = match prev {
            Some((tp, vp)) if tau > tp => {
                let f = (next - tau) / (tau - tp);
                [
                    v[0] + (v[0] - vp[0]) * f,
                    v[1] + (v[1] - vp[1]) * f,
                    v[2] + (v[2] - vp[2]) * f,
                ]
            }
            _ => v,
        };
        let attempt = newton(cfg, x, guess, 40).ok().filter(|w| {
            let sol = OnePointSolution::from_unknowns(cfg, x, *w);
            let jump = (w[0] - v[0]).norm() <= 0.5 * (w[0].norm() + v[0].norm()) + 1e-300;
            admissible(&sol) && jump
        });
        match attempt {
            Some(w) => {
                prev = Some((tau, v));
                v = w;
                tau = next;
                dtau = (dtau * 1.5).min(0.1);
            }
            None => {
                dtau *= 0.5;
                prev = prev.filter(|_| false);
            }
        }
    }
    Ok(v)
}

/// Solves the one-point system at `x` on the physical branch.
///
/// With a seed, Newton starts from it and the result is accepted if it is
/// admissible; otherwise (and without a seed) the solution is continued down
/// from the large-imaginary anchor. For `Im x < 0` the conjugate of the
/// solution at `conj(x)` is returned; for real `x < 0` the real branch is
/// followed along the negative axis.
pub fn solve_one_point(x: C, cfg: &ModelConfig, seed: Option<&OnePointSolution>) -> Result<OnePointSolution> {
    if !x.is_finite() {
        return Err(Error::InvalidConfig(format!("evaluation point {x} is not finite")));
    }
    if cfg.is_trivial_activation() {
        return Err(Error::InvalidConfig("mu = nu = 0: the feature matrix vanishes".into()));
    }
    if x.im < 0.0 {
        let s = solve_one_point(x.conj(), cfg, seed.map(|s| s.conj()).as_ref())?;
        return Ok(s.conj());
    }
    if x.im == 0.0 {
        if x.re < 0.0 {
            return solve_real_negative(x.re, cfg);
        }
        return Err(Error::BranchSelection { x });
    }
    if let Some(s) = seed {
        if let Ok(v) = newton(cfg, x, s.unknowns(), NEWTON_MAX_ITER) {
            let sol = OnePointSolution::from_unknowns(cfg, x, v);
            if is_admissible(&sol) && (sol.g1 - s.g1).norm() <= 0.5 * (sol.g1.norm() + s.g1.norm()) {
                return Ok(sol);
            }
        }
    }
    let height = anchor_height(cfg);
    let anchor = C::new(x.re, height.max(x.im));
    let start = newton(cfg, anchor, asymptotic_guess(cfg, anchor), NEWTON_MAX_ITER)
        .map_err(|f| divergence(anchor, f))?;
    if !is_admissible(&OnePointSolution::from_unknowns(cfg, anchor, start)) {
        return Err(Error::BranchSelection { x: anchor });
    }
    let v = if x.im >= height {
        start
    } else {
        let (l0, l1) = (height.ln(), x.im.ln());
        let re = x.re;
        let path = move |tau: f64| {
            if tau >= 1.0 {
                x
            } else {
                C::new(re, (l0 + (l1 - l0) * tau).exp())
            }
        };
        let v = track(cfg, &path, start, &is_admissible)?;
        newton(cfg, x, v, NEWTON_MAX_ITER).map_err(|f| divergence(x, f))?
    };
    let sol = OnePointSolution::from_unknowns(cfg, x, v);
    if !is_admissible(&sol) {
        return Err(Error::BranchSelection { x });
    }
    Ok(sol)
}

/// Real branch at `x < 0`, continued along the negative axis from far left.
pub fn solve_real_negative(x: f64, cfg: &ModelConfig) -> Result<OnePointSolution> {
    if !(x < 0.0) {
        return Err(Error::InvalidConfig(format!("real evaluation requires x < 0, got {x}")));
    }
    let far = 10.0 * anchor_height(cfg);
    let start_x = c(-far.max(-x));
    let start = newton(cfg, start_x, asymptotic_guess(cfg, start_x), NEWTON_MAX_ITER)
        .map_err(|f| divergence(start_x, f))?;
    let v = if -x >= far {
        start
    } else {
        let (l0, l1) = (far.ln(), (-x).ln());
        let path = move |tau: f64| {
            if tau >= 1.0 {
                c(x)
            } else {
                c(-(l0 + (l1 - l0) * tau).exp())
            }
        };
        let v = track(cfg, &path, start, &is_admissible)?;
        newton(cfg, c(x), v, NEWTON_MAX_ITER).map_err(|f| divergence(c(x), f))?
    };
    let sol = OnePointSolution::from_unknowns(cfg, c(x), v);
    if !is_admissible(&sol) {
        return Err(Error::BranchSelection { x: c(x) });
    }
    Ok(sol)
}

/// Coefficients of the polynomial in `g1` obtained by eliminating `h4` and
/// `t1`: `D - g mu^2 c A - g nu^2 A D + x g D` with `A = c - 1 - x g` and
/// `D = c + mu^2 phi g A`.
pub fn elimination_polynomial(x: C, cfg: &ModelConfig) -> Poly {
    let (mu2, nu2, phi, cc) = (cfg.mu().powi(2), cfg.nu().powi(2), cfg.phi(), cfg.c());
    let a = Poly::linear(c(cc - 1.0), -x);
    let g = Poly::linear(c(0.0), c(1.0));
    let ga = g.mul(&a);
    let d = Poly::constant(c(cc)).add(&ga.scale(c(mu2 * phi)));
    d.add(&ga.scale(c(-mu2 * cc)))
        .add(&ga.mul(&d).scale(c(-nu2)))
        .add(&g.mul(&d).scale(x))
}

/// Every root of the one-point system at `x`, Newton-polished. Spurious roots
/// of the eliminated polynomial (where `D = 0`) are dropped.
pub fn enumerate_roots(x: C, cfg: &ModelConfig) -> Vec<OnePointSolution> {
    let cc = cfg.c();
    let mu2phi = cfg.mu().powi(2) * cfg.phi();
    let mut out: Vec<OnePointSolution> = Vec::new();
    for g in elimination_polynomial(x, cfg).roots() {
        let a = c(cc - 1.0) - x * g;
        let d = c(cc) + mu2phi * g * a;
        if d.norm() < 1e-13 {
            continue;
        }
        let h4 = cc * a / d;
        let t1 = cfg.mu() * cfg.psi() * g * h4;
        let Ok(v) = newton(cfg, x, [g, h4, t1], 50) else { continue };
        let sol = OnePointSolution::from_unknowns(cfg, x, v);
        if sol.residual_norm(cfg) < RESIDUAL_FLOOR
            && !out.iter().any(|o| (o.g1 - sol.g1).norm() < 1e-9 * (1.0 + sol.g1.norm()))
        {
            out.push(sol);
        }
    }
    out
}

/// Picks among candidate roots by the branch rule, breaking ties by distance
/// to the predictor. Two admissible roots at nearly equal distance are
/// reported as ambiguous.
pub fn select_root(candidates: &[OnePointSolution], predictor: Option<&OnePointSolution>) -> Result<OnePointSolution> {
    let admissible: Vec<&OnePointSolution> = candidates.iter().filter(|s| is_admissible(s)).collect();
    let x = candidates.first().map(|s| s.x).unwrap_or(c(0.0));
    match admissible.len() {
        0 => Err(Error::BranchSelection { x }),
        1 => Ok(*admissible[0]),
        _ => {
            let Some(p) = predictor else {
                return Err(Error::AmbiguousBranch { x });
            };
            let mut ranked: Vec<(f64, &OnePointSolution)> =
                admissible.iter().map(|s| ((s.g1 - p.g1).norm(), *s)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            if ranked[0].0 > 0.9 * ranked[1].0 {
                return Err(Error::AmbiguousBranch { x });
            }
            Ok(*ranked[0].1)
        }
    }
}

/// Solves each point with the previous solution as seed; the first point is
/// continued from the anchor. Failures carry the index of the failing point.
pub fn continuation_sweep(points: &[C], cfg: &ModelConfig) -> Result<Vec<OnePointSolution>> {
    let mut out: Vec<OnePointSolution> = Vec::with_capacity(points.len());
    for (i, &x) in points.iter().enumerate() {
        let seed = out.last().filter(|p| p.x.im.signum() == x.im.signum() && x.im != 0.0);
        let sol = solve_one_point(x, cfg, seed).map_err(|e| e.at_index(i))?;
        out.push(sol);
    }
    Ok(out)
}

/// `(d g1/dx, d h4/dx, d t1/dx)` by implicit differentiation.
pub fn one_point_derivative(sol: &OnePointSolution, cfg: &ModelConfig) -> Result<[C; 3]> {
    let v = sol.unknowns();
    let j = one_point_jacobian(cfg, sol.x, v);
    let e = one_point_dx(cfg, v);
    small::solve(j, [-e[0], -e[1], -e[2]]).ok_or(Error::DegeneratePoint { x: sol.x, y: sol.x })
}

/// `dV/dx = s^2 (g1 + x g1') - h4'`.
pub fn dv_dx(sol: &OnePointSolution, cfg: &ModelConfig) -> Result<C> {
    let [dg, dh, _] = one_point_derivative(sol, cfg)?;
    Ok(cfg.s().powi(2) * (sol.g1 + sol.x * dg) - dh)
}

/// Solution `(q1, q2, q4, q5)` of the two-point system at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSolution {
    pub x: C,
    pub y: C,
    pub q1: C,
    pub q2: C,
    pub q4: C,
    pub q5: C,
}

impl TwoPointSolution {
    pub fn as_array(&self) -> [C; 4] {
        [self.q1, self.q2, self.q4, self.q5]
    }

    /// Residuals of the four two-point equations at this solution.
    pub fn residuals(&self, sx: &OnePointSolution, sy: &OnePointSolution, cfg: &ModelConfig) -> [C; 4] {
        two_point_residuals(sx, sy, cfg, self.as_array())
    }
}

/// The two-point equations as `A q + k = 0` with `q = (q1, q2, q4, q5)`.
pub fn two_point_system(sx: &OnePointSolution, sy: &OnePointSolution, cfg: &ModelConfig) -> ([[C; 4]; 4], [C; 4]) {
    let (mu, nu2, psi, phi, cc) = (cfg.mu(), cfg.nu().powi(2), cfg.psi(), cfg.phi(), cfg.c());
    let mu2 = mu * mu;
    let (x, y) = (sx.x, sy.x);
    let ax = c(cc - 1.0) - x * sx.g1;
    let ay = c(cc - 1.0) - y * sy.g1;
    let bx = mu * psi * ax;
    let z = c(0.0);
    let a = [
        [mu2 * sx.h4 - x + nu2 * ax, -mu2 * sy.g1, -cc * nu2 * sy.g1, z],
        [bx * mu * sy.h4, -bx * mu * sx.g1 - 1.0, cc * sy.h1, z],
        [
            nu2 * psi * ay,
            z,
            -mu2 * phi * sx.g1 * sx.h1 - nu2 * phi * sx.g1 - phi,
            mu2 * ay,
        ],
        [
            psi * sy.h1,
            z,
            psi * mu2 * phi * sx.g1 * sy.g1 * sy.h1,
            -mu2 * psi * sx.g1 * ax - 1.0,
        ],
    ];
    let k = [
        mu * sy.g1 * (sx.t1 + sy.t1) - sy.g1,
        bx * sx.g1 * sy.t1,
        z,
        psi * psi * sx.g1 * sy.g1 * sy.h1,
    ];
    (a, k)
}

pub fn two_point_residuals(sx: &OnePointSolution, sy: &OnePointSolution, cfg: &ModelConfig, q: [C; 4]) -> [C; 4] {
    let (a, k) = two_point_system(sx, sy, cfg);
    let mut r = k;
    for i in 0..4 {
        for j in 0..4 {
            r[i] += a[i][j] * q[j];
        }
    }
    r
}

/// Solves the (linear) two-point system.
pub fn solve_two_point(
    x: C,
    y: C,
    sol_x: &OnePointSolution,
    sol_y: &OnePointSolution,
    cfg: &ModelConfig,
) -> Result<TwoPointSolution> {
    if (sol_x.x - x).norm() > 1e-12 * (1.0 + x.norm()) || (sol_y.x - y).norm() > 1e-12 * (1.0 + y.norm()) {
        return Err(Error::InvalidConfig("one-point solutions do not match the evaluation points".into()));
    }
    let (a, k) = two_point_system(sol_x, sol_y, cfg);
    // Entries span many orders of magnitude near the origin, so the
    // singularity test runs on the row- and column-equilibrated matrix.
    let mut e = a;
    for row in e.iter_mut() {
        let m = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::DegeneratePoint { x, y });
        }
        row.iter_mut().for_each(|z| *z /= m);
    }
    for j in 0..4 {
        let m = e.iter().map(|row| row[j].norm()).fold(0.0, f64::max);
        if !(m > 0.0) {
            return Err(Error::DegeneratePoint { x, y });
        }
        e.iter_mut().for_each(|row| row[j] /= m);
    }
    let scale: f64 = e
        .iter()
        .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .product();
    if small::det(e).norm() < 1e-14 * scale {
        return Err(Error::DegeneratePoint { x, y });
    }
    let q = small::solve(a, [-k[0], -k[1], -k[2], -k[3]]).ok_or(Error::DegeneratePoint { x, y })?;
    Ok(TwoPointSolution {
        x,
        y,
        q1: q[0],
        q2: q[1],
        q4: q[2],
        q5: q[3],
    })
}

/// The five Stieltjes transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValues {
    pub k: C,
    pub l0: C,
    pub v: C,
    pub h0: Option<C>,
    pub w: Option<C>,
}

pub fn evaluate_transforms(sol_x: &OnePointSolution, two_point: Option<&TwoPointSolution>, cfg: &ModelConfig) -> TransformValues {
    let r2 = cfg.r().powi(2);
    TransformValues {
        k: sol_x.t1,
        l0: r2 * sol_x.g1,
        v: v_transform(sol_x, cfg),
        h0: two_point.map(|q| r2 * q.q1),
        w: two_point.map(|q| w_transform(q, cfg)),
    }
}

// s = 0 skips the noise term so that V = c - h4 holds bit for bit.
pub fn v_transform(sol: &OnePointSolution, cfg: &ModelConfig) -> C {
    let s2 = cfg.s().powi(2);
    let base = c(cfg.c()) - sol.h4;
    if s2 == 0.0 {
        base
    } else {
        s2 * (c(1.0) + sol.x * sol.g1) + base
    }
}

pub fn w_transform(q: &TwoPointSolution, cfg: &ModelConfig) -> C {
    let s2 = cfg.s().powi(2);
    if s2 == 0.0 {
        q.q2
    } else {
        s2 * cfg.c() * q.q4 + q.q2
    }
}
