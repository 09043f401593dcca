//! Spectral measures recovered from boundary values of the transforms.
//!
//! One-variable densities come from `Im F(r + i offset) / pi` with a
//! Richardson step in the offset; atoms at zero from `eps Im F(i eps)`
//! extrapolated to `eps = 0`. Two-variable densities use the four-point
//! combination of real parts, plus separately extracted corner atom, edge
//! cross density and diagonal component.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::quadrature::{banded_grid, extrapolate_to_zero, Grid};
use crate::stieltjes::{solve_one_point, solve_two_point, v_transform, w_transform, OnePointSolution, TwoPointSolution};

/// One-variable transforms whose measures can be extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    /// Normalized resolvent trace; its measure is the spectral distribution.
    G1,
    K,
    L0,
    V,
}

impl Transform {
    pub fn eval(&self, sol: &OnePointSolution, cfg: &ModelConfig) -> C {
        match self {
            Transform::G1 => sol.g1,
            Transform::K => sol.t1,
            Transform::L0 => cfg.r().powi(2) * sol.g1,
            Transform::V => v_transform(sol, cfg),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::G1 => "g1",
            Transform::K => "K",
            Transform::L0 => "L0",
            Transform::V => "V",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(Transform::G1),
            "k" => Ok(Transform::K),
            "l0" => Ok(Transform::L0),
            "v" => Ok(Transform::V),
            other => Err(Error::InvalidConfig(format!("unknown transform '{other}'"))),
        }
    }
}

/// Two-variable transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform2 {
    H0,
    W,
}

impl Transform2 {
    pub fn eval(&self, q: &TwoPointSolution, cfg: &ModelConfig) -> C {
        match self {
            Transform2::H0 => cfg.r().powi(2) * q.q1,
            Transform2::W => w_transform(q, cfg),
        }
    }
}

/// Numerical knobs of the extraction. Offsets are relative to the support
/// width unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionOptions {
    pub grid_points: usize,
    pub grid_points_2d: usize,
    /// Offset for one-variable densities.
    pub offset: f64,
    /// Offset for the off-diagonal two-variable lattice.
    pub offset_2d: f64,
    /// Offset for the diagonal component of two-variable measures.
    pub offset_diagonal: f64,
    /// Atom extrapolation sequence (absolute); derived from the support if `None`.
    pub eps: Option<Vec<f64>>,
    pub density_floor: f64,
    pub scan_points: usize,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            grid_points: 200,
            grid_points_2d: 200,
            offset: 1e-6,
            offset_2d: 1e-10,
            offset_diagonal: 1e-7,
            eps: None,
            density_floor: 1e-8,
            scan_points: 2000,
        }
    }
}

/// Support of the spectral distribution: its hull and the disjoint bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
    pub bands: Vec<(f64, f64)>,
}

impl Support {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Initial search window `[0, 4 (mu^2 + nu^2)(1 + sqrt(max(c, 1/c)))^2]`.
pub fn support_window(cfg: &ModelConfig) -> f64 {
    let k = cfg.c().max(1.0 / cfg.c()).sqrt();
    4.0 * cfg.feature_power() * (1.0 + k).powi(2)
}

fn at(x: f64, y: f64) -> C {
    C::new(x, y)
}

/// Finds the bands where the density of the spectral distribution exceeds
/// `density_floor`, scanning at absolute imaginary offset `offset` (with the
/// atom's Lorentzian removed and one Richardson step) and refining each edge
/// by bisection.
pub fn locate_support(cfg: &ModelConfig, offset: f64) -> Result<Support> {
    locate_support_with(cfg, offset, 1e-8, 2000)
}

pub fn locate_support_with(cfg: &ModelConfig, offset: f64, density_floor: f64, scan_points: usize) -> Result<Support> {
    if !(offset > 0.0) {
        return Err(Error::InvalidConfig(format!("offset must be positive, got {offset}")));
    }
    if cfg.is_trivial_activation() {
        return Err(Error::EmptySupport);
    }
    let mut window = support_window(cfg);
    // Rough atom for subtracting its Lorentzian tail during the scan.
    let eps = 1e-9 * window;
    let alpha = eps * solve_one_point(at(0.0, eps), cfg, None)?.g1.im;
    // The Richardson step removes the tail `offset * \int rho / (u - r)^2`
    // that otherwise keeps points just outside a band above the floor.
    let density = |r: f64| -> Result<f64> {
        let one = |o: f64| -> Result<f64> {
            let s = solve_one_point(at(r, o), cfg, None)?;
            Ok((s.g1.im - alpha * o / (r * r + o * o)) / PI)
        };
        Ok(2.0 * one(offset)? - one(2.0 * offset)?)
    };
    for _ in 0..12 {
        let h = window / scan_points as f64;
        let xs: Vec<f64> = (0..scan_points).map(|k| (k as f64 + 0.5) * h).collect();
        let vals: Vec<Result<f64>> = xs.par_iter().map(|&r| density(r)).collect();
        let mut above = Vec::with_capacity(scan_points);
        for (k, v) in vals.into_iter().enumerate() {
            above.push(v.map_err(|e| Error::Extraction {
                index: k,
                source: Box::new(e),
            })? > density_floor);
        }
        if !above.iter().any(|&b| b) {
            return Err(Error::EmptySupport);
        }
        if *above.last().unwrap() {
            window *= 2.0;
            continue;
        }
        let inside = |r: f64| density(r).map(|d| d > density_floor);
        let refine = |mut out: f64, mut inn: f64| -> Result<f64> {
            for _ in 0..60 {
                if (out - inn).abs() <= 1e-13 * window {
                    break;
                }
                let mid = 0.5 * (out + inn);
                if inside(mid)? {
                    inn = mid;
                } else {
                    out = mid;
                }
            }
            Ok(0.5 * (out + inn))
        };
        let mut bands = Vec::new();
        let mut k = 0;
        while k < scan_points {
            if !above[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < scan_points && above[k] {
                k += 1;
            }
            let lo = if start == 0 { refine(0.0, xs[0])? } else { refine(xs[start - 1], xs[start])? };
            let hi = refine(xs[k], xs[k - 1])?;
            bands.push((lo.max(0.0), hi));
        }
        // Merge bands split by a numerically insignificant gap.
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for b in bands {
            match merged.last_mut() {
                Some(last) if b.0 - last.1 < 1e-6 * window => last.1 = b.1,
                _ => merged.push(b),
            }
        }
        return Ok(Support {
            lo: merged[0].0,
            hi: merged.last().unwrap().1,
            bands: merged,
        });
    }
    Err(Error::EmptySupport)
}

/// Default atom extrapolation sequence: well below the lowest band edge and
/// spanning two decades.
pub fn default_eps(support: &Support) -> Vec<f64> {
    let w = support.hi.max(1e-300);
    let base = if support.lo > 1e-6 * w {
        (1e-2 * support.lo).min(1e-4 * w)
    } else {
        1e-6 * w
    };
    vec![base, 0.1 * base, 0.01 * base]
}

/// Atom estimate with its extrapolation spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomEstimate {
    pub value: f64,
    pub spread: f64,
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidConfig("atom extrapolation needs at least 3 positive eps values".into()));
    }
    let (mn, mx) = eps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if mx / mn < 99.999 {
        return Err(Error::InvalidConfig("eps sequence must span at least two decades".into()));
    }
    Ok(())
}

const ATOM_FLOOR: f64 = 1e-7;

fn atom_from_values(eps: &[f64], values: &[f64]) -> Result<AtomEstimate> {
    let (value, spread) = extrapolate_to_zero(eps, values, 2);
    if spread > 0.1 * value.abs().max(ATOM_FLOOR) {
        return Err(Error::UnreliableAtom { value, spread });
    }
    Ok(AtomEstimate { value, spread })
}

/// `lim eps Im F(i eps)`, extrapolated in `eps^2` (the correction is even in
/// `eps` when the bulk is separated from zero).
pub fn atom_weight(transform: Transform, cfg: &ModelConfig, eps: &[f64]) -> Result<AtomEstimate> {
    check_eps(eps)?;
    let sols = solve_on_axis(cfg, eps)?;
    let vals: Vec<f64> = eps.iter().zip(&sols).map(|(e, s)| e * transform.eval(s, cfg).im).collect();
    atom_from_values(eps, &vals)
}

fn solve_on_axis(cfg: &ModelConfig, eps: &[f64]) -> Result<Vec<OnePointSolution>> {
    eps.iter()
        .enumerate()
        .map(|(i, &e)| solve_one_point(at(0.0, e), cfg, None).map_err(|err| err.at_index(i)))
        .collect()
}

/// Sampled one-variable measure: continuous density on the grid plus an atom at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure1D {
    pub transform: Transform,
    pub support: Support,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
    pub atom0: f64,
    pub atom_spread: f64,
}

impl SpectralMeasure1D {
    /// `\int f drho` including the atom.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let bulk: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.density)
            .map(|((&u, &w), &d)| w * d * f(u))
            .sum();
        bulk + self.atom0 * f(0.0)
    }

    pub fn continuous_mass(&self) -> f64 {
        self.weights.iter().zip(&self.density).map(|(w, d)| w * d).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.atom0
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# atom0={:e}", self.atom0)?;
        writeln!(out, "node,density")?;
        for (u, d) in self.nodes.iter().zip(&self.density) {
            writeln!(out, "{u:e},{d:e}")?;
        }
        Ok(())
    }
}

/// `lim -x F(x)` at `x = 1e6 i` (scaled with the spectrum): the total mass
/// of the measure of `F`.
pub fn mass_at_infinity(transform: Transform, cfg: &ModelConfig) -> Result<f64> {
    let y = 1e6 * support_window(cfg).max(1.0);
    let x = at(0.0, y);
    let s = solve_one_point(x, cfg, None)?;
    Ok((-x * transform.eval(&s, cfg)).re)
}

/// One-point solutions shared by every extraction for a given config.
#[derive(Debug, Clone)]
pub struct Samples {
    pub support: Support,
    pub grid: Grid,
    pub offset: f64,
    /// Solutions at `r + i offset` and `r + 2 i offset`.
    pub near: Vec<(OnePointSolution, OnePointSolution)>,
    pub eps: Vec<f64>,
    pub on_axis: Vec<OnePointSolution>,
}

fn solve_nodes(cfg: &ModelConfig, nodes: &[f64], offset: f64) -> Result<Vec<(OnePointSolution, OnePointSolution)>> {
    nodes
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let a = solve_one_point(at(r, offset), cfg, None);
            let b = solve_one_point(at(r, 2.0 * offset), cfg, None);
            match (a, b) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                (Err(e), _) | (_, Err(e)) => Err(Error::Extraction {
                    index: i,
                    source: Box::new(e),
                }),
            }
        })
        .collect()
}

impl Samples {
    pub fn new(cfg: &ModelConfig, grid_points: usize, opts: &ExtractionOptions) -> Result<Samples> {
        if grid_points < 16 {
            return Err(Error::InvalidConfig(format!("at least 16 grid points required, got {grid_points}")));
        }
        let scan_offset = 1e-12 * support_window(cfg);
        let support = locate_support_with(cfg, scan_offset, opts.density_floor, opts.scan_points)?;
        Self::on_support(cfg, support, grid_points, opts)
    }

    pub fn on_support(cfg: &ModelConfig, support: Support, grid_points: usize, opts: &ExtractionOptions) -> Result<Samples> {
        if !(opts.offset > 0.0) {
            return Err(Error::InvalidConfig("offset must be positive".into()));
        }
        let grid = banded_grid(&support.bands, grid_points, 16);
        let offset = opts.offset * support.width();
        let near = solve_nodes(cfg, &grid.nodes, offset)?;
        let eps = opts.eps.clone().unwrap_or_else(|| default_eps(&support));
        check_eps(&eps)?;
        let on_axis = solve_on_axis(cfg, &eps)?;
        Ok(Samples {
            support,
            grid,
            offset,
            near,
            eps,
            on_axis,
        })
    }

    pub fn measure(&self, transform: Transform, cfg: &ModelConfig) -> Result<SpectralMeasure1D> {
        let vals: Vec<f64> = self
            .eps
            .iter()
            .zip(&self.on_axis)
            .map(|(e, s)| e * transform.eval(s, cfg).im)
            .collect();
        let atom = atom_from_values(&self.eps, &vals)?;
        let d = self.offset;
        // Band endpoints are where the density meets the scan floor; their
        // boundary values carry an O(sqrt(offset)) bias, so they are pinned to 0.
        let is_edge = |r: f64| self.support.bands.iter().any(|&(a, b)| r == a || r == b);
        let density: Vec<f64> = self
            .grid
            .nodes
            .iter()
            .zip(&self.near)
            .map(|(&r, (s1, s2))| {
                if is_edge(r) {
                    return 0.0;
                }
                let lor = |o: f64| atom.value * o / (r * r + o * o);
                let rho1 = (transform.eval(s1, cfg).im - lor(d)) / PI;
                let rho2 = (transform.eval(s2, cfg).im - lor(2.0 * d)) / PI;
                2.0 * rho1 - rho2
            })
            .collect();
        if transform == Transform::G1 {
            let peak = density.iter().cloned().fold(0.0, f64::max);
            let low = density.iter().cloned().fold(0.0, f64::min);
            if low < -1e-6 * peak.max(1e-300) {
                let neg: f64 = self
                    .grid
                    .weights
                    .iter()
                    .zip(&density)
                    .map(|(w, d)| w * d.min(0.0))
                    .sum();
                return Err(Error::NegativeMass { mass: neg });
            }
        }
        Ok(SpectralMeasure1D {
            transform,
            support: self.support.clone(),
            nodes: self.grid.nodes.clone(),
            weights: self.grid.weights.clone(),
            density,
            atom0: atom.value,
            atom_spread: atom.spread,
        })
    }
}

/// Extracts the measure of one transform on `grid_points` cosine-stretched
/// nodes, using an offset `offset` relative to the support width.
pub fn density_1d(transform: Transform, cfg: &ModelConfig, grid_points: usize, offset: f64) -> Result<SpectralMeasure1D> {
    let opts = ExtractionOptions {
        grid_points,
        offset,
        ..ExtractionOptions::default()
    };
    Samples::new(cfg, grid_points, &opts)?.measure(transform, cfg)
}

/// Sampled two-variable measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure2D {
    pub transform: Transform2,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Continuous density, row-major `n x n`.
    pub density: Vec<f64>,
    pub corner_atom: f64,
    /// Cross density paired with the atom at 0 (both orientations summed).
    pub edge_density: Vec<f64>,
    /// Density of the component carried by the diagonal `u = v`, if present.
    pub diagonal_density: Option<Vec<f64>>,
    /// Total mass implied by the transform at large imaginary arguments.
    pub mass_budget: f64,
    /// Largest `|rho(u, v) - rho(v, u)|` before any symmetrization.
    pub asymmetry: f64,
    pub symmetrized: bool,
}

impl SpectralMeasure2D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.nodes.len() + j]
    }

    /// `\iint k(u) k(v) drho(u, v)` given `k` at the nodes and `k0 = k(0)`.
    pub fn integrate_separable(&self, k: &[f64], k0: f64) -> f64 {
        let n = self.nodes.len();
        let kw: Vec<f64> = k.iter().zip(&self.weights).map(|(k, w)| k * w).collect();
        let mut total = 0.0;
        for i in 0..n {
            let row = &self.density[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(&kw).map(|(r, k)| r * k).sum();
            total += kw[i] * s;
        }
        total += self.corner_atom * k0 * k0;
        total += k0 * self.edge_density.iter().zip(&kw).map(|(e, k)| e * k).sum::<f64>();
        if let Some(m) = &self.diagonal_density {
            total += m.iter().zip(&kw).zip(k).map(|((m, kw), k)| m * kw * k).sum::<f64>();
        }
        total
    }

    pub fn continuous_mass(&self) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += self.weights[i] * self.weights[j] * self.density[i * n + j];
            }
        }
        total
    }

    pub fn diagonal_mass(&self) -> f64 {
        self.diagonal_density
            .as_ref()
            .map(|m| m.iter().zip(&self.weights).map(|(m, w)| m * w).sum())
            .unwrap_or(0.0)
    }

    pub fn edge_mass(&self) -> f64 {
        self.edge_density.iter().zip(&self.weights).map(|(e, w)| e * w).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.diagonal_mass() + self.edge_mass() + self.corner_atom
    }

    /// Dense matrix CSV plus the axis node list (identical for both axes).
    pub fn write_csv<W1: Write, W2: Write>(&self, mut matrix: W1, mut axis: W2) -> io::Result<()> {
        let n = self.nodes.len();
        writeln!(matrix, "# corner_atom={:e}", self.corner_atom)?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:e}", self.at(i, j))).collect();
            writeln!(matrix, "{}", row.join(","))?;
        }
        let diag = self.diagonal_density.clone();
        writeln!(axis, "node,weight,edge_density,diagonal_density")?;
        for i in 0..n {
            let m = diag.as_ref().map(|m| format!("{:e}", m[i])).unwrap_or_else(|| "nan".into());
            writeln!(axis, "{:e},{:e},{:e},{}", self.nodes[i], self.weights[i], self.edge_density[i], m)?;
        }
        Ok(())
    }
}

/// Both two-variable measures from one set of lattice solves.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoVariableMeasures {
    pub h0: SpectralMeasure2D,
    pub w: SpectralMeasure2D,
}

/// Extracts the measures of `H0` and `W` on a lattice of `grid_points`
/// cosine-stretched nodes per axis over the given support.
pub fn density_2d_on(cfg: &ModelConfig, support: &Support, grid_points: usize, opts: &ExtractionOptions) -> Result<TwoVariableMeasures> {
    if grid_points < 16 {
        return Err(Error::InvalidConfig(format!("at least 16 grid points per axis required, got {grid_points}")));
    }
    let grid = banded_grid(&support.bands, grid_points, 16);
    let n = grid.len();
    let width = support.width();
    let off = opts.offset_2d * width;
    let offd = opts.offset_diagonal * width;
    let lattice = solve_nodes(cfg, &grid.nodes, off)?;
    let diag_sols = solve_nodes(cfg, &grid.nodes, offd)?;
    let eps = opts.eps.clone().unwrap_or_else(|| default_eps(support));
    check_eps(&eps)?;
    let axis = solve_on_axis(cfg, &eps)?;
    let kinds = [Transform2::H0, Transform2::W];
    let pair = |a: &OnePointSolution, b: &OnePointSolution| solve_two_point(a.x, b.x, a, b, cfg);
    let both = |q: &TwoPointSolution| [Transform2::H0.eval(q, cfg), Transform2::W.eval(q, cfg)];

    // Off-diagonal continuous part, with one Richardson step in the offset.
    let rows: Vec<Result<Vec<[f64; 2]>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![[0.0; 2]; n];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut est = [[0.0; 2]; 2];
                for (level, slot) in est.iter_mut().enumerate() {
                    let pick = |s: &(OnePointSolution, OnePointSolution)| if level == 0 { s.0 } else { s.1 };
                    let sx = pick(&lattice[i]);
                    let sy = pick(&lattice[j]);
                    let lo = both(&pair(&sx, &sy.conj())?);
                    let hi = both(&pair(&sx, &sy)?);
                    for k in 0..2 {
                        slot[k] = (lo[k] - hi[k]).re / (2.0 * PI * PI);
                    }
                }
                for k in 0..2 {
                    row[j][k] = 2.0 * est[0][k] - est[1][k];
                }
            }
            Ok(row)
        })
        .collect();
    let mut dens = [vec![0.0; n * n], vec![0.0; n * n]];
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.map_err(|e| Error::Extraction {
            index: i,
            source: Box::new(e),
        })?;
        for j in 0..n {
            for k in 0..2 {
                dens[k][i * n + j] = row[j][k];
            }
        }
    }
    // Diagonal lattice cells from their neighbours.
    for d in dens.iter_mut() {
        for i in 0..n {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            if i > 0 {
                acc += d[i * n + i - 1] + d[(i - 1) * n + i];
                cnt += 2.0;
            }
            if i + 1 < n {
                acc += d[i * n + i + 1] + d[(i + 1) * n + i];
                cnt += 2.0;
            }
            d[i * n + i] = acc / cnt;
        }
    }

    // Diagonal component: (D / pi) Re{F(x + iD, x - iD) - F(x + iD, x + iD)}.
    let diag: Vec<Result<[f64; 2]>> = diag_sols
        .par_iter()
        .map(|(s1, s2)| {
            let one = |s: &OnePointSolution, o: f64| -> Result<[f64; 2]> {
                let lo = both(&pair(s, &s.conj())?);
                let hi = both(&pair(s, s)?);
                Ok([(lo[0] - hi[0]).re * o / PI, (lo[1] - hi[1]).re * o / PI])
            };
            let a = one(s1, offd)?;
            let b = one(s2, 2.0 * offd)?;
            Ok([2.0 * a[0] - b[0], 2.0 * a[1] - b[1]])
        })
        .collect();
    let mut diag_vals = [vec![0.0; n], vec![0.0; n]];
    for (i, v) in diag.into_iter().enumerate() {
        let v = v.map_err(|e| Error::Extraction {
            index: i,
            source: Box::new(e),
        })?;
        diag_vals[0][i] = v[0];
        diag_vals[1][i] = v[1];
    }

    // Corner atom: -eps^2 Re F(i eps, i eps), extrapolated in eps^2.
    let mut corner_vals = [Vec::new(), Vec::new()];
    for (e, s) in eps.iter().zip(&axis) {
        let f = both(&pair(s, s)?);
        for k in 0..2 {
            corner_vals[k].push(-e * e * f[k].re);
        }
    }
    // Edge density: (eps / pi) Re{F(i eps, r - i off) - F(i eps, r + i off)},
    // extrapolated linearly in eps.
    let edges: Vec<Result<[f64; 2]>> = lattice
        .par_iter()
        .map(|(sr, _)| {
            let mut v = [Vec::new(), Vec::new()];
            for (e, s) in eps.iter().zip(&axis) {
                let lo = both(&pair(s, &sr.conj())?);
                let hi = both(&pair(s, sr)?);
                for k in 0..2 {
                    v[k].push(e / PI * (lo[k] - hi[k]).re);
                }
            }
            Ok([extrapolate_to_zero(&eps, &v[0], 1).0, extrapolate_to_zero(&eps, &v[1], 1).0])
        })
        .collect();
    let mut edge_vals = [vec![0.0; n], vec![0.0; n]];
    for (i, v) in edges.into_iter().enumerate() {
        let v = v.map_err(|e| Error::Extraction {
            index: i,
            source: Box::new(e),
        })?;
        edge_vals[0][i] = v[0];
        edge_vals[1][i] = v[1];
    }

    // Mass budget from -Y^2 F(iY, iY).
    let y = 1e6 * support_window(cfg).max(1.0);
    let sy = solve_one_point(at(0.0, y), cfg, None)?;
    let far = both(&pair(&sy, &sy)?);

    let mut out = Vec::with_capacity(2);
    for (k, kind) in kinds.iter().enumerate() {
        let mut density = std::mem::take(&mut dens[k]);
        let scale = density.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                asym = asym.max((density[i * n + j] - density[j * n + i]).abs());
            }
        }
        let symmetrized = asym > 1e-6 * scale.max(1e-300);
        if symmetrized {
            for i in 0..n {
                for j in i + 1..n {
                    let m = 0.5 * (density[i * n + j] + density[j * n + i]);
                    density[i * n + j] = m;
                    density[j * n + i] = m;
                }
            }
        }
        let corner = atom_from_values(&eps, &corner_vals[k]).map(|a| a.value).or_else(|e| match e {
            // A vanishing corner atom extrapolates noisily around zero.
            Error::UnreliableAtom { value, .. } if value.abs() < 1e-6 => Ok(value),
            other => Err(other),
        })?;
        let budget = (-(y * y) * far[k]).re;
        let diag_mass: f64 = diag_vals[k].iter().zip(&grid.weights).map(|(m, w)| m * w).sum();
        let include_diag = diag_mass.abs() > 1e-6 * budget.abs().max(1e-12);
        out.push(SpectralMeasure2D {
            transform: *kind,
            nodes: grid.nodes.clone(),
            weights: grid.weights.clone(),
            density,
            corner_atom: corner,
            edge_density: std::mem::take(&mut edge_vals[k]),
            diagonal_density: include_diag.then(|| std::mem::take(&mut diag_vals[k])),
            mass_budget: budget,
            asymmetry: asym,
            symmetrized,
        });
    }
    let w = out.pop().unwrap();
    let h0 = out.pop().unwrap();
    Ok(TwoVariableMeasures { h0, w })
}

/// Two-variable measures over the located support.
pub fn density_2d(cfg: &ModelConfig, grid_points: usize, offsets: (f64, f64)) -> Result<TwoVariableMeasures> {
    let opts = ExtractionOptions {
        grid_points_2d: grid_points,
        offset_2d: offsets.0,
        offset_diagonal: offsets.1,
        ..ExtractionOptions::default()
    };
    let support = locate_support_with(cfg, 1e-12 * support_window(cfg), opts.density_floor, opts.scan_points)?;
    density_2d_on(cfg, &support, grid_points, &opts)
}
