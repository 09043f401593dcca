//! Finite-dimensional linear pencil whose inverse blocks encode the resolvent
//! products behind the learning curves, and a Monte Carlo check of its
//! normalized block traces against the algebraic solver.
//!
//! Block sizes (1-based): N for blocks 1, 3, 6, 8, 11, 13; d for 2, 5, 7, 9,
//! 12; n for 4 and 10. Blocks 1..=6 only couple to 7..=13 through (1, 7), so
//! the matrix is block upper-triangular with respect to that split and the
//! two diagonal parts are factored separately.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::ops::Range;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig};
use crate::simulator::{sample_instance_with, Instance, SampleOptions};
use crate::stieltjes::{solve_one_point, solve_two_point};

pub const BLOCKS: usize = 13;

/// Last block (1-based) of the upper diagonal part.
const SPLIT: usize = 6;

/// Target blocks (1-based) whose normalized traces are checked.
pub const TARGET_BLOCKS: [(usize, usize); 7] = [(13, 13), (7, 12), (1, 13), (4, 10), (2, 12), (4, 4), (2, 5)];

/// Smallest imaginary part accepted for verification points.
pub const MIN_IMAG: f64 = 0.05;

/// Largest tolerated fraction of failed seeds.
pub const MAX_SEED_FAILURE_FRACTION: f64 = 0.2;

/// Dimension class of a block row/column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    /// Number of features `N`.
    Features,
    /// Input dimension `d`.
    Input,
    /// Number of samples `n`.
    Samples,
}

pub const LAYOUT: [Dim; BLOCKS] = {
    use Dim::*;
    [
        Features, Input, Features, Samples, Input, Features, Input, Features, Input, Samples, Features, Input, Features,
    ]
};

/// One nonzero block: a multiple of the identity or a dense real matrix.
#[derive(Debug, Clone)]
pub enum Block {
    Scalar(C),
    Dense(Mat<f64>),
}

/// The assembled pencil, stored blockwise.
#[derive(Debug, Clone)]
pub struct PencilMatrix {
    pub x: C,
    pub y: C,
    pub sizes: [usize; BLOCKS],
    pub offsets: [usize; BLOCKS + 1],
    /// Nonzero blocks keyed by 1-based `(row, col)`.
    pub blocks: BTreeMap<(usize, usize), Block>,
}

impl PencilMatrix {
    pub fn side(&self) -> usize {
        self.offsets[BLOCKS]
    }

    /// Row/column range of block `i` (1-based).
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i - 1]..self.offsets[i]
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Block> {
        self.blocks.get(&(i, j))
    }

    /// Dense matrix restricted to block rows `rows` and columns `cols`
    /// (1-based, inclusive ranges).
    pub fn dense_part(&self, rows: Range<usize>, cols: Range<usize>) -> Mat<C> {
        let (r0, c0) = (self.offsets[rows.start - 1], self.offsets[cols.start - 1]);
        let (r1, c1) = (self.offsets[rows.end - 1], self.offsets[cols.end - 1]);
        let mut m = Mat::<C>::zeros(r1 - r0, c1 - c0);
        for (&(i, j), b) in &self.blocks {
            if !rows.contains(&i) || !cols.contains(&j) {
                continue;
            }
            let (ri, cj) = (self.range(i), self.range(j));
            match b {
                Block::Scalar(z) => {
                    for k in 0..ri.len() {
                        m[(ri.start - r0 + k, cj.start - c0 + k)] = *z;
                    }
                }
                Block::Dense(a) => {
                    for q in 0..a.ncols() {
                        for p in 0..a.nrows() {
                            m[(ri.start - r0 + p, cj.start - c0 + q)] = C::new(a[(p, q)], 0.0);
                        }
                    }
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> Mat<C> {
        self.dense_part(1..BLOCKS + 1, 1..BLOCKS + 1)
    }
}

fn block_sizes(d: usize, n: usize, big_n: usize) -> [usize; BLOCKS] {
    LAYOUT.map(|k| match k {
        Dim::Features => big_n,
        Dim::Input => d,
        Dim::Samples => n,
    })
}

fn scaled(a: &Mat<f64>, s: f64) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| s * a[(i, j)])
}

/// Assembles the pencil at `(x, y)` with the gaussian-equivalent features
/// `mu X Theta^T / sqrt d + nu Omega`.
pub fn build_pencil(inst: &Instance, x: C, y: C, cfg: &ModelConfig) -> Result<PencilMatrix> {
    let (mu, nu) = (cfg.mu(), cfg.nu());
    if mu == 0.0 && nu == 0.0 {
        return Err(Error::InvalidConfig("pencil needs mu or nu nonzero".into()));
    }
    if x.im == 0.0 || y.im == 0.0 {
        return Err(Error::InvalidConfig("pencil points must lie off the real axis".into()));
    }
    let omega = inst
        .omega
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("instance carries no gaussian surrogate Omega".into()))?;
    let (d, n, big_n) = (inst.d, inst.n, inst.big_n);
    let shapes = [
        ("X", inst.x.nrows(), inst.x.ncols(), n, d),
        ("Theta", inst.theta.nrows(), inst.theta.ncols(), big_n, d),
        ("Omega", omega.nrows(), omega.ncols(), n, big_n),
    ];
    for (name, r, c, er, ec) in shapes {
        if (r, c) != (er, ec) {
            return Err(Error::InvalidConfig(format!("{name} is {r}x{c}, layout expects {er}x{ec}")));
        }
    }

    let sd = 1.0 / (d as f64).sqrt();
    let sn = 1.0 / (big_n as f64).sqrt();
    let theta = scaled(&inst.theta, sd);
    let theta_t = theta.transpose().to_owned();
    let x_n = scaled(&inst.x, sn);
    let x_n_t = x_n.transpose().to_owned();
    let om = scaled(omega, nu * sn);
    let om_t = om.transpose().to_owned();

    let one = Block::Scalar(C::new(1.0, 0.0));
    let mut blocks = BTreeMap::new();
    let mut put = |i: usize, j: usize, b: Block| {
        blocks.insert((i, j), b);
    };
    put(1, 1, Block::Scalar(-x));
    put(1, 2, Block::Dense(scaled(&theta, -mu)));
    put(1, 3, Block::Scalar(C::new(-1.0, 0.0)));
    put(1, 7, Block::Dense(theta.clone()));
    put(2, 2, one.clone());
    put(2, 4, Block::Dense(x_n_t.clone()));
    put(3, 3, one.clone());
    put(3, 4, Block::Dense(om_t.clone()));
    put(4, 4, one.clone());
    put(4, 5, Block::Dense(x_n.clone()));
    put(4, 6, Block::Dense(om.clone()));
    put(5, 1, Block::Dense(scaled(&theta_t, mu)));
    put(5, 5, one.clone());
    put(6, 1, one.clone());
    put(6, 6, one.clone());
    put(7, 7, one.clone());
    put(7, 13, Block::Dense(theta_t.clone()));
    put(8, 8, one.clone());
    put(8, 10, Block::Dense(om_t));
    put(9, 9, one.clone());
    put(9, 10, Block::Dense(x_n_t));
    put(10, 10, one.clone());
    put(10, 11, Block::Dense(om));
    put(10, 12, Block::Dense(x_n));
    put(11, 11, one.clone());
    put(11, 13, Block::Scalar(C::new(-1.0, 0.0)));
    put(12, 12, one.clone());
    put(12, 13, Block::Dense(scaled(&theta_t, -mu)));
    put(13, 8, one);
    put(13, 9, Block::Dense(scaled(&theta, mu)));
    put(13, 13, Block::Scalar(-y));

    let sizes = block_sizes(d, n, big_n);
    let mut offsets = [0; BLOCKS + 1];
    for i in 0..BLOCKS {
        offsets[i + 1] = offsets[i] + sizes[i];
    }
    Ok(PencilMatrix {
        x,
        y,
        sizes,
        offsets,
        blocks,
    })
}

/// LU factors of one diagonal part together with selected inverse columns.
struct PartInverse {
    /// Offset of the first row of the part in the full matrix.
    base: usize,
    /// Block columns (1-based) held in `cols`, with their column offset.
    held: Vec<(usize, usize)>,
    cols: Mat<C>,
}

impl PartInverse {
    fn new(p: &PencilMatrix, part: Range<usize>, wanted: &[usize]) -> Result<PartInverse> {
        let m = p.dense_part(part.clone(), part.clone());
        let lu = m.partial_piv_lu();
        // Partial pivoting leaves the conditioning on the diagonal of U.
        let u = lu.U();
        let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(lo > 1e-13 * hi) {
            return Err(Error::LinearAlgebra(format!(
                "pencil is numerically singular at x = {}, y = {}; move the points further from the real axis",
                p.x, p.y
            )));
        }
        let base = p.offsets[part.start - 1];
        let mut held = Vec::new();
        let mut width = 0;
        for &j in wanted {
            held.push((j, width));
            width += p.sizes[j - 1];
        }
        let mut rhs = Mat::<C>::zeros(m.nrows(), width);
        for &(j, off) in &held {
            let r = p.range(j);
            for k in 0..r.len() {
                rhs[(r.start - base + k, off + k)] = C::new(1.0, 0.0);
            }
        }
        lu.solve_in_place(rhs.as_mut());
        if rhs.col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::LinearAlgebra("non-finite pencil inverse".into()));
        }
        Ok(PartInverse { base, held, cols: rhs })
    }

    /// Inverse block `(i, j)` of this part.
    fn block(&self, p: &PencilMatrix, i: usize, j: usize) -> Mat<C> {
        let &(_, off) = self.held.iter().find(|(b, _)| *b == j).expect("column block not solved");
        let r = p.range(i);
        let w = p.sizes[j - 1];
        Mat::from_fn(r.len(), w, |a, b| self.cols[(r.start - self.base + a, off + b)])
    }
}

fn trace_of(m: &Mat<C>) -> C {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `tr(A B)` without forming the product.
fn trace_of_product(a: &Mat<C>, b: &Mat<C>) -> C {
    let mut acc = C::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn as_complex(a: &Mat<f64>) -> Mat<C> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| C::new(a[(i, j)], 0.0))
}

/// Normalized traces `(1/size) tr (M^{-1})^{(i,j)}` of the target blocks.
pub fn block_traces(p: &PencilMatrix) -> Result<BTreeMap<(usize, usize), C>> {
    let couplings: Vec<(usize, usize)> = p
        .blocks
        .keys()
        .copied()
        .filter(|&(i, j)| i <= SPLIT && j > SPLIT)
        .collect();
    if p.blocks.keys().any(|&(i, j)| i > SPLIT && j <= SPLIT) {
        return Err(Error::LinearAlgebra("pencil is not block upper-triangular".into()));
    }

    let mut upper_cols: Vec<usize> = Vec::new();
    let mut lower_cols: Vec<usize> = Vec::new();
    let push = |v: &mut Vec<usize>, j: usize| {
        if !v.contains(&j) {
            v.push(j);
        }
    };
    for &(i, j) in &TARGET_BLOCKS {
        match (i <= SPLIT, j <= SPLIT) {
            (true, true) => push(&mut upper_cols, j),
            (false, false) => push(&mut lower_cols, j),
            (true, false) => {
                push(&mut lower_cols, j);
                for &(k, _) in &couplings {
                    push(&mut upper_cols, k);
                }
            }
            (false, true) => unreachable!("lower-left inverse blocks vanish"),
        }
    }
    let upper = PartInverse::new(p, 1..SPLIT + 1, &upper_cols)?;
    let lower = PartInverse::new(p, SPLIT + 1..BLOCKS + 1, &lower_cols)?;

    let mut out = BTreeMap::new();
    for &(i, j) in &TARGET_BLOCKS {
        let size = p.sizes[i - 1] as f64;
        let tr = match (i <= SPLIT, j <= SPLIT) {
            (true, true) => trace_of(&upper.block(p, i, j)),
            (false, false) => trace_of(&lower.block(p, i, j)),
            _ => {
                // (M^{-1})_{ij} = -sum_{k,l} (A^{-1})_{ik} M_{kl} (C^{-1})_{lj}
                let mut acc = C::new(0.0, 0.0);
                for &(k, l) in &couplings {
                    let left = upper.block(p, i, k);
                    let right = lower.block(p, l, j);
                    let mid_right = match &p.blocks[&(k, l)] {
                        Block::Scalar(z) => Mat::from_fn(right.nrows(), right.ncols(), |a, b| *z * right[(a, b)]),
                        Block::Dense(m) => &as_complex(m) * &right,
                    };
                    acc -= trace_of_product(&left, &mid_right);
                }
                acc
            }
        };
        out.insert((i, j), tr / size);
    }
    Ok(out)
}

/// Limits of the target traces predicted by the algebraic solver.
pub fn predicted_traces(cfg: &ModelConfig, x: C, y: C) -> Result<BTreeMap<(usize, usize), C>> {
    let sx = solve_one_point(x, cfg, None)?;
    let sy = solve_one_point(y, cfg, None)?;
    let q = solve_two_point(x, y, &sx, &sy, cfg)?;
    Ok(BTreeMap::from([
        ((13, 13), sy.g1),
        ((7, 12), sy.t1),
        ((1, 13), q.q1),
        ((4, 10), q.q4),
        ((2, 12), q.q2),
        ((4, 4), sx.g3),
        ((2, 5), sx.h4),
    ]))
}

/// Measured versus predicted trace of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparison {
    pub block: (usize, usize),
    pub measured: C,
    pub predicted: C,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Relative deviation of each seed's trace from the prediction.
    pub seed_rel_errs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTraceReport {
    pub d: usize,
    pub seeds: usize,
    pub failed_seeds: usize,
    pub x: C,
    pub y: C,
    pub blocks: Vec<BlockComparison>,
}

impl BlockTraceReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_err).fold(0.0, f64::max)
    }

    /// Median over blocks of the seed-averaged relative error.
    pub fn median_rel_err(&self) -> f64 {
        median(self.blocks.iter().map(|b| b.rel_err).collect())
    }

    /// Median over all (seed, block) pairs of the per-seed relative deviation.
    pub fn median_seed_deviation(&self) -> f64 {
        median(self.blocks.iter().flat_map(|b| b.seed_rel_errs.iter().copied()).collect())
    }

    pub fn get(&self, block: (usize, usize)) -> Option<&BlockComparison> {
        self.blocks.iter().find(|b| b.block == block)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "block,measured_re,measured_im,predicted_re,predicted_im,rel_err,seed_median_rel_err"
        )?;
        for b in &self.blocks {
            writeln!(
                out,
                "\"({},{})\",{:e},{:e},{:e},{:e},{:e},{:e}",
                b.block.0,
                b.block.1,
                b.measured.re,
                b.measured.im,
                b.predicted.re,
                b.predicted.im,
                b.rel_err,
                median(b.seed_rel_errs.clone())
            )?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Target traces of one sampled pencil.
pub fn seed_traces(cfg: &ModelConfig, x: C, y: C, d: usize, seed: u64) -> Result<BTreeMap<(usize, usize), C>> {
    let opts = SampleOptions {
        with_omega: true,
        ..SampleOptions::default()
    };
    // The pencil only uses X, Theta and Omega; the activation is immaterial.
    let act = Activation::hermite(cfg.mu(), cfg.nu());
    let inst = sample_instance_with(d, cfg, &act, seed, &opts)?;
    block_traces(&build_pencil(&inst, x, y, cfg)?)
}

/// Averages the target traces over `seeds` sampled pencils and compares them
/// with the solver.
pub fn verify(cfg: &ModelConfig, x: C, y: C, d: usize, seeds: usize, base_seed: u64) -> Result<BlockTraceReport> {
    if d < 100 {
        return Err(Error::InvalidConfig(format!("pencil verification needs d >= 100, got {d}")));
    }
    if x.im.abs() < MIN_IMAG || y.im.abs() < MIN_IMAG {
        return Err(Error::InvalidConfig(format!(
            "verification points need |Im| >= {MIN_IMAG}, got x = {x}, y = {y}"
        )));
    }
    if seeds == 0 {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let predicted = predicted_traces(cfg, x, y)?;
    let runs: Vec<Result<BTreeMap<(usize, usize), C>>> = (0..seeds as u64)
        .into_par_iter()
        .map(|k| seed_traces(cfg, x, y, d, base_seed + k))
        .collect();
    let ok: Vec<_> = runs.into_iter().filter_map(|r| r.ok()).collect();
    let failed = seeds - ok.len();
    if ok.is_empty() || failed as f64 > MAX_SEED_FAILURE_FRACTION * seeds as f64 {
        return Err(Error::SeedFailures { failed, total: seeds });
    }
    let blocks = TARGET_BLOCKS
        .iter()
        .map(|&b| {
            let measured = ok.iter().map(|m| m[&b]).sum::<C>() / ok.len() as f64;
            let predicted = predicted[&b];
            let abs_err = (measured - predicted).norm();
            BlockComparison {
                block: b,
                measured,
                predicted,
                abs_err,
                rel_err: abs_err / predicted.norm(),
                seed_rel_errs: ok.iter().map(|m| (m[&b] - predicted).norm() / predicted.norm()).collect(),
            }
        })
        .collect();
    Ok(BlockTraceReport {
        d,
        seeds,
        failed_seeds: failed,
        x,
        y,
        blocks,
    })
}
