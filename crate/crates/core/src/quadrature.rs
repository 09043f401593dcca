//! Node placement, quadrature weights and extrapolation helpers.

/// Quadrature nodes with matching weights: `\int f(u) du ~ sum w_i f(u_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}

/// Composite Simpson weights for `m` equal intervals of width `h`. An odd
/// interval count closes with the 3/8 rule on the last three intervals.
pub fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    match m {
        0 => return w,
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            return w;
        }
        _ => {}
    }
    let simpson_end = if m % 2 == 0 { m } else { m - 3 };
    let mut k = 0;
    while k < simpson_end {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if m % 2 == 1 {
        let s = m - 3;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

/// Cosine-stretched nodes `u = a + (b - a)(1 - cos theta)/2` on `[a, b]` with
/// Simpson weights in `theta`, clustering nodes at both edges.
pub fn cosine_grid(a: f64, b: f64, points: usize) -> Grid {
    assert!(points >= 2 && b > a);
    let m = points - 1;
    let h = std::f64::consts::PI / m as f64;
    let sw = simpson_weights(m, h);
    let mut nodes = Vec::with_capacity(points);
    let mut weights = Vec::with_capacity(points);
    for (k, s) in sw.iter().enumerate() {
        let theta = k as f64 * h;
        nodes.push(a + 0.5 * (b - a) * (1.0 - theta.cos()));
        weights.push(s * 0.5 * (b - a) * theta.sin());
    }
    // Pin the endpoints exactly.
    nodes[0] = a;
    nodes[m] = b;
    Grid { nodes, weights }
}

/// Concatenated cosine grids over disjoint bands, nodes split in proportion
/// to band width with at least `min_per_band` per band.
pub fn banded_grid(bands: &[(f64, f64)], points: usize, min_per_band: usize) -> Grid {
    let total: f64 = bands.iter().map(|(a, b)| b - a).sum();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(a, b) in bands {
        let share = ((points as f64) * (b - a) / total).round() as usize;
        let g = cosine_grid(a, b, share.max(min_per_band));
        nodes.extend(g.nodes);
        weights.extend(g.weights);
    }
    Grid { nodes, weights }
}

/// Polynomial extrapolation to `h = 0` of samples `f(h_k)` assuming an
/// expansion in powers of `h^p` (Neville's scheme). Returns the estimate
/// from all samples and the change relative to the estimate that drops the
/// largest `h`, as an error indicator.
pub fn extrapolate_to_zero(h: &[f64], f: &[f64], p: i32) -> (f64, f64) {
    assert_eq!(h.len(), f.len());
    assert!(!h.is_empty());
    let full = neville_at_zero(h, f, p);
    if h.len() == 1 {
        return (full, f64::INFINITY);
    }
    // Drop the largest step for the comparison estimate.
    let imax = (0..h.len()).max_by(|&i, &j| h[i].total_cmp(&h[j])).unwrap();
    let hs: Vec<f64> = (0..h.len()).filter(|&i| i != imax).map(|i| h[i]).collect();
    let fs: Vec<f64> = (0..h.len()).filter(|&i| i != imax).map(|i| f[i]).collect();
    let reduced = neville_at_zero(&hs, &fs, p);
    (full, (full - reduced).abs())
}

fn neville_at_zero(h: &[f64], f: &[f64], p: i32) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.powi(p)).collect();
    let mut t = f.to_vec();
    let n = t.len();
    for m in 1..n {
        for i in 0..n - m {
            t[i] = (x[i + m] * t[i] - x[i] * t[i + 1]) / (x[i + m] - x[i]);
        }
    }
    t[0]
}

/// `count` points log-spaced on `[a, b]`, endpoints included.
pub fn logspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            (0..count)
                .map(|k| {
                    if k == 0 {
                        a
                    } else if k == count - 1 {
                        b
                    } else {
                        (la + (lb - la) * k as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_grid_handles_square_root_edges() {
        // \int_0^1 sqrt(u (1 - u)) du = pi / 8
        let g = cosine_grid(0.0, 1.0, 41);
        let v = g.integrate(|u| (u * (1.0 - u)).sqrt());
        assert!((v - std::f64::consts::PI / 8.0).abs() < 1e-9);
        // An inverse square root edge loses only the endpoint term, O(h).
        let v = g.integrate(|u| if u > 0.0 { u.powf(-0.5) } else { 0.0 });
        let h = std::f64::consts::PI / 40.0;
        assert!((v - 2.0).abs() < h / 3.0 + 1e-6, "{v}");
    }

    #[test]
    fn odd_and_even_interval_counts() {
        for points in [5usize, 6, 16, 17] {
            let g = cosine_grid(1.0, 3.0, points);
            let total: f64 = g.weights.iter().sum();
            let tol = if points < 10 { 2e-2 } else { 1e-3 };
            assert!((total - 2.0).abs() < tol, "points {points}: {total}");
        }
    }

    #[test]
    fn banded_grid_covers_each_band() {
        let g = banded_grid(&[(0.0, 1.0), (3.0, 3.5)], 64, 16);
        let v = g.integrate(|_| 1.0);
        assert!((v - 1.5).abs() < 1e-4, "{v}");
        assert!(g.nodes.iter().all(|&u| (0.0..=1.0).contains(&u) || (3.0..=3.5).contains(&u)));
    }

    #[test]
    fn extrapolation_removes_leading_terms() {
        let h = [1e-2, 1e-3, 1e-4];
        let f: Vec<f64> = h.iter().map(|e: &f64| 0.5 + 3.0 * e * e + 7.0 * (e * e) * (e * e)).collect();
        let (v, spread) = extrapolate_to_zero(&h, &f, 2);
        assert!((v - 0.5).abs() < 1e-14);
        assert!(spread < 1e-12);
        let f: Vec<f64> = h.iter().map(|e| 2.0 - e).collect();
        let (v, _) = extrapolate_to_zero(&h, &f, 1);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spacing_helpers() {
        let t = logspace(1e-2, 1e2, 5);
        assert_eq!(t[0], 1e-2);
        assert_eq!(t[4], 1e2);
        assert!((t[2] - 1.0).abs() < 1e-14);
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn simpson_is_exact_on_cubics(m in 2usize..40, c3 in -2.0..2.0f64, c0 in -2.0..2.0f64) {
            let h = 1.0 / m as f64;
            let w = simpson_weights(m, h);
            let v: f64 = w.iter().enumerate().map(|(k, w)| {
                let x = k as f64 * h;
                w * (c3 * x * x * x + c0)
            }).sum();
            prop_assert!((v - (c3 / 4.0 + c0)).abs() < 1e-12);
        }
    }
}
