//! Tiny dense complex linear algebra for the 3x3 and 4x4 systems.

use num_complex::Complex64 as C;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes exactly.
pub(crate) fn solve<const N: usize>(mut a: [[C; N]; N], mut b: [C; N]) -> Option<[C; N]> {
    for k in 0..N {
        let mut p = k;
        let mut best = a[k][k].norm();
        for (i, row) in a.iter().enumerate().skip(k + 1) {
            let v = row[k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        let inv = a[k][k].inv();
        for i in k + 1..N {
            let f = a[i][k] * inv;
            if f == C::new(0.0, 0.0) {
                continue;
            }
            for j in k..N {
                let t = a[k][j];
                a[i][j] -= f * t;
            }
            let t = b[k];
            b[i] -= f * t;
        }
    }
    let mut x = [C::new(0.0, 0.0); N];
    for i in (0..N).rev() {
        let mut s = b[i];
        for j in i + 1..N {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Determinant by the same elimination; used for conditioning checks.
pub(crate) fn det<const N: usize>(mut a: [[C; N]; N]) -> C {
    let mut d = C::new(1.0, 0.0);
    for k in 0..N {
        let mut p = k;
        let mut best = a[k][k].norm();
        for (i, row) in a.iter().enumerate().skip(k + 1) {
            if row[k].norm() > best {
                best = row[k].norm();
                p = i;
            }
        }
        if best == 0.0 {
            return C::new(0.0, 0.0);
        }
        if p != k {
            a.swap(k, p);
            d = -d;
        }
        d *= a[k][k];
        let inv = a[k][k].inv();
        for i in k + 1..N {
            let f = a[i][k] * inv;
            for j in k..N {
                let t = a[k][j];
                a[i][j] -= f * t;
            }
        }
    }
    d
}

pub(crate) fn norm_inf<const N: usize>(v: &[C; N]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
