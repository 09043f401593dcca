//! Complex polynomials in one variable and simultaneous root finding.

use num_complex::Complex64 as C;

/// Coefficients in increasing degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<C>);

impl Poly {
    pub fn constant(a: C) -> Self {
        Poly(vec![a])
    }

    /// `a + b g`
    pub fn linear(a: C, b: C) -> Self {
        Poly(vec![a, b])
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let zero = C::new(0.0, 0.0);
        Poly(
            (0..n)
                .map(|i| *self.0.get(i).unwrap_or(&zero) + *other.0.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn scale(&self, k: C) -> Poly {
        Poly(self.0.iter().map(|a| a * k).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![C::new(0.0, 0.0); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn eval(&self, z: C) -> C {
        self.0.iter().rev().fold(C::new(0.0, 0.0), |acc, a| acc * z + a)
    }

    fn eval_with_derivative(&self, z: C) -> (C, C) {
        let mut p = C::new(0.0, 0.0);
        let mut dp = C::new(0.0, 0.0);
        for a in self.0.iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        (p, dp)
    }

    /// Drops leading coefficients that are negligible relative to the largest.
    pub fn trimmed(&self) -> Poly {
        let scale = self.0.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut v = self.0.clone();
        while v.len() > 1 && v.last().unwrap().norm() <= 1e-14 * scale {
            v.pop();
        }
        Poly(v)
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// All roots by the Aberth-Ehrlich iteration.
    pub fn roots(&self) -> Vec<C> {
        let p = self.trimmed();
        let n = p.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = p.0[n];
        // Cauchy bound for the initial circle.
        let radius = 1.0 + p.0[..n].iter().map(|a| (a / lead).norm()).fold(0.0, f64::max);
        let mut z: Vec<C> = (0..n)
            .map(|k| C::from_polar(0.5 * radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        for _ in 0..500 {
            let mut moved = 0.0f64;
            for i in 0..n {
                let (v, dv) = p.eval_with_derivative(z[i]);
                if v == C::new(0.0, 0.0) {
                    continue;
                }
                let ratio = v / dv;
                let mut sum = C::new(0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        sum += (z[i] - z[j]).inv();
                    }
                }
                let step = ratio / (C::new(1.0, 0.0) - ratio * sum);
                if step.is_finite() {
                    z[i] -= step;
                    moved = moved.max(step.norm() / (1.0 + z[i].norm()));
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn roots_of_product_are_recovered() {
        let want = [c(1.0, 0.0), c(-2.0, 0.5), c(0.0, 3.0), c(0.1, -0.1)];
        let mut p = Poly::constant(c(2.0, 0.0));
        for r in want {
            p = p.mul(&Poly::linear(-r, c(1.0, 0.0)));
        }
        let got = p.roots();
        assert_eq!(got.len(), 4);
        for r in want {
            let best = got.iter().map(|g| (g - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12, "missing root {r}");
        }
    }

    #[test]
    fn trimming_lowers_degree() {
        let p = Poly(vec![c(1.0, 0.0), c(1.0, 0.0), c(1e-20, 0.0)]);
        assert_eq!(p.trimmed().degree(), 1);
        let r = p.roots();
        assert_eq!(r.len(), 1);
        assert!((r[0] + c(1.0, 0.0)).norm() < 1e-14);
    }
}
