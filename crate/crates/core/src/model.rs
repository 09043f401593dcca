//! Model parameters and the Hermite coefficients of the activation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Parameters of the random-feature model in the proportional limit.
///
/// `c = phi / psi` and `delta = c * lambda` are computed once at
/// construction; the struct is immutable afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    mu: f64,
    nu: f64,
    psi: f64,
    phi: f64,
    r: f64,
    s: f64,
    lambda: f64,
    c: f64,
    delta: f64,
}

impl ModelConfig {
    pub fn new(mu: f64, nu: f64, psi: f64, phi: f64, r: f64, s: f64, lambda: f64) -> Result<Self> {
        let fields = [
            ("mu", mu),
            ("nu", nu),
            ("psi", psi),
            ("phi", phi),
            ("r", r),
            ("s", s),
            ("lambda", lambda),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite, got {value}")));
            }
        }
        if psi <= 0.0 || phi <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "psi and phi must be positive (psi = {psi}, phi = {phi})"
            )));
        }
        for (name, value) in [("nu", nu), ("r", r), ("s", s), ("lambda", lambda)] {
            if value < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {value}")));
            }
        }
        let c = phi / psi;
        Ok(Self {
            mu,
            nu,
            psi,
            phi,
            r,
            s,
            lambda,
            c,
            delta: c * lambda,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn psi(&self) -> f64 {
        self.psi
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// Ratio of samples to features, `phi / psi`.
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Effective ridge in the flow equation, `c * lambda`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.nu, self.psi, self.phi, self.r, self.s, self.lambda)
    }
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.mu, nu, self.psi, self.phi, self.r, self.s, self.lambda)
    }
    pub fn with_psi(&self, psi: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, psi, self.phi, self.r, self.s, self.lambda)
    }
    pub fn with_phi(&self, phi: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, self.psi, phi, self.r, self.s, self.lambda)
    }
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, self.psi, self.phi, r, self.s, self.lambda)
    }
    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, self.psi, self.phi, self.r, s, self.lambda)
    }
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, self.psi, self.phi, self.r, self.s, lambda)
    }

    /// Gaussian second moment of the activation, `mu^2 + nu^2`.
    pub fn feature_power(&self) -> f64 {
        self.mu * self.mu + self.nu * self.nu
    }

    /// `mu = nu = 0`: the features vanish identically.
    pub fn is_trivial_activation(&self) -> bool {
        self.mu == 0.0 && self.nu == 0.0
    }

    /// Rough upper bound on the spectrum of `Z^T Z / N`, used to size
    /// search windows and continuation anchors.
    pub fn spectral_scale(&self) -> f64 {
        let k = self.c.max(1.0 / self.c).sqrt();
        (self.feature_power() * (1.0 + k).powi(2)).max(1e-12)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(mu={}, nu={}, psi={}, phi={}, r={}, s={}, lambda={})",
            self.mu, self.nu, self.psi, self.phi, self.r, self.s, self.lambda
        )
    }
}

/// A scalar activation function applied entrywise to the pre-activations.
#[derive(Clone)]
pub struct Activation {
    name: String,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation").field("name", &self.name).finish()
    }
}

impl Activation {
    pub fn custom(name: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn identity() -> Self {
        Self::custom("identity", |x| x)
    }

    /// `relu(x) - 1/sqrt(2 pi)`, centered under the standard gaussian.
    pub fn relu_centered() -> Self {
        let shift = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        Self::custom("relu-centered", move |x: f64| x.max(0.0) - shift)
    }

    pub fn tanh() -> Self {
        Self::custom("tanh", f64::tanh)
    }

    pub fn tanh_scaled(slope: f64) -> Self {
        Self::custom(format!("tanh{slope}"), move |x: f64| (slope * x).tanh())
    }

    /// `mu x + nu He_2(x) / sqrt(2)`: a centered activation with prescribed
    /// Hermite coefficients, for parameter sets that no standard function hits.
    pub fn hermite(mu: f64, nu: f64) -> Self {
        let scale = nu / std::f64::consts::SQRT_2;
        Self::custom(format!("hermite({mu},{nu})"), move |x: f64| mu * x + scale * (x * x - 1.0))
    }

    /// Looks up one of the named activations understood by the CLI.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "identity" | "id" | "linear" => Ok(Self::identity()),
            "relu-centered" | "relu" => Ok(Self::relu_centered()),
            "tanh" => Ok(Self::tanh()),
            "tanh5" => Ok(Self::tanh_scaled(5.0)),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }
}

/// First Hermite coefficients of an activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteCoefficients {
    pub mu: f64,
    pub nu: f64,
    /// Gaussian mean of the activation; must vanish for a valid activation.
    pub mean: f64,
}

/// Default number of quadrature nodes for [`hermite_coefficients`].
pub const DEFAULT_HERMITE_NODES: usize = 200;

const GAUSS_ORDER: usize = 16;
const GAUSS_HALF_WIDTH: f64 = 12.0;

/// Nodes and weights integrating against the standard gaussian density.
///
/// Composite Gauss-Legendre on `[-12, 12]` with a panel break at 0, so
/// activations with a kink at the origin (ReLU and friends) are integrated
/// piecewise smoothly. The truncated tails weigh less than `1e-31`.
pub fn gaussian_rule(nodes: usize) -> Vec<(f64, f64)> {
    let panels = (nodes / (2 * GAUSS_ORDER)).max(2);
    let (xs, ws) = gauss_legendre(GAUSS_ORDER);
    let h = GAUSS_HALF_WIDTH / panels as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut rule = Vec::with_capacity(2 * panels * GAUSS_ORDER);
    for side in [-1.0, 1.0] {
        for k in 0..panels {
            let a = k as f64 * h;
            let mid = a + 0.5 * h;
            for (t, w) in xs.iter().zip(&ws) {
                let x = side * (mid + 0.5 * h * t);
                rule.push((x, 0.5 * h * w * norm * (-0.5 * x * x).exp()));
            }
        }
    }
    rule
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Computes `mu = <sigma, x>`, `nu = sqrt(<sigma, sigma> - mu^2)` and the
/// gaussian mean of `sigma`.
///
/// Rejects activations whose mean exceeds `1e-6` in magnitude; the library
/// never re-centers an activation on its own.
pub fn hermite_coefficients(activation: &Activation, nodes: usize) -> Result<HermiteCoefficients> {
    if nodes < 32 {
        return Err(Error::Quadrature(format!("at least 32 nodes required, got {nodes}")));
    }
    let mut mean = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for (x, w) in gaussian_rule(nodes) {
        let v = activation.eval(x);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("activation is not finite at x = {x}")));
        }
        mean += w * v;
        first += w * x * v;
        second += w * v * v;
    }
    if mean.abs() > 1e-6 {
        return Err(Error::NonCenteredActivation { mean });
    }
    let radicand = second - first * first;
    let tol = 1e-12 * second.max(1e-300);
    let nu = if radicand.abs() <= tol {
        0.0
    } else if radicand < 0.0 {
        return Err(Error::Quadrature(format!("negative orthogonal power {radicand:.3e}")));
    } else {
        radicand.sqrt()
    };
    Ok(HermiteCoefficients { mu: first, nu, mean })
}

/// Gaussian second moment `<sigma, sigma>`.
pub fn gaussian_second_moment(activation: &Activation, nodes: usize) -> f64 {
    gaussian_rule(nodes)
        .into_iter()
        .map(|(x, w)| {
            let v = activation.eval(x);
            w * v * v
        })
        .sum()
}
