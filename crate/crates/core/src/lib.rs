//! Gradient-flow learning curves of random-feature regression in the
//! proportional high-dimensional limit.
//!
//! The crate solves the algebraic fixed-point systems characterizing the
//! limiting Stieltjes transforms, extracts the associated spectral measures,
//! and integrates them against the time kernels of the gradient flow. A
//! finite-dimensional simulator and a linear-pencil verifier provide
//! independent checks.

pub mod curves;
pub mod density;
pub mod error;
pub mod model;
pub mod pencil;
pub mod poly;
pub mod quadrature;
pub mod simulator;
mod small;
pub mod stieltjes;

pub use error::{Error, Result};
pub use model::{hermite_coefficients, Activation, HermiteCoefficients, ModelConfig};
pub use num_complex::Complex64;
pub use stieltjes::{
    continuation_sweep, evaluate_transforms, solve_one_point, solve_two_point, OnePointSolution, TransformValues,
    TwoPointSolution,
};
