use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the solvers, extractors and simulator.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("activation is not centered: gaussian mean {mean:.3e} exceeds 1e-6")]
    NonCenteredActivation { mean: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("no admissible root of the one-point system at x = {x}")]
    BranchSelection { x: Complex64 },

    #[error("several admissible roots at x = {x} could not be separated by the predictor")]
    AmbiguousBranch { x: Complex64 },

    #[error("Newton iteration stalled at x = {x} (residual {residual:.3e} after {iterations} iterations)")]
    SolverDivergence {
        x: Complex64,
        residual: f64,
        iterations: usize,
        last: [Complex64; 3],
    },

    #[error("two-point system is singular at x = {x}, y = {y}; move the points off the real axis")]
    DegeneratePoint { x: Complex64, y: Complex64 },

    #[error("continuation failed at point {index}: {source}")]
    Continuation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty support: the spectral density never exceeds the floor")]
    EmptySupport,

    #[error("density extraction failed at node {index}: {source}")]
    Extraction {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("extracted measure has negative mass {mass:.3e} beyond tolerance")]
    NegativeMass { mass: f64 },

    #[error("atom extrapolation did not converge (value {value:.3e}, spread {spread:.3e})")]
    UnreliableAtom { value: f64, spread: f64 },

    #[error("ridgeless limit is unsupported: delta must be strictly positive")]
    Ridgeless,

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("requested instance exceeds the memory budget ({bytes} bytes)")]
    MemoryBudget { bytes: usize },

    #[error("aborted: {failed} of {total} seeds failed")]
    SeedFailures { failed: usize, total: usize },

    #[error("heatmap aborted: {failed} of {total} mesh rows failed")]
    MeshFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn at_index(self, index: usize) -> Error {
        Error::Continuation {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
