use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("antiderivative of a field with nonzero mean (|mean| = {mean:e}, tol = {tol:e})")]
    NonzeroMean { mean: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiracError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{context}: {source}")]
    InContext { context: &'static str, source: FieldError },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dispersion relation violated: |k|^2 = {k2}, required {required}")]
    DispersionViolated { k2: f64, required: f64 },
    #[error("wavevector ({kx}, {ky}) is not on the grid's frequency lattice")]
    OffLattice { kx: f64, ky: f64 },
    #[error("potential is not constant (spread {0:e})")]
    NonConstantPotential(f64),
    #[error("seed is not holomorphic on the torus (spread {0:e})")]
    NonHolomorphicSeed(f64),
    #[error("potential violates its reduction: {0}")]
    ReductionViolated(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImmersionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error("immersion 1-forms are not closed (residual {0:e})")]
    ClosednessViolated(f64),
    #[error("tau-basis expansion inconsistent (imaginary part {0:e})")]
    BasisExpansionFailed(f64),
    #[error("degenerate metric at grid point ({ix}, {iy}), factor {value:e}")]
    DegenerateMetric { ix: usize, iy: usize, value: f64 },
    #[error("invalid Weierstrass data: {0}")]
    InvalidData(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error("integration became unstable at t = {t} ({reason})")]
    Unstable { t: f64, reason: String },
    #[error("flow specification invalid: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("insufficient resolution for a convergence estimate: {0}")]
    InsufficientResolution(String),
    #[error("run record invalid: {0}")]
    InvalidRecord(String),
}
