use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("total traffic intensity r = {r} is not in the ergodic region r < 1")]
    NonErgodic { r: f64 },

    #[error("invalid priority-level fractions: {0}")]
    InvalidFractions(String),

    #[error("all arrival rates are zero")]
    ZeroRates,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last delta {delta:e})")]
    NoConvergence { iterations: usize, delta: f64 },

    #[error("memory limit exceeded: {requested} bytes requested, limit is {limit} bytes")]
    MemoryLimit { requested: u128, limit: u64 },

    #[error("lattice point {index:?} lies on the boundary set")]
    OnBoundary { index: Vec<usize> },

    #[error("lattice point {index:?} (or a neighbour) is outside the grid")]
    OutsideGrid { index: Vec<usize> },

    #[error("non-positive probability at or around {index:?}")]
    NonPositiveProbability { index: Vec<usize> },

    #[error("prefix length {kappa} out of range for {levels} levels")]
    PrefixOutOfRange { kappa: usize, levels: usize },

    #[error("PGF denominator modulus {modulus:e} is too close to a pole")]
    PoleProximity { modulus: f64 },

    #[error("level {level} out of range (valid 1..={max})")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("marginal PMF has no entry for queue length {needed}")]
    MissingMarginal { needed: usize },

    #[error("contour radii are not pairwise distinct")]
    DuplicateRadii,

    #[error("spread s = {0} yields coincident contour radii")]
    DegenerateSpread(f64),

    #[error("contour radius {radius} is not strictly inside the convergence radius {limit}")]
    RadiusExceedsConvergence { radius: f64, limit: f64 },

    #[error("non-finite PGF sample on the contour (analyticity violated)")]
    AnalyticityViolation,

    #[error("imaginary residue {residue:e} of the inverted PMF exceeds tolerance")]
    ImaginaryResidue { residue: f64 },

    #[error("inverted probability {value:e} at {index:?} is below the round-off floor")]
    NegativeProbability { index: Vec<usize>, value: f64 },

    #[error("PMF has the wrong normalization kind for this operation")]
    WrongKind,

    #[error("no lattice points satisfy the admission filter of the {test} test")]
    EmptyAdmissibleSet { test: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
