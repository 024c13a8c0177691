use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("cannot shift an empty word")]
    EmptyWord,

    #[error("branch {k} out of range: point has {count} branches")]
    BranchOutOfRange { k: usize, count: usize },

    #[error("resolution {0} is not supported for this system")]
    InvalidResolution(u32),

    #[error("resolution mismatch: {left} vs {right}")]
    ResolutionMismatch { left: u32, right: u32 },

    #[error("operands belong to different systems")]
    SystemMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("cannot coarsen: values differ inside cell {cell} at resolution {resolution}")]
    NotCoarsenable { resolution: u32, cell: usize },

    #[error("power iteration did not converge within {maxit} iterations (last residual {residual:e})")]
    NoConvergence { maxit: usize, residual: f64 },

    #[error("weight is identically zero")]
    ZeroWeight,

    #[error("matrix dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix at cell {cell} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { cell: usize, min_eigenvalue: f64 },

    #[error("martingale level {level} out of range (depth {depth})")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("martingale depth exhausted")]
    DepthExhausted,

    #[error("function is not harmonic (residual {0:e})")]
    NotHarmonic(f64),

    #[error("domination |h0|^2 <= c h^2 fails at cell {0}")]
    DominationFailure(usize),

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("path starts at a point of zero mass")]
    ZeroMass,

    #[error("all transition probabilities vanish at step {0}")]
    DeadEnd(usize),

    #[error("prefix is not an orbit: r(x_{index}) != x_{prev}", prev = .index - 1)]
    NotAnOrbit { index: usize },

    #[error("negative detail multiplicity at cell {0}")]
    NegativeDetail(usize),

    #[error("quadrature under-resolved: doubling nodes changed result by {0:e}")]
    QuadratureUnderresolved(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
