//! Ruelle transfer operators on step functions, their Perron eigendata, and
//! residual checks for invariant measures and filter pairs.

mod checks;
mod matrix;
mod operator;
mod perron;
mod step;

pub use checks::{invariance_residual, invariant_from_eigen, isometry_gap, prf_residual, strong_invariance_residual};
pub use matrix::{matrix_prf_residual, MatrixStepFunction};
pub use operator::{ruelle_apply, ruelle_filter, TransferOp};
pub use perron::{
    solve_perron, solve_perron_op, strongly_invariant_measure, PerronData, PerronReport, DEFAULT_MAXIT, DEFAULT_TOL,
};
pub use step::{cell_midpoints, JsonScalar, MeasureVector, StepFunction, StepFunctionJson, Weight};
