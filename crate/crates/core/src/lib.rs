//! Numerical toolkit for transfer operators on expansive systems, the martingale
//! picture on the associated solenoid, path-space measures, filter cascades and
//! multiplicity functions.

pub mod bundles;
pub mod dynamics;
pub mod error;
pub mod multiplicity;
pub mod pathspace;
pub mod solenoid;
pub mod transfer;
pub mod wavelet;

pub use dynamics::{BranchIndex, CellSpace, PointCode, StructureFlags, System, SystemSpec};
pub use error::{Error, Result};
