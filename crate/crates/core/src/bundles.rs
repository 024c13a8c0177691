//! The two filter pairs shipped with the toolkit, on the doubling map with
//! Lebesgue measure and `h = 1`.

use crate::dynamics::System;
use crate::error::Result;
use crate::solenoid::OmegaFamily;
use crate::transfer::{MeasureVector, StepFunction};
use crate::wavelet::{shannon_step, FilterCoeffs};

/// Haar filter sampled at cell midpoints of `level`; `R_{m0} 1 = 1` holds exactly
/// at every level because paired preimage midpoints differ by `1/2`.
pub fn haar_family(level: u32) -> Result<OmegaFamily> {
    let sys = System::circle(2)?;
    let m0 = FilterCoeffs::haar().to_step(&sys, level)?;
    OmegaFamily::new(m0, StepFunction::ones(&sys, 1)?, MeasureVector::uniform(&sys, 1)?)
}

/// `sqrt(2) chi_[-1/4, 1/4)`, exact at level 2.
pub fn shannon_family() -> Result<OmegaFamily> {
    let sys = System::circle(2)?;
    OmegaFamily::new(shannon_step(&sys, 2)?, StepFunction::ones(&sys, 1)?, MeasureVector::uniform(&sys, 1)?)
}
