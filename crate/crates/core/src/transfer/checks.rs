//! Residual checks for invariance of measures and for filter/eigenfunction pairs.

use super::operator::TransferOp;
use super::step::{MeasureVector, StepFunction};
use crate::error::{Error, Result};

/// `max_c | mu(c) - int R_0 chi_c dmu |` over the cells of the measure's resolution.
pub fn strong_invariance_residual(mu: &MeasureVector) -> Result<f64> {
    let rows = TransferOp::Normalized.rows(mu.system(), mu.resolution())?;
    let mut pulled = vec![0.0; rows.len()];
    for (x, row) in rows.iter().enumerate() {
        for &(c, w) in row {
            pulled[c] += mu.masses()[x] * w;
        }
    }
    Ok(pulled.iter().zip(mu.masses()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `max_f | mu(f o r) - mu(f) |` over indicators `f` of cells one resolution
/// coarser than the measure (so that `f o r` is resolved exactly).
pub fn invariance_residual(mu: &MeasureVector) -> Result<f64> {
    let depth = mu.resolution();
    if depth == 1 {
        // Only constants live below resolution 1.
        return Ok(0.0);
    }
    let sys = mu.system();
    let coarse = mu.coarsen_to(depth - 1)?;
    let mut pulled = vec![0.0; coarse.masses().len()];
    for (i, &m) in mu.masses().iter().enumerate() {
        pulled[sys.shifted_cell(depth, i)?] += m;
    }
    Ok(pulled.iter().zip(coarse.masses()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `d mu = h d nu`.
pub fn invariant_from_eigen(nu: &MeasureVector, h: &StepFunction) -> Result<MeasureVector> {
    if nu.system() != h.system() {
        return Err(Error::SystemMismatch);
    }
    nu.with_density(h)
}

/// `|| R_{m0} h - h ||_inf`.
pub fn prf_residual(m0: &StepFunction, h: &StepFunction) -> Result<f64> {
    let rh = TransferOp::filter(m0).apply(h)?;
    rh.sup_distance(h)
}

/// `|| S_{m0} f ||^2 - || f ||^2` in `L^2(h dmu)`, where `(S_{m0} f)(x) = m0(x) f(r x)`.
/// `mu` must be strongly invariant.
pub fn isometry_gap(m0: &StepFunction, h: &StepFunction, mu: &MeasureVector, f: &StepFunction) -> Result<f64> {
    let sf = m0.mul(&f.compose_r()?)?;
    let lhs = mu.integrate(&sf.abs_sq().mul(h)?)?;
    let rhs = mu.integrate(&f.abs_sq().mul(h)?)?;
    Ok(lhs.re - rhs.re)
}
