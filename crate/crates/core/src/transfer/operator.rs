use num_complex::Complex64;
use rayon::prelude::*;

use super::step::{StepFunction, Weight};
use crate::dynamics::System;
use crate::error::{Error, Result};

/// A Ruelle-type transfer operator `(R f)(x) = sum_{r(y)=x} W(y) f(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferOp {
    /// An explicit nonnegative weight `W`.
    Weighted(Weight),
    /// `R_{m0}`: weight `|m0(y)|^2 / #r^{-1}(r(y))`.
    Filter(StepFunction),
    /// `R_0`: weight `1 / #r^{-1}(r(y))`, the fiber average.
    Normalized,
}

impl TransferOp {
    pub fn filter(m0: &StepFunction) -> Self {
        TransferOp::Filter(m0.clone())
    }

    /// Coarsest resolution at which the operator data is exact.
    pub fn resolution(&self) -> u32 {
        match self {
            TransferOp::Weighted(w) => w.resolution(),
            TransferOp::Filter(m0) => m0.resolution(),
            TransferOp::Normalized => 1,
        }
    }

    fn check_system(&self, sys: &System) -> Result<()> {
        let own = match self {
            TransferOp::Weighted(w) => Some(w.system()),
            TransferOp::Filter(m0) => Some(m0.system()),
            TransferOp::Normalized => None,
        };
        match own {
            Some(s) if s != sys => Err(Error::SystemMismatch),
            _ => Ok(()),
        }
    }

    /// Sparse rows of the operator at `resolution`: `(R f)(i) = sum_j rows[i][j].1 * f(rows[i][j].0)`.
    ///
    /// Rows are assembled independently (in parallel) with a fixed order inside each
    /// row, so the result does not depend on the number of worker threads.
    pub fn rows(&self, sys: &System, resolution: u32) -> Result<Vec<Vec<(usize, f64)>>> {
        self.check_system(sys)?;
        let cells = sys.cells(resolution)?;
        let data: Option<Vec<f64>> = match self {
            TransferOp::Weighted(w) => Some(w.as_step().refine_to(resolution)?.real_parts()),
            TransferOp::Filter(m0) => Some(m0.refine_to(resolution)?.values().iter().map(|v| v.norm_sqr()).collect()),
            TransferOp::Normalized => None,
        };
        let normalize = !matches!(self, TransferOp::Weighted(_));
        Ok((0..cells.len())
            .into_par_iter()
            .map(|i| {
                let pre = cells.preimage_cells(i);
                let scale = if normalize { 1.0 / sys.fiber_size(cells.first_letter(i)) as f64 } else { 1.0 };
                pre.iter().map(|&j| (j, data.as_ref().map_or(1.0, |d| d[j]) * scale)).collect()
            })
            .collect())
    }

    /// Applies the operator, working at the finer of the operator's and `f`'s
    /// resolutions. The output is at that resolution.
    pub fn apply(&self, f: &StepFunction) -> Result<StepFunction> {
        let res = f.resolution().max(self.resolution());
        let f = f.refine_to(res)?;
        let rows = self.rows(f.system(), res)?;
        let values = rows.iter().map(|row| row.iter().map(|&(j, w)| f.values()[j] * w).sum::<Complex64>()).collect();
        StepFunction::new(f.system(), res, values)
    }

    pub fn apply_n(&self, f: &StepFunction, n: usize) -> Result<StepFunction> {
        let mut out = f.clone();
        for _ in 0..n {
            out = self.apply(&out)?;
        }
        Ok(out)
    }
}

/// `R_W f` for a weight and a function at the same resolution.
pub fn ruelle_apply(w: &Weight, f: &StepFunction) -> Result<StepFunction> {
    if w.system() != f.system() {
        return Err(Error::SystemMismatch);
    }
    if w.resolution() != f.resolution() {
        return Err(Error::ResolutionMismatch { left: w.resolution(), right: f.resolution() });
    }
    TransferOp::Weighted(w.clone()).apply(f)
}

/// `R_{m0} f`, aligning resolutions.
pub fn ruelle_filter(m0: &StepFunction, f: &StepFunction) -> Result<StepFunction> {
    TransferOp::Filter(m0.clone()).apply(f)
}
