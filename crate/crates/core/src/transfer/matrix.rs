use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::System;
use crate::error::{Error, Result};

/// A square-matrix valued step function.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStepFunction {
    sys: System,
    resolution: u32,
    dim: usize,
    values: Vec<DMatrix<Complex64>>,
}

impl MatrixStepFunction {
    pub fn new(sys: &System, resolution: u32, values: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        if values.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: values.len() });
        }
        let dim = values.first().map_or(0, |m| m.nrows());
        if let Some(i) = values.iter().position(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::DimensionMismatch(format!("cell {i} is not {dim}x{dim}")));
        }
        Ok(Self { sys: sys.clone(), resolution, dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[DMatrix<Complex64>] {
        &self.values
    }

    fn refine_to(&self, resolution: u32) -> Result<Self> {
        if resolution == self.resolution {
            return Ok(self.clone());
        }
        let fine = self.sys.cells(resolution)?;
        let coarse = self.sys.cells(self.resolution)?;
        let div = (self.sys.alphabet_size() as u64).pow(resolution - self.resolution);
        let values = (0..fine.len())
            .map(|i| self.values[coarse.index_of(fine.code(i) / div).expect("ancestor")].clone())
            .collect();
        Self::new(&self.sys, resolution, values)
    }
}

/// `max_x || (1/#r^-1(x)) sum_{r(y)=x} M0(y)^* H(y) M0(y) - H(x) ||_op`.
pub fn matrix_prf_residual(m0: &MatrixStepFunction, h: &MatrixStepFunction, psd_tol: f64) -> Result<f64> {
    if m0.sys != h.sys {
        return Err(Error::SystemMismatch);
    }
    if m0.dim != h.dim {
        return Err(Error::DimensionMismatch(format!("M0 is {0}x{0}, H is {1}x{1}", m0.dim, h.dim)));
    }
    for (i, hx) in h.values.iter().enumerate() {
        let herm_gap = (hx - hx.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let min_eig = hx.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if herm_gap > psd_tol || min_eig < -psd_tol {
            return Err(Error::NotPsd { cell: i, min_eigenvalue: min_eig });
        }
    }
    let res = m0.resolution.max(h.resolution);
    let m0 = m0.refine_to(res)?;
    let h = h.refine_to(res)?;
    let cells = m0.sys.cells(res)?;
    let mut worst = 0.0f64;
    for x in 0..cells.len() {
        let pre = cells.preimage_cells(x);
        let scale = Complex64::new(1.0 / pre.len() as f64, 0.0);
        let mut acc = DMatrix::<Complex64>::zeros(m0.dim, m0.dim);
        for &y in pre {
            acc += m0.values[y].adjoint() * &h.values[y] * &m0.values[y];
        }
        let diff = acc * scale - &h.values[x];
        let op_norm = diff.singular_values().iter().copied().fold(0.0, f64::max);
        worst = worst.max(op_norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::checks::prf_residual;
    use crate::transfer::step::StepFunction;
    use crate::wavelet::FilterCoeffs;

    fn scalar_lift(f: &StepFunction) -> MatrixStepFunction {
        let values = f.values().iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        MatrixStepFunction::new(f.system(), f.resolution(), values).unwrap()
    }

    #[test]
    fn scalar_case_matches_prf_residual() {
        let sys = System::circle(2).unwrap();
        let m0 = StepFunction::from_real(&sys, 2, vec![1.2, 0.3, 0.9, 0.1]).unwrap();
        let h = StepFunction::from_real(&sys, 2, vec![1.0, 2.0, 0.5, 1.5]).unwrap();
        let a = matrix_prf_residual(&scalar_lift(&m0), &scalar_lift(&h), 1e-12).unwrap();
        let b = prf_residual(&m0, &h).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn diagonal_haar_with_identity() {
        let sys = System::circle(2).unwrap();
        let haar = FilterCoeffs::haar().to_step(&sys, 4).unwrap();
        let zero = Complex64::new(0.0, 0.0);
        let m0 = haar.values().iter().map(|&v| DMatrix::from_row_slice(2, 2, &[v, zero, zero, v])).collect();
        let m0 = MatrixStepFunction::new(&sys, 4, m0).unwrap();
        let id = MatrixStepFunction::new(&sys, 1, vec![DMatrix::identity(2, 2); 2]).unwrap();
        assert!(matrix_prf_residual(&m0, &id, 1e-12).unwrap() <= 1e-12);
    }

    #[test]
    fn dimension_and_psd_errors() {
        let sys = System::circle(2).unwrap();
        let m1 = MatrixStepFunction::new(&sys, 1, vec![DMatrix::identity(1, 1); 2]).unwrap();
        let m2 = MatrixStepFunction::new(&sys, 1, vec![DMatrix::identity(2, 2); 2]).unwrap();
        assert!(matches!(matrix_prf_residual(&m1, &m2, 1e-12), Err(Error::DimensionMismatch(_))));
        let neg = MatrixStepFunction::new(&sys, 1, vec![-DMatrix::<Complex64>::identity(2, 2); 2]).unwrap();
        assert!(matches!(matrix_prf_residual(&m2, &neg, 1e-12), Err(Error::NotPsd { .. })));
    }
}
