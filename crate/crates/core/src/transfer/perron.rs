use num_complex::Complex64;
use serde::Serialize;

use super::operator::TransferOp;
use super::step::{MeasureVector, StepFunction, Weight};
use crate::dynamics::System;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAXIT: usize = 10_000;

/// Leading eigendata `(lambda0, h, nu)` of a transfer operator, with
/// `R h = lambda0 h`, `nu R = lambda0 nu` and `nu(h) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronData {
    pub lambda0: f64,
    pub h: StepFunction,
    pub nu: MeasureVector,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerronReport {
    pub lambda0: f64,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl PerronData {
    pub fn report(&self) -> PerronReport {
        PerronReport {
            lambda0: self.lambda0,
            h: self.h.real_parts(),
            nu: self.nu.masses().to_vec(),
            iterations: self.iterations,
            residual: self.residual,
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Power iteration for the Perron eigendata of `R_W` at the weight's resolution.
pub fn solve_perron(w: &Weight, tol: f64, maxit: usize) -> Result<PerronData> {
    if w.as_step().values().iter().all(|v| v.re == 0.0) {
        return Err(Error::ZeroWeight);
    }
    solve_perron_op(&TransferOp::Weighted(w.clone()), w.system(), w.resolution(), tol, maxit)
}

/// Power iteration for any transfer operator at the given resolution.
///
/// `h` starts at 1 and is renormalized in sup norm each step; `nu` is obtained by
/// the same iteration on the transposed matrix. Both stop once the sup-norm change
/// between iterates drops below `tol`.
pub fn solve_perron_op(op: &TransferOp, sys: &System, resolution: u32, tol: f64, maxit: usize) -> Result<PerronData> {
    if !sys.structure_flags().aperiodic {
        log::warn!("transfer matrix is not aperiodic; Perron data may not be unique");
    }
    let rows = op.rows(sys, resolution)?;
    let len = rows.len();
    let apply = |h: &[f64]| -> Vec<f64> { rows.iter().map(|row| row.iter().map(|&(j, w)| w * h[j]).sum()).collect() };
    let apply_t = |nu: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                out[j] += nu[i] * w;
            }
        }
        out
    };

    let mut h = vec![1.0; len];
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < maxit {
        iterations += 1;
        let g = apply(&h);
        lambda = sup(&g);
        if lambda == 0.0 {
            return Err(Error::ZeroWeight);
        }
        let next: Vec<f64> = g.iter().map(|v| v / lambda).collect();
        change = sup(&next.iter().zip(&h).map(|(a, b)| a - b).collect::<Vec<_>>());
        h = next;
        if change < tol {
            break;
        }
    }
    if change >= tol {
        return Err(Error::NoConvergence { maxit, residual: change });
    }

    let mut nu = vec![1.0 / len as f64; len];
    let mut nu_change = f64::INFINITY;
    let mut nu_iterations = 0;
    while nu_iterations < maxit {
        nu_iterations += 1;
        let g = apply_t(&nu);
        let total: f64 = g.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroWeight);
        }
        let next: Vec<f64> = g.iter().map(|v| v / total).collect();
        nu_change = sup(&next.iter().zip(&nu).map(|(a, b)| a - b).collect::<Vec<_>>());
        nu = next;
        if nu_change < tol {
            break;
        }
    }
    if nu_change >= tol {
        return Err(Error::NoConvergence { maxit, residual: nu_change });
    }
    let pairing: f64 = nu.iter().zip(&h).map(|(a, b)| a * b).sum();
    let nu: Vec<f64> = nu.iter().map(|v| v / pairing).collect();

    let rh = apply(&h);
    let residual = sup(&rh.iter().zip(&h).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
    Ok(PerronData {
        lambda0: lambda,
        h: StepFunction::new(sys, resolution, h.into_iter().map(|v| Complex64::new(v, 0.0)).collect())?,
        nu: MeasureVector::new(sys, resolution, nu)?,
        iterations: iterations.max(nu_iterations),
        residual,
    })
}

/// The strongly invariant probability measure: the left eigenmeasure of the
/// fiber-average operator `R_0`.
pub fn strongly_invariant_measure(sys: &System, resolution: u32) -> Result<MeasureVector> {
    let data = solve_perron_op(&TransferOp::Normalized, sys, resolution, DEFAULT_TOL, DEFAULT_MAXIT)?;
    data.nu.normalized()
}
