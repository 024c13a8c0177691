//! Low-pass filters, the cascade product for the scaling function in frequency,
//! and the residuals of the scaling identity and of the embedding isometry.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{System, SystemSpec};
use crate::error::{Error, Result};
use crate::transfer::{prf_residual, JsonScalar, MeasureVector, StepFunction, StepFunctionJson, TransferOp};

/// Finitely supported filter coefficients `a_n`, `m0(x) = sum a_n e^{-i 2 pi n x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoeffs {
    pub n: u32,
    pub coeffs: BTreeMap<i64, Complex64>,
}

impl FilterCoeffs {
    pub fn new(n: u32, coeffs: BTreeMap<i64, Complex64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("filter scale N must be >= 2, got {n}")));
        }
        Ok(Self { n, coeffs })
    }

    pub fn from_real(n: u32, coeffs: &[(i64, f64)]) -> Result<Self> {
        Self::new(n, coeffs.iter().map(|&(k, v)| (k, Complex64::new(v, 0.0))).collect())
    }

    /// `a_0 = a_1 = 1/sqrt(2)`.
    pub fn haar() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real(2, &[(0, a), (1, a)]).expect("valid Haar filter")
    }

    /// Lowest and highest index with a nonzero coefficient.
    pub fn support(&self) -> Option<(i64, i64)> {
        let mut keys = self.coeffs.iter().filter(|(_, v)| v.norm() != 0.0).map(|(k, _)| *k);
        let lo = keys.next()?;
        Some((lo, keys.next_back().unwrap_or(lo)))
    }

    pub fn is_unit_norm(&self, tol: f64) -> bool {
        (self.coeffs.values().map(|v| v.norm_sqr()).sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.coeffs.iter().map(|(&k, &a)| a * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * x)).sum()
    }

    /// Midpoint samples on the level-`level` cells of the circle map.
    pub fn to_step(&self, sys: &System, level: u32) -> Result<StepFunction> {
        check_circle(sys, self.n)?;
        StepFunction::sample_midpoints(sys, level, |x| self.eval(x))
    }
}

/// `m0_eval`: the trigonometric sum at `x`.
pub fn m0_eval(c: &FilterCoeffs, x: f64) -> Complex64 {
    c.eval(x)
}

fn check_circle(sys: &System, n: u32) -> Result<()> {
    match sys.spec() {
        SystemSpec::CircleMapN { n: m } if *m == n => Ok(()),
        _ => Err(Error::InvalidArgument(format!("filter with N = {n} needs the circle map x -> {n}x"))),
    }
}

/// Shannon filter `sqrt(2) chi_[-1/4, 1/4)` (periodized) as a step function on the
/// doubling map; exact for every level >= 2.
pub fn shannon_step(sys: &System, level: u32) -> Result<StepFunction> {
    check_circle(sys, 2)?;
    if level < 2 {
        return Err(Error::InvalidResolution(level));
    }
    let cells = 1u64 << level;
    let quarter = cells / 4;
    let values = (0..cells)
        .map(|j| {
            let inside = j < quarter || j >= 3 * quarter;
            Complex64::new(if inside { 2f64.sqrt() } else { 0.0 }, 0.0)
        })
        .collect();
    StepFunction::new(sys, level, values)
}

/// A low-pass filter given either by coefficients or directly as a step function
/// on the circle.
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Coeffs(FilterCoeffs),
    Step { n: u32, m0: StepFunction },
}

impl Filter {
    pub fn shannon() -> Self {
        let sys = System::circle(2).expect("doubling map");
        Filter::Step { n: 2, m0: shannon_step(&sys, 2).expect("level 2") }
    }

    pub fn haar() -> Self {
        Filter::Coeffs(FilterCoeffs::haar())
    }

    pub fn scale(&self) -> u32 {
        match self {
            Filter::Coeffs(c) => c.n,
            Filter::Step { n, .. } => *n,
        }
    }

    /// `m0(x)` for real `x`, periodized.
    pub fn eval(&self, x: f64) -> Complex64 {
        match self {
            Filter::Coeffs(c) => c.eval(x),
            Filter::Step { n, m0 } => {
                let y = x - x.floor();
                let cells = m0.len();
                let scale = (*n as f64).powi(m0.resolution() as i32);
                let j = ((y * scale).floor() as usize).min(cells - 1);
                m0.values()[j]
            }
        }
    }

    /// The filter as a step function at `level` (midpoint samples for coefficient
    /// filters; exact refinement for step filters at or above their level).
    pub fn to_step(&self, sys: &System, level: u32) -> Result<StepFunction> {
        match self {
            Filter::Coeffs(c) => c.to_step(sys, level),
            Filter::Step { n, m0 } => {
                check_circle(sys, *n)?;
                if level >= m0.resolution() {
                    StepFunction::new(sys, m0.resolution(), m0.values().to_vec())?.refine_to(level)
                } else {
                    Err(Error::ResolutionMismatch { left: m0.resolution(), right: level })
                }
            }
        }
    }

    pub fn from_json(json: &FilterJson) -> Result<Self> {
        match json {
            FilterJson::Coeffs { n, a } => {
                let coeffs = a
                    .iter()
                    .map(|(k, v)| {
                        k.parse::<i64>()
                            .map(|k| (k, v.to_complex()))
                            .map_err(|_| Error::InvalidArgument(format!("bad coefficient index {k:?}")))
                    })
                    .collect::<Result<_>>()?;
                Ok(Filter::Coeffs(FilterCoeffs::new(*n, coeffs)?))
            }
            FilterJson::Step { step } => {
                let sys = System::circle(step.n)?;
                let m0 = StepFunction::from_json(
                    &sys,
                    &StepFunctionJson { resolution: step.level, values: step.values.clone() },
                )?;
                Ok(Filter::Step { n: step.n, m0 })
            }
        }
    }

    pub fn to_json(&self) -> FilterJson {
        match self {
            Filter::Coeffs(c) => FilterJson::Coeffs {
                n: c.n,
                a: c.coeffs.iter().map(|(k, &v)| (k.to_string(), JsonScalar::from(v))).collect(),
            },
            Filter::Step { n, m0 } => FilterJson::Step {
                step: StepFilterJson {
                    n: *n,
                    level: m0.resolution(),
                    values: m0.values().iter().map(|&v| JsonScalar::from(v)).collect(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterJson {
    Coeffs {
        #[serde(rename = "N")]
        n: u32,
        a: BTreeMap<String, JsonScalar>,
    },
    Step {
        step: StepFilterJson,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFilterJson {
    #[serde(rename = "N")]
    pub n: u32,
    pub level: u32,
    pub values: Vec<JsonScalar>,
}

/// `|| R_{m0} 1 - 1 ||_inf` on the level-`level` cells of the circle map.
pub fn qmf_residual(filter: &Filter, level: u32) -> Result<f64> {
    let sys = System::circle(filter.scale())?;
    let m0 = filter.to_step(&sys, level)?;
    prf_residual(&m0, &StepFunction::ones(&sys, level)?)
}

/// Uniform frequency grid `x_i = -T + 2T i / M`, `i = 0..M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqGrid {
    pub half_range: f64,
    pub samples: usize,
}

impl FreqGrid {
    pub fn new(half_range: f64, samples: usize) -> Result<Self> {
        if half_range.is_nan() || half_range <= 0.0 || samples < 2 {
            return Err(Error::InvalidArgument("grid needs T > 0 and M >= 2".into()));
        }
        Ok(Self { half_range, samples })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_range / self.samples as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_range + 2.0 * self.half_range * i as f64 / self.samples as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples).map(|i| self.point(i))
    }
}

/// Samples of the truncated infinite product on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingApprox {
    pub grid: FreqGrid,
    pub values: Vec<Complex64>,
    pub depth: usize,
}

impl ScalingApprox {
    /// Linear interpolation inside the grid; exact at grid points.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let pos = (x + self.grid.half_range) / self.grid.step();
        let last = self.grid.samples - 1;
        if pos <= 0.0 {
            return self.values[0];
        }
        if pos >= last as f64 {
            return self.values[last];
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        if t == 0.0 {
            return self.values[i];
        }
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Rows `(x, re, im)`.
    pub fn csv_rows(&self) -> Vec<(f64, f64, f64)> {
        self.grid.points().zip(&self.values).map(|(x, v)| (x, v.re, v.im)).collect()
    }
}

/// `prod_{k=1..depth} N^{-1/2} m0(x / N^k)` at one point.
pub fn cascade_at(filter: &Filter, depth: usize, x: f64) -> Complex64 {
    let n = filter.scale() as f64;
    let norm = n.sqrt().recip();
    let mut y = x;
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..depth {
        y /= n;
        acc *= filter.eval(y) * norm;
    }
    acc
}

pub fn cascade_product(filter: &Filter, depth: usize, grid: FreqGrid) -> Result<ScalingApprox> {
    if depth == 0 {
        return Err(Error::InvalidArgument("cascade depth must be >= 1".into()));
    }
    let values = grid.points().map(|x| cascade_at(filter, depth, x)).collect();
    Ok(ScalingApprox { grid, values, depth })
}

/// `max_i | phi(x_i) - N^{-1/2} m0(x_i / N) phi(x_i / N) |`.
pub fn scaling_residual(s: &ScalingApprox, filter: &Filter) -> f64 {
    let n = filter.scale() as f64;
    let norm = n.sqrt().recip();
    s.grid
        .points()
        .zip(&s.values)
        .map(|(x, &v)| (v - filter.eval(x / n) * norm * s.interpolate(x / n)).norm())
        .fold(0.0, f64::max)
}

/// Quadrature settings for [`embed_isometry_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedQuadrature {
    /// Integrate over `[-T, T]`; chosen so that the tail of `|phi|^2` is negligible.
    pub half_range: f64,
    pub nodes: usize,
    pub cascade_depth: usize,
    pub tol: f64,
}

/// `| int |xi|^2 d omega_n - int_R |xi(x / N^n) phi(x)|^2 dx |` with midpoint
/// quadrature; `phi` is the cascade product of `filter` and `omega_n` is built from
/// the step version of the same filter.
pub fn embed_isometry_residual(
    filter: &Filter,
    h: &StepFunction,
    mu: &MeasureVector,
    xi: &StepFunction,
    n: usize,
    quad: EmbedQuadrature,
) -> Result<f64> {
    let sys = xi.system();
    check_circle(sys, filter.scale())?;
    let level = h.resolution().max(xi.resolution()).max(mu.resolution());
    let m0 = filter.to_step(sys, level)?;
    let integrand = xi.abs_sq().mul(h)?;
    let lhs = mu.integrate(&TransferOp::filter(&m0).apply_n(&integrand, n)?)?.re;

    let scale = (filter.scale() as f64).powi(n as i32);
    let xi_scale = (filter.scale() as f64).powi(xi.resolution() as i32);
    let xi_at = |x: f64| {
        let y = x - x.floor();
        let j = ((y * xi_scale).floor() as usize).min(xi.len() - 1);
        xi.values()[j].norm_sqr()
    };
    let quadrature = |nodes: usize| {
        let dx = 2.0 * quad.half_range / nodes as f64;
        (0..nodes)
            .map(|i| {
                let x = -quad.half_range + (i as f64 + 0.5) * dx;
                xi_at(x / scale) * cascade_at(filter, quad.cascade_depth, x).norm_sqr()
            })
            .sum::<f64>()
            * dx
    };
    let coarse = quadrature(quad.nodes);
    let fine = quadrature(2 * quad.nodes);
    if (fine - coarse).abs() > 10.0 * quad.tol {
        return Err(Error::QuadratureUnderresolved((fine - coarse).abs()));
    }
    Ok((lhs - coarse).abs())
}
