use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{PointCode, System};
use crate::error::{Error, Result};

/// A complex function that is constant on the cells of one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    sys: System,
    resolution: u32,
    values: Vec<Complex64>,
}

impl StepFunction {
    pub fn new(sys: &System, resolution: u32, values: Vec<Complex64>) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        if values.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: values.len() });
        }
        Ok(Self { sys: sys.clone(), resolution, values })
    }

    pub fn from_real(sys: &System, resolution: u32, values: Vec<f64>) -> Result<Self> {
        Self::new(sys, resolution, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    pub fn constant(sys: &System, resolution: u32, value: Complex64) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        Ok(Self { sys: sys.clone(), resolution, values: vec![value; len] })
    }

    pub fn ones(sys: &System, resolution: u32) -> Result<Self> {
        Self::constant(sys, resolution, Complex64::new(1.0, 0.0))
    }

    pub fn zeros(sys: &System, resolution: u32) -> Result<Self> {
        Self::constant(sys, resolution, Complex64::new(0.0, 0.0))
    }

    /// Indicator of a single cell.
    pub fn indicator(sys: &System, resolution: u32, cell: usize) -> Result<Self> {
        let mut f = Self::zeros(sys, resolution)?;
        if cell >= f.values.len() {
            return Err(Error::InvalidArgument(format!("cell {cell} out of range")));
        }
        f.values[cell] = Complex64::new(1.0, 0.0);
        Ok(f)
    }

    /// Builds a step function from the letters of each cell.
    pub fn from_letters<F>(sys: &System, resolution: u32, mut f: F) -> Result<Self>
    where
        F: FnMut(&[u32]) -> Complex64,
    {
        let cells = sys.cells(resolution)?;
        let values = (0..cells.len()).map(|i| f(&cells.letters(i))).collect();
        Ok(Self { sys: sys.clone(), resolution, values })
    }

    /// Samples a function of the real coordinate at cell midpoints.
    pub fn sample_midpoints<F>(sys: &System, resolution: u32, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Complex64,
    {
        let mids = cell_midpoints(sys, resolution)?;
        Ok(Self { sys: sys.clone(), resolution, values: mids.into_iter().map(&mut f).collect() })
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// Same function expressed on a finer resolution (values replicated).
    pub fn refine_to(&self, resolution: u32) -> Result<Self> {
        if resolution < self.resolution {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: resolution });
        }
        if resolution == self.resolution {
            return Ok(self.clone());
        }
        let fine = self.sys.cells(resolution)?;
        let coarse = self.sys.cells(self.resolution)?;
        let div = (self.sys.alphabet_size() as u64).pow(resolution - self.resolution);
        let values = (0..fine.len())
            .map(|i| {
                let j = coarse.index_of(fine.code(i) / div).expect("ancestor is admissible");
                self.values[j]
            })
            .collect();
        Ok(Self { sys: self.sys.clone(), resolution, values })
    }

    /// Exact inverse of [`StepFunction::refine_to`]: fails unless the function is
    /// constant (to `tol`, absolute) on every coarse cell.
    pub fn coarsen_to(&self, resolution: u32, tol: f64) -> Result<Self> {
        if resolution > self.resolution || resolution == 0 {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: resolution });
        }
        if resolution == self.resolution {
            return Ok(self.clone());
        }
        let fine = self.sys.cells(self.resolution)?;
        let coarse = self.sys.cells(resolution)?;
        let div = (self.sys.alphabet_size() as u64).pow(self.resolution - resolution);
        let mut values: Vec<Option<Complex64>> = vec![None; coarse.len()];
        for i in 0..fine.len() {
            let j = coarse.index_of(fine.code(i) / div).expect("ancestor is admissible");
            match values[j] {
                None => values[j] = Some(self.values[i]),
                Some(v) if (v - self.values[i]).norm() <= tol => {}
                Some(_) => return Err(Error::NotCoarsenable { resolution: self.resolution, cell: i }),
            }
        }
        Ok(Self {
            sys: self.sys.clone(),
            resolution,
            values: values.into_iter().map(|v| v.unwrap_or_default()).collect(),
        })
    }

    /// `f o r`, one resolution finer.
    pub fn compose_r(&self) -> Result<Self> {
        let depth = self.resolution + 1;
        let fine = self.sys.cells(depth)?;
        let values =
            (0..fine.len()).map(|i| self.sys.shifted_cell(depth, i).map(|j| self.values[j])).collect::<Result<_>>()?;
        Ok(Self { sys: self.sys.clone(), resolution: depth, values })
    }

    /// `f o r^n`.
    pub fn compose_r_n(&self, n: usize) -> Result<Self> {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.compose_r()?;
        }
        Ok(out)
    }

    /// Combines two step functions cellwise after refining both to the finer
    /// resolution.
    pub fn zip_with<F>(&self, other: &Self, mut f: F) -> Result<Self>
    where
        F: FnMut(Complex64, Complex64) -> Complex64,
    {
        if self.sys != other.sys {
            return Err(Error::SystemMismatch);
        }
        let res = self.resolution.max(other.resolution);
        let a = self.refine_to(res)?;
        let b = other.refine_to(res)?;
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
        Ok(Self { sys: self.sys.clone(), resolution: res, values })
    }

    pub fn map<F>(&self, mut f: F) -> Self
    where
        F: FnMut(Complex64) -> Complex64,
    {
        Self { sys: self.sys.clone(), resolution: self.resolution, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn abs_sq(&self) -> Self {
        self.map(|v| Complex64::new(v.norm_sqr(), 0.0))
    }

    /// `self / h` cellwise with the convention `x / 0 = 0`. Returns the quotient and
    /// the cells where `h = 0` but the numerator exceeded `tol`.
    pub fn div_by(&self, h: &Self, tol: f64) -> Result<(Self, Vec<usize>)> {
        let mut flagged = Vec::new();
        let mut idx = 0usize;
        let q = self.zip_with(h, |a, b| {
            let i = idx;
            idx += 1;
            if b == Complex64::new(0.0, 0.0) {
                if a.norm() > tol {
                    flagged.push(i);
                }
                Complex64::new(0.0, 0.0)
            } else {
                a / b
            }
        })?;
        Ok((q, flagged))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `sup |self - other|` at the finer of the two resolutions.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Value at a point given by its letters (padded as needed).
    pub fn eval_letters(&self, letters: &[u32]) -> Result<Complex64> {
        Ok(self.values[self.sys.cell_of_letters(self.resolution, letters)?])
    }

    pub fn eval_point(&self, p: &PointCode) -> Result<Complex64> {
        Ok(self.values[self.sys.cell_of_point(self.resolution, p)?])
    }

    pub fn to_json(&self) -> StepFunctionJson {
        StepFunctionJson {
            resolution: self.resolution,
            values: self.values.iter().map(|&v| JsonScalar::from(v)).collect(),
        }
    }

    pub fn from_json(sys: &System, json: &StepFunctionJson) -> Result<Self> {
        Self::new(sys, json.resolution, json.values.iter().map(|v| v.to_complex()).collect())
    }

    /// Rows `(cell_midpoint, re, im)` for plotting.
    pub fn csv_rows(&self) -> Result<Vec<(f64, f64, f64)>> {
        let mids = cell_midpoints(&self.sys, self.resolution)?;
        Ok(mids.into_iter().zip(&self.values).map(|(x, v)| (x, v.re, v.im)).collect())
    }
}

/// Real coordinate of the midpoint of every cell at `resolution`.
pub fn cell_midpoints(sys: &System, resolution: u32) -> Result<Vec<f64>> {
    let cells = sys.cells(resolution)?;
    let base = match sys.spec() {
        crate::dynamics::SystemSpec::AffineIfs { scale, .. } => *scale as f64,
        _ => sys.alphabet_size() as f64,
    };
    let half = 0.5 * base.powi(-(resolution as i32));
    Ok((0..cells.len()).map(|i| sys.coordinate(&cells.letters(i)) + half).collect())
}

/// A scalar in JSON: a plain number when real, `[re, im]` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonScalar {
    Real(f64),
    Complex([f64; 2]),
}

impl JsonScalar {
    pub fn to_complex(self) -> Complex64 {
        match self {
            JsonScalar::Real(v) => Complex64::new(v, 0.0),
            JsonScalar::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for JsonScalar {
    fn from(v: Complex64) -> Self {
        if v.im == 0.0 {
            JsonScalar::Real(v.re)
        } else {
            JsonScalar::Complex([v.re, v.im])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunctionJson {
    pub resolution: u32,
    pub values: Vec<JsonScalar>,
}

/// A nonnegative real step function.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight(StepFunction);

impl Weight {
    pub fn new(f: StepFunction) -> Result<Self> {
        if let Some(i) = f.values.iter().position(|v| v.im != 0.0 || v.re < 0.0 || v.re.is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "weight must be real and nonnegative; cell {i} has {}",
                f.values[i]
            )));
        }
        Ok(Self(f))
    }

    pub fn constant(sys: &System, resolution: u32, value: f64) -> Result<Self> {
        Self::new(StepFunction::constant(sys, resolution, Complex64::new(value, 0.0))?)
    }

    pub fn from_real(sys: &System, resolution: u32, values: Vec<f64>) -> Result<Self> {
        Self::new(StepFunction::from_real(sys, resolution, values)?)
    }

    pub fn as_step(&self) -> &StepFunction {
        &self.0
    }

    pub fn into_step(self) -> StepFunction {
        self.0
    }

    pub fn resolution(&self) -> u32 {
        self.0.resolution
    }

    pub fn system(&self) -> &System {
        &self.0.sys
    }
}

/// A finite positive measure given by its cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVector {
    sys: System,
    resolution: u32,
    masses: Vec<f64>,
}

impl MeasureVector {
    pub fn new(sys: &System, resolution: u32, masses: Vec<f64>) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        if masses.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: masses.len() });
        }
        if let Some(i) = masses.iter().position(|&m| m.is_nan() || m < 0.0) {
            return Err(Error::InvalidArgument(format!("negative or NaN mass at cell {i}")));
        }
        Ok(Self { sys: sys.clone(), resolution, masses })
    }

    /// Equal mass on every cell: Lebesgue measure on the circle, the uniform
    /// Bernoulli measure on an IFS. For subshifts use
    /// [`crate::transfer::strongly_invariant_measure`] instead.
    pub fn uniform(sys: &System, resolution: u32) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        Self::new(sys, resolution, vec![1.0 / len as f64; len])
    }

    /// Unit mass on one cell.
    pub fn dirac(sys: &System, resolution: u32, cell: usize) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        if cell >= len {
            return Err(Error::InvalidArgument(format!("cell {cell} out of range")));
        }
        let mut masses = vec![0.0; len];
        masses[cell] = 1.0;
        Self::new(sys, resolution, masses)
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Sums child masses into the coarser cells.
    pub fn coarsen_to(&self, resolution: u32) -> Result<Self> {
        if resolution > self.resolution || resolution == 0 {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: resolution });
        }
        let fine = self.sys.cells(self.resolution)?;
        let coarse = self.sys.cells(resolution)?;
        let div = (self.sys.alphabet_size() as u64).pow(self.resolution - resolution);
        let mut masses = vec![0.0; coarse.len()];
        for (i, &m) in self.masses.iter().enumerate() {
            masses[coarse.index_of(fine.code(i) / div).expect("ancestor is admissible")] += m;
        }
        Ok(Self { sys: self.sys.clone(), resolution, masses })
    }

    /// Extends a strongly invariant measure to a finer resolution.
    ///
    /// Strong invariance pins the mass of `[y w]` to `mu[w] / #r^{-1}(w)`, so the
    /// finer masses are determined by the coarser ones. The result is meaningful
    /// only for strongly invariant inputs.
    pub fn refine_strongly_invariant(&self, resolution: u32) -> Result<Self> {
        if resolution < self.resolution {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: resolution });
        }
        let mut current = self.clone();
        while current.resolution < resolution {
            let depth = current.resolution + 1;
            let fine = self.sys.cells(depth)?;
            let masses = (0..fine.len())
                .map(|i| {
                    let tail = self.sys.shifted_cell(depth, i)?;
                    let second = fine.letters(i)[1];
                    Ok(current.masses[tail] / self.sys.fiber_size(second) as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            current = Self { sys: self.sys.clone(), resolution: depth, masses };
        }
        Ok(current)
    }

    /// `int f dmu`. Functions finer than the measure are integrated against the
    /// strongly invariant refinement of the measure.
    pub fn integrate(&self, f: &StepFunction) -> Result<Complex64> {
        if f.sys != self.sys {
            return Err(Error::SystemMismatch);
        }
        if f.resolution > self.resolution {
            let mu = self.refine_strongly_invariant(f.resolution)?;
            return Ok(mu.masses.iter().zip(&f.values).map(|(&m, &v)| v * m).sum());
        }
        let g = f.refine_to(self.resolution)?;
        Ok(self.masses.iter().zip(&g.values).map(|(&m, &v)| v * m).sum())
    }

    /// Cellwise density `h dmu`.
    pub fn with_density(&self, h: &StepFunction) -> Result<Self> {
        if h.resolution != self.resolution {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: h.resolution });
        }
        let masses = self.masses.iter().zip(&h.values).map(|(&m, v)| m * v.re).collect();
        Self::new(&self.sys, self.resolution, masses)
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.total_mass();
        if t <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Self::new(&self.sys, self.resolution, self.masses.iter().map(|m| m / t).collect())
    }

    pub fn to_json(&self) -> StepFunctionJson {
        StepFunctionJson {
            resolution: self.resolution,
            values: self.masses.iter().map(|&m| JsonScalar::Real(m)).collect(),
        }
    }

    pub fn from_json(sys: &System, json: &StepFunctionJson) -> Result<Self> {
        Self::new(sys, json.resolution, json.values.iter().map(|v| v.to_complex().re).collect())
    }
}
