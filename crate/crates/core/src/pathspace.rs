//! Path-space measures `P_x` on branch sequences, the seeded random walk, the
//! conjugacy between solenoid prefixes and (point, word) pairs, and the
//! disintegration of `omega_n` over paths.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{BranchIndex, PointCode, System};
use crate::error::{Error, Result};
use crate::solenoid::{omega, OmegaFamily};
use crate::transfer::{cell_midpoints, MeasureVector, StepFunction};
use crate::wavelet::Filter;

/// A finite sequence of branch indices `omega_1, ..., omega_n`.
pub type Word = Vec<usize>;

/// A real function evaluated at points given by letter words.
#[derive(Debug, Clone, PartialEq)]
pub enum PointFn {
    Const(f64),
    /// Real part of a step function.
    Step(StepFunction),
    /// `|m0(x)|^2 / N` evaluated pointwise on the circle `x -> Nx`.
    FilterWeight(Filter),
}

impl PointFn {
    pub fn eval(&self, sys: &System, z: &[u32]) -> Result<f64> {
        match self {
            PointFn::Const(c) => Ok(*c),
            PointFn::Step(f) => Ok(f.eval_letters(z)?.re),
            PointFn::FilterWeight(m0) => Ok(m0.eval(sys.coordinate(z)).norm_sqr() / m0.scale() as f64),
        }
    }
}

/// The filter weight `W(y) = |m0(y)|^2 / #r^{-1}(r(y))` as a step function.
pub fn filter_weight(m0: &StepFunction) -> Result<StepFunction> {
    let sys = m0.system().clone();
    let res = m0.resolution().max(2);
    let m0 = m0.refine_to(res)?;
    let cells = sys.cells(res)?;
    let values = (0..cells.len())
        .map(|i| {
            let fiber = sys.fiber_size(cells.letters(i)[1]) as f64;
            Complex64::new(m0.values()[i].norm_sqr() / fiber, 0.0)
        })
        .collect();
    StepFunction::new(&sys, res, values)
}

/// Transition probabilities `p_k(z) = W(tau_k z) h(tau_k z) / h(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionKernel {
    pub probs: Vec<f64>,
}

/// `P_x`, the measure on words with cylinder masses `W^(n)(tau_w x) h(tau_w x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    sys: System,
    w: PointFn,
    h: PointFn,
    x: Vec<u32>,
}

impl PathMeasure {
    pub fn new(sys: &System, w: PointFn, h: PointFn, x: &PointCode) -> Result<Self> {
        let letters = sys.point_letters(x)?;
        Self::at_letters(sys, w, h, letters)
    }

    pub fn at_letters(sys: &System, w: PointFn, h: PointFn, mut x: Vec<u32>) -> Result<Self> {
        if !sys.is_circle() {
            sys.pad_letters(&mut x, 1);
        }
        Ok(Self { sys: sys.clone(), w, h, x })
    }

    /// Step weight `|m0|^2 / #` and `h` from a family, started at `x`.
    pub fn from_family(fam: &OmegaFamily, x: &PointCode) -> Result<Self> {
        let w = PointFn::Step(filter_weight(fam.m0())?);
        Self::new(fam.system(), w, PointFn::Step(fam.h().clone()), x)
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn start(&self) -> PointCode {
        self.sys.point_from_letters(&self.x)
    }

    pub fn with_start(&self, x: Vec<u32>) -> Result<Self> {
        Self::at_letters(&self.sys, self.w.clone(), self.h.clone(), x)
    }

    fn branch_count(&self, z: &[u32]) -> usize {
        z.first().map_or(self.sys.alphabet_size(), |&s| self.sys.fiber_size(s))
    }

    fn child(&self, z: &[u32], k: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(z.len() + 1);
        out.push(z.first().map_or(k as u32, |&s| self.sys.predecessors(s)[k]));
        out.extend_from_slice(z);
        out
    }

    /// `|sum_k W(tau_k z) h(tau_k z) - h(z)|` at `z`.
    pub fn normalization_residual_at(&self, z: &[u32]) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..self.branch_count(z) {
            let c = self.child(z, k);
            total += self.w.eval(&self.sys, &c)? * self.h.eval(&self.sys, &c)?;
        }
        Ok((total - self.h.eval(&self.sys, z)?).abs())
    }

    /// Worst normalization residual over the cell representatives at `resolution`.
    pub fn normalization_residual(&self, resolution: u32) -> Result<f64> {
        let cells = self.sys.cells(resolution)?;
        (0..cells.len()).try_fold(0.0f64, |m, i| {
            let z = self.sys.representative_letters(resolution, i)?;
            Ok(m.max(self.normalization_residual_at(&z)?))
        })
    }

    pub fn kernel_at(&self, z: &[u32]) -> Result<TransitionKernel> {
        let hz = self.h.eval(&self.sys, z)?;
        if hz <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let probs = (0..self.branch_count(z))
            .map(|k| {
                let c = self.child(z, k);
                Ok(self.w.eval(&self.sys, &c)? * self.h.eval(&self.sys, &c)? / hz)
            })
            .collect::<Result<_>>()?;
        Ok(TransitionKernel { probs })
    }

    pub fn kernel(&self) -> Result<TransitionKernel> {
        self.kernel_at(&self.x)
    }

    /// Letters of `tau_{w_n} ... tau_{w_1} x` and the product of `W` along the way.
    fn follow(&self, w: &[usize]) -> Result<(Vec<u32>, f64)> {
        let mut z = self.x.clone();
        let mut prod = 1.0;
        for (j, &k) in w.iter().enumerate() {
            let count = self.branch_count(&z);
            if k >= count {
                return Err(Error::InvalidWord(format!("symbol {k} at position {j} exceeds {count} branches")));
            }
            z = self.child(&z, k);
            prod *= self.w.eval(&self.sys, &z)?;
        }
        Ok((z, prod))
    }

    /// Endpoint `tau_w x` of a word.
    pub fn endpoint(&self, w: &[usize]) -> Result<PointCode> {
        Ok(letters_to_code(&self.sys, &self.follow(w)?.0))
    }

    /// `f(tau_w x)`.
    pub fn endpoint_value(&self, w: &[usize], f: &PointFn) -> Result<f64> {
        f.eval(&self.sys, &self.follow(w)?.0)
    }

    /// Every word of length `n` valid along the orbit of `x`, in lexicographic order.
    pub fn words(&self, n: usize) -> Vec<Word> {
        let mut out = vec![(Vec::new(), self.x.clone())];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|(w, z)| {
                    (0..self.branch_count(&z))
                        .map(|k| {
                            let mut w2 = w.clone();
                            w2.push(k);
                            (w2, self.child(&z, k))
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out.into_iter().map(|(w, _)| w).collect()
    }
}

/// `P_x` of the cylinder of words starting with `w`.
pub fn cylinder_mass(p: &PathMeasure, w: &[usize]) -> Result<f64> {
    let (z, prod) = p.follow(w)?;
    Ok(prod * p.h.eval(&p.sys, &z)?)
}

/// `| sum_k P_x[w k] - P_x[w] |`.
pub fn consistency_residual(p: &PathMeasure, w: &[usize]) -> Result<f64> {
    let (z, _) = p.follow(w)?;
    let mut ext = w.to_vec();
    ext.push(0);
    let mut total = 0.0;
    for k in 0..p.branch_count(&z) {
        *ext.last_mut().expect("nonempty") = k;
        total += cylinder_mass(p, &ext)?;
    }
    Ok((total - cylinder_mass(p, w)?).abs())
}

/// A sampled word with the points `x_0 = x, x_1, ..., x_n` it visits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledPath {
    pub word: Word,
    pub points: Vec<PointCode>,
}

/// Circle points deeper than `u64` indices allow are kept as digit words.
fn letters_to_code(sys: &System, z: &[u32]) -> PointCode {
    if sys.is_circle() && (sys.alphabet_size() as f64).powi(z.len() as i32) >= u64::MAX as f64 {
        PointCode::Word(z.to_vec())
    } else {
        sys.point_from_letters(z)
    }
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// Walks `n` steps from `p`'s start, calling `visit(step, letters)` at every
/// visited point including the start.
fn walk<F>(p: &PathMeasure, n: usize, rng: &mut ChaCha8Rng, mut visit: F) -> Result<Word>
where
    F: FnMut(usize, &[u32]) -> Result<()>,
{
    let mut z = p.x.clone();
    if p.h.eval(&p.sys, &z)? <= 0.0 {
        return Err(Error::ZeroMass);
    }
    visit(0, &z)?;
    let mut word = Vec::with_capacity(n);
    for step in 1..=n {
        let count = p.branch_count(&z);
        let mut weights = Vec::with_capacity(count);
        for k in 0..count {
            let c = p.child(&z, k);
            weights.push((p.w.eval(&p.sys, &c)? * p.h.eval(&p.sys, &c)?).max(0.0));
        }
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::DeadEnd(step))?;
        let k = dist.sample(rng);
        word.push(k);
        z = p.child(&z, k);
        visit(step, &z)?;
    }
    Ok(word)
}

/// One path of length `n` from the normalized kernel; reproducible for a seed.
pub fn sample_path(p: &PathMeasure, n: usize, seed: u64) -> Result<SampledPath> {
    let mut rng = path_rng(seed, 0);
    let mut points = Vec::with_capacity(n + 1);
    let sys = p.sys.clone();
    let word = walk(p, n, &mut rng, |_, z| {
        points.push(letters_to_code(&sys, z));
        Ok(())
    })?;
    Ok(SampledPath { word, points })
}

/// `count` independent words of length `n`; path `i` uses the substream
/// `seed ^ i`, so the output does not depend on the thread count.
pub fn sample_words(p: &PathMeasure, n: usize, count: usize, seed: u64) -> Result<Vec<Word>> {
    (0..count as u64).into_par_iter().map(|i| walk(p, n, &mut path_rng(seed, i), |_, _| Ok(()))).collect()
}

/// Draws a start point from `mu` refined to `resolution` (strongly invariant
/// refinement), returning the representative letters of the drawn cell.
fn start_sampler(mu: &MeasureVector, resolution: u32) -> Result<(WeightedIndex<f64>, System, u32)> {
    let fine = if resolution > mu.resolution() { mu.refine_strongly_invariant(resolution)? } else { mu.clone() };
    let dist = WeightedIndex::new(fine.masses()).map_err(|_| Error::ZeroMass)?;
    Ok((dist, mu.system().clone(), fine.resolution()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisintegrationReport {
    pub n: usize,
    /// `omega_n(f)`.
    pub target: f64,
    /// Finite sum over all depth-`n` words.
    pub exact: f64,
    pub exact_residual: f64,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub mc_residual: f64,
}

impl DisintegrationReport {
    pub fn within_stderr(&self, k: f64) -> bool {
        self.mc_residual <= k * self.stderr || self.mc_residual <= 1e-12
    }
}

fn integrand_resolution(fam: &OmegaFamily, f: &StepFunction) -> u32 {
    fam.m0().resolution().max(2).max(fam.h().resolution()).max(f.resolution()).max(fam.mu().resolution())
}

/// `int_X sum_{|w| = n} P_x[w] f(tau_w x) dmu(x)`, evaluated on cell
/// representatives at a resolution where the inner sum is a step function.
pub fn disintegration_exact(fam: &OmegaFamily, f: &StepFunction, n: usize) -> Result<f64> {
    let sys = fam.system();
    let res = integrand_resolution(fam, f);
    let base = PathMeasure::from_family(fam, &sys.point_from_letters(&[]))?;
    let fv = PointFn::Step(f.clone());
    let cells = sys.cells(res)?;
    let values = (0..cells.len())
        .into_par_iter()
        .map(|i| {
            let x = sys.representative_letters(res, i)?;
            let p = base.with_start(x)?;
            let mut acc = 0.0;
            for w in p.words(n) {
                let (z, prod) = p.follow(&w)?;
                acc += prod * p.h.eval(sys, &z)? * fv.eval(sys, &z)?;
            }
            Ok(Complex64::new(acc, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fam.mu().integrate(&StepFunction::new(sys, res, values)?)?.re)
}

/// Exact and Monte Carlo disintegration of `omega_n(f)` over path space: sample
/// `x ~ mu`, a path from the normalized kernel at `x`, and average `h(x) f(x_n)`.
pub fn disintegration_residual(
    fam: &OmegaFamily,
    f: &StepFunction,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<DisintegrationReport> {
    let sys = fam.system().clone();
    let target = omega(fam, f, n)?.re;
    let exact = disintegration_exact(fam, f, n)?;
    let res = integrand_resolution(fam, f);
    let (starts, _, fine_res) = start_sampler(fam.mu(), res)?;
    let base = PathMeasure::from_family(fam, &sys.point_from_letters(&[]))?;
    let fv = PointFn::Step(f.clone());
    let values = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let cell = starts.sample(&mut rng);
            let x = sys.representative_letters(fine_res, cell)?;
            let p = base.with_start(x)?;
            let hx = p.h.eval(&sys, &p.x)?;
            if hx <= 0.0 {
                return Ok(0.0);
            }
            let mut end = 0.0;
            walk(&p, n, &mut rng, |step, z| {
                if step == n {
                    end = fv.eval(&sys, z)?;
                }
                Ok(())
            })?;
            Ok(hx * end)
        })
        .collect::<Result<Vec<f64>>>()?;
    let count = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    Ok(DisintegrationReport {
        n,
        target,
        exact,
        exact_residual: (exact - target).abs(),
        samples,
        mean,
        stderr: (var / count).sqrt(),
        mc_residual: (mean - target).abs(),
    })
}

/// Start point and branch digits of a solenoid prefix `(x_0, ..., x_n)`.
pub fn psi(sys: &System, prefix: &[PointCode]) -> Result<(PointCode, Word)> {
    let Some(x0) = prefix.first() else {
        return Err(Error::InvalidArgument("empty solenoid prefix".into()));
    };
    let mut word = Vec::with_capacity(prefix.len().saturating_sub(1));
    for j in 1..prefix.len() {
        if !sys.same_point(&sys.forward(&prefix[j])?, &prefix[j - 1])? {
            return Err(Error::NotAnOrbit { index: j });
        }
        word.push(sys.branch_of_letters(&sys.point_letters(&prefix[j])?));
    }
    Ok((x0.clone(), word))
}

/// The prefix `(x, tau_{w_1} x, tau_{w_2} tau_{w_1} x, ...)`.
pub fn psi_inv(sys: &System, x: &PointCode, w: &[usize]) -> Result<Vec<PointCode>> {
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(x.clone());
    for &k in w {
        let next = sys.branch(BranchIndex(k), out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Number of disagreements between `psi(r^(prefix))` and the shift
/// `(r(x), omega_x omega)` of `psi(prefix)`: 0 means exact conjugacy.
pub fn conjugacy_residual(sys: &System, prefix: &[PointCode]) -> Result<usize> {
    let (x, w) = psi(sys, prefix)?;
    let rx = sys.forward(&x)?;
    let mut shifted_prefix = Vec::with_capacity(prefix.len() + 1);
    shifted_prefix.push(rx.clone());
    shifted_prefix.extend(prefix.iter().cloned());
    let (y, v) = psi(sys, &shifted_prefix)?;

    let mut expected = vec![sys.branch_of_letters(&sys.point_letters(&x)?)];
    expected.extend(w);
    let mut misses = usize::from(!sys.same_point(&y, &rx)?);
    misses += v.iter().zip(&expected).filter(|(a, b)| a != b).count();
    misses += v.len().abs_diff(expected.len());
    Ok(misses)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleStats {
    pub paths: usize,
    pub steps: usize,
    pub eps: f64,
    /// Per path, `max - min` of the tracked values over the second half of the path.
    pub late_fluctuation: Vec<f64>,
    pub failure_fraction: f64,
}

/// Samples `x ~ mu` and a path of length `n` per sample, tracks `(h0 / h)(x_j)`
/// and reports how many paths still move by more than `eps` after step `n / 2`.
pub fn cocycle_convergence(
    fam: &OmegaFamily,
    h0: &StepFunction,
    n: usize,
    samples: usize,
    seed: u64,
    eps: f64,
) -> Result<CocycleStats> {
    let sys = fam.system().clone();
    let (ratio, _) = h0.div_by(fam.h(), 1e-14)?;
    let ratio = PointFn::Step(ratio);
    let res = fam.m0().resolution().max(2).max(fam.h().resolution()).max(h0.resolution());
    let (starts, _, fine_res) = start_sampler(fam.mu(), res)?;
    let base = PathMeasure::from_family(fam, &sys.point_from_letters(&[]))?;
    let late = n / 2;
    let fluct = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let x = sys.representative_letters(fine_res, starts.sample(&mut rng))?;
            let p = base.with_start(x)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            walk(&p, n, &mut rng, |step, z| {
                if step >= late {
                    let v = ratio.eval(&sys, z)?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                Ok(())
            })?;
            Ok(hi - lo)
        })
        .collect::<Result<Vec<f64>>>()?;
    let failures = fluct.iter().filter(|&&d| d > eps).count();
    Ok(CocycleStats {
        paths: samples,
        steps: n,
        eps,
        failure_fraction: failures as f64 / samples.max(1) as f64,
        late_fluctuation: fluct,
    })
}

/// `sum_c mu(c) mid(c)^p` over the cells of `mu`.
pub fn measure_moment(mu: &MeasureVector, p: i32) -> Result<f64> {
    let mids = cell_midpoints(mu.system(), mu.resolution())?;
    Ok(mids.iter().zip(mu.masses()).map(|(x, m)| m * x.powi(p)).sum())
}
