//! Functions on the projective limit of `r`, represented by their martingale of
//! level functions, together with the measures `omega_n`, conditional
//! expectations, the operators `U`, `U*`, `pi(g)`, and the correspondence between
//! cocycles and harmonic functions of `R_{m0}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::System;
use crate::error::{Error, Result};
use crate::transfer::{prf_residual, MeasureVector, StepFunction, StepFunctionJson, TransferOp};

/// Below this modulus a filter value counts as zero.
pub const SINGULAR_TOL: f64 = 1e-14;

const DIV_TOL: f64 = 1e-14;

/// Coarsest exact representative of `f`, never below `floor`.
fn reduce(f: StepFunction, floor: u32) -> StepFunction {
    let mut f = f;
    while f.resolution() > floor.max(1) {
        match f.coarsen_to(f.resolution() - 1, 0.0) {
            Ok(g) => f = g,
            Err(_) => break,
        }
    }
    f
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// The data `(m0, h, mu)` fixing the measures `omega_n(f) = int R^n(f h) dmu`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaFamily {
    m0: StepFunction,
    h: StepFunction,
    mu: MeasureVector,
}

impl OmegaFamily {
    /// `mu` must be strongly invariant; functions finer than `mu` are integrated
    /// against its strongly invariant refinement.
    pub fn new(m0: StepFunction, h: StepFunction, mu: MeasureVector) -> Result<Self> {
        if m0.system() != h.system() || h.system() != mu.system() {
            return Err(Error::SystemMismatch);
        }
        Ok(Self { m0, h, mu })
    }

    pub fn system(&self) -> &System {
        self.m0.system()
    }

    pub fn m0(&self) -> &StepFunction {
        &self.m0
    }

    pub fn h(&self) -> &StepFunction {
        &self.h
    }

    pub fn mu(&self) -> &MeasureVector {
        &self.mu
    }

    pub fn resolution(&self) -> u32 {
        self.m0.resolution().max(self.h.resolution()).max(self.mu.resolution())
    }

    pub fn op(&self) -> TransferOp {
        TransferOp::filter(&self.m0)
    }

    pub fn is_nonsingular(&self) -> bool {
        self.m0.values().iter().all(|v| v.norm() >= SINGULAR_TOL)
    }

    /// `R_{m0}^k (f h) / h`, with `x / 0 = 0`; second component lists cells where
    /// `h = 0` under a nonzero numerator.
    pub fn transfer_quotient(&self, f: &StepFunction, k: usize) -> Result<(StepFunction, Vec<usize>)> {
        let rk = self.op().apply_n(&f.mul(&self.h)?, k)?;
        let (q, flagged) = rk.div_by(&self.h, DIV_TOL)?;
        Ok((reduce(q, 1), flagged))
    }
}

/// `omega_n(f) = int R_{m0}^n (f h) dmu`.
pub fn omega(fam: &OmegaFamily, f: &StepFunction, n: usize) -> Result<Complex64> {
    if f.system() != fam.system() {
        return Err(Error::SystemMismatch);
    }
    let g = fam.op().apply_n(&f.mul(&fam.h)?, n)?;
    fam.mu.integrate(&reduce(g, fam.mu.resolution()))
}

/// `| omega_{n+1}(f o r) - omega_n(f) |`.
pub fn omega_compat_residual(fam: &OmegaFamily, f: &StepFunction, n: usize) -> Result<f64> {
    Ok((omega(fam, &f.compose_r()?, n + 1)? - omega(fam, f, n)?).norm())
}

/// `| omega_n(|m0|^2 o r^n . f o r) - omega_n(f) |`.
pub fn radon_nikodym_residual(fam: &OmegaFamily, f: &StepFunction, n: usize) -> Result<f64> {
    let weight = fam.m0.abs_sq().compose_r_n(n)?;
    let lhs = omega(fam, &weight.mul(&f.compose_r()?)?, n)?;
    Ok((lhs - omega(fam, f, n)?).norm())
}

/// A function on the solenoid given by its levels `xi_0, ..., xi_K` with
/// `R(xi_{n+1} h) = xi_n h`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleFn {
    fam: OmegaFamily,
    levels: Vec<StepFunction>,
    /// `(level, cell)` pairs where a division by `h = 0` was replaced by 0.
    flagged: Vec<(usize, usize)>,
}

impl MartingaleFn {
    pub fn new(fam: &OmegaFamily, levels: Vec<StepFunction>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("a martingale needs at least one level".into()));
        }
        if levels.iter().any(|l| l.system() != fam.system()) {
            return Err(Error::SystemMismatch);
        }
        Ok(Self { fam: fam.clone(), levels, flagged: Vec::new() })
    }

    /// All levels equal to `c`.
    pub fn constant(fam: &OmegaFamily, c: Complex64, depth: usize) -> Result<Self> {
        let level = StepFunction::constant(fam.system(), 1, c)?;
        Self::new(fam, vec![level; depth + 1])
    }

    pub fn family(&self) -> &OmegaFamily {
        &self.fam
    }

    /// `K`, the index of the last level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[StepFunction] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&StepFunction> {
        self.levels.get(n).ok_or(Error::LevelOutOfRange { level: n, depth: self.depth() })
    }

    pub fn flagged(&self) -> &[(usize, usize)] {
        &self.flagged
    }

    /// `max_n || R(xi_{n+1} h) - xi_n h ||_inf`.
    pub fn compatibility_residual(&self) -> Result<f64> {
        let op = self.fam.op();
        let mut worst = 0.0f64;
        for n in 0..self.depth() {
            let lhs = op.apply(&self.levels[n + 1].mul(&self.fam.h)?)?;
            let rhs = self.levels[n].mul(&self.fam.h)?;
            worst = worst.max(lhs.sup_distance(&rhs)?);
        }
        Ok(worst)
    }

    /// `omega_n(|xi_n|^2)` for every level.
    pub fn level_norms(&self) -> Result<Vec<f64>> {
        self.levels.iter().enumerate().map(|(n, l)| Ok(omega(&self.fam, &l.abs_sq(), n)?.re)).collect()
    }

    /// Squared norm, evaluated at level `K`.
    pub fn norm_sq(&self) -> Result<f64> {
        Ok(omega(&self.fam, &self.levels[self.depth()].abs_sq(), self.depth())?.re)
    }

    /// Difference of the squared norms at the last two levels (0 when `K = 0`).
    pub fn last_increment(&self) -> Result<f64> {
        let norms = self.level_norms()?;
        Ok(match norms.len() {
            0 | 1 => 0.0,
            k => norms[k - 1] - norms[k - 2],
        })
    }

    /// Levelwise `self - other` on the common levels.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.fam != other.fam {
            return Err(Error::SystemMismatch);
        }
        let levels = self.levels.iter().zip(&other.levels).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Self::new(&self.fam, levels)
    }

    /// `max_n sup |xi_n - eta_n|` over the common levels.
    pub fn level_distance(&self, other: &Self) -> Result<f64> {
        self.levels.iter().zip(&other.levels).try_fold(0.0f64, |m, (a, b)| Ok(m.max(a.sup_distance(b)?)))
    }

    pub fn to_json(&self, m0_ref: &str, h_ref: &str) -> MartingaleJson {
        MartingaleJson {
            m0_ref: m0_ref.to_string(),
            h_ref: h_ref.to_string(),
            k: self.depth(),
            levels: self.levels.iter().map(|l| l.to_json()).collect(),
        }
    }

    pub fn from_json(fam: &OmegaFamily, json: &MartingaleJson) -> Result<Self> {
        let levels: Vec<_> =
            json.levels.iter().map(|l| StepFunction::from_json(fam.system(), l)).collect::<Result<_>>()?;
        if levels.len() != json.k + 1 {
            return Err(Error::LengthMismatch { expected: json.k + 1, got: levels.len() });
        }
        Self::new(fam, levels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleJson {
    pub m0_ref: String,
    pub h_ref: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub levels: Vec<StepFunctionJson>,
}

/// The martingale of `xi o theta_n`: levels `R^{n-j}(xi h)/h` below `n`, `xi` at
/// `n`, and `xi o r^{j-n}` above.
pub fn lift_to_martingale(fam: &OmegaFamily, xi: &StepFunction, n: usize, depth: usize) -> Result<MartingaleFn> {
    if depth < n {
        return Err(Error::LevelOutOfRange { level: n, depth });
    }
    let mut levels = Vec::with_capacity(depth + 1);
    let mut flagged = Vec::new();
    for j in 0..n {
        let (q, bad) = fam.transfer_quotient(xi, n - j)?;
        flagged.extend(bad.into_iter().map(|c| (j, c)));
        levels.push(q);
    }
    let mut top = xi.clone();
    levels.push(top.clone());
    for _ in n..depth {
        top = top.compose_r()?;
        levels.push(top.clone());
    }
    let mut m = MartingaleFn::new(fam, levels)?;
    m.flagged = flagged;
    Ok(m)
}

/// `E_n` applied to the level-`(n+k)` function: `R^k(xi_{n+k} h) / h`.
pub fn cond_expect(m: &MartingaleFn, n: usize, k: usize) -> Result<StepFunction> {
    let xi = m.level(n + k)?;
    Ok(m.fam.transfer_quotient(xi, k)?.0)
}

/// `E_n m` as a martingale of the same depth.
pub fn project(m: &MartingaleFn, n: usize) -> Result<MartingaleFn> {
    let k = m.depth().checked_sub(n).ok_or(Error::LevelOutOfRange { level: n, depth: m.depth() })?;
    lift_to_martingale(&m.fam, &cond_expect(m, n, k)?, n, m.depth())
}

/// `max` of the level distances of `E_n E_k m` and `E_k E_n m` from `E_n m`, `n <= k`.
pub fn tower_residual(m: &MartingaleFn, n: usize, k: usize) -> Result<f64> {
    if n > k {
        return tower_residual(m, k, n);
    }
    let en = project(m, n)?;
    let a = project(&project(m, k)?, n)?.level_distance(&en)?;
    let b = project(&en, k)?.level_distance(&en)?;
    Ok(a.max(b))
}

/// `(U m)_n = (m0 o r^n) xi_{n+1}`; the depth drops by one.
pub fn apply_u(m: &MartingaleFn) -> Result<MartingaleFn> {
    if m.depth() == 0 {
        return Err(Error::DepthExhausted);
    }
    let mut m0n = m.fam.m0.clone();
    let mut levels = Vec::with_capacity(m.depth());
    for n in 0..m.depth() {
        if n > 0 {
            m0n = m0n.compose_r()?;
        }
        levels.push(m0n.mul(&m.levels[n + 1])?);
    }
    MartingaleFn::new(&m.fam, levels)
}

/// `(U* m)_n = chi_{m0 o r^{n-1} != 0} xi_{n-1} / (m0 o r^{n-1})` for `n >= 1`,
/// completed at level 0 by `R((U* m)_1 h) / h`; the depth grows by one.
pub fn apply_u_star(m: &MartingaleFn) -> Result<MartingaleFn> {
    let mut m0n = m.fam.m0.clone();
    let mut upper = Vec::with_capacity(m.depth() + 1);
    for n in 0..=m.depth() {
        if n > 0 {
            m0n = m0n.compose_r()?;
        }
        let inv = m0n.map(|v| if v.norm() < SINGULAR_TOL { zero() } else { v.inv() });
        upper.push(inv.mul(&m.levels[n])?);
    }
    let (base, flagged) = m.fam.transfer_quotient(&upper[0], 1)?;
    let mut levels = Vec::with_capacity(upper.len() + 1);
    levels.push(base);
    levels.extend(upper);
    let mut out = MartingaleFn::new(&m.fam, levels)?;
    out.flagged = flagged.into_iter().map(|c| (0, c)).collect();
    Ok(out)
}

/// `(pi(g) m)_n = (g o r^n) xi_n`.
pub fn apply_pi(g: &StepFunction, m: &MartingaleFn) -> Result<MartingaleFn> {
    let mut gn = g.clone();
    let mut levels = Vec::with_capacity(m.levels.len());
    for (n, xi) in m.levels.iter().enumerate() {
        if n > 0 {
            gn = gn.compose_r()?;
        }
        levels.push(gn.mul(xi)?);
    }
    MartingaleFn::new(&m.fam, levels)
}

/// `f o r^` : drops level 0.
pub fn compose_rhat(m: &MartingaleFn) -> Result<MartingaleFn> {
    if m.depth() == 0 {
        return Err(Error::DepthExhausted);
    }
    MartingaleFn::new(&m.fam, m.levels[1..].to_vec())
}

/// `f o r^^{-1}` : prepends `R(xi_0 h) / h`.
pub fn compose_rhat_inv(m: &MartingaleFn) -> Result<MartingaleFn> {
    let (base, flagged) = m.fam.transfer_quotient(&m.levels[0], 1)?;
    let mut levels = Vec::with_capacity(m.levels.len() + 1);
    levels.push(base);
    levels.extend(m.levels.iter().cloned());
    let mut out = MartingaleFn::new(&m.fam, levels)?;
    out.flagged = flagged.into_iter().map(|c| (0, c)).collect();
    Ok(out)
}

/// `<a, b> = omega_K(conj(xi_K) eta_K)` at the deepest common level.
pub fn inner_product(a: &MartingaleFn, b: &MartingaleFn) -> Result<Complex64> {
    if a.fam != b.fam {
        return Err(Error::SystemMismatch);
    }
    let k = a.depth().min(b.depth());
    omega(&a.fam, &a.levels[k].conj().mul(&b.levels[k])?, k)
}

/// A martingale whose levels all coincide: a function invariant under `r^`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cocycle(MartingaleFn);

impl Cocycle {
    /// Checks level equality to `1e-12`.
    pub fn new(m: MartingaleFn) -> Result<Self> {
        for n in 1..m.levels.len() {
            let gap = m.levels[n].sup_distance(&m.levels[0])?;
            if gap > 1e-12 {
                return Err(Error::InvalidArgument(format!("level {n} differs from level 0 by {gap:e}")));
            }
        }
        Ok(Self(m))
    }

    pub fn martingale(&self) -> &MartingaleFn {
        &self.0
    }

    pub fn value(&self) -> &StepFunction {
        &self.0.levels[0]
    }
}

/// The cocycle `h0 / h`, repeated on levels `0..=depth`.
pub fn harmonic_to_cocycle(fam: &OmegaFamily, h0: &StepFunction, depth: usize, tol: f64) -> Result<Cocycle> {
    let res = prf_residual(&fam.m0, h0)?;
    if res > tol {
        return Err(Error::NotHarmonic(res));
    }
    let hh = fam.h.refine_to(h0.resolution().max(fam.h.resolution()))?;
    let h0r = h0.refine_to(hh.resolution())?;
    for (i, (a, b)) in h0r.values().iter().zip(hh.values()).enumerate() {
        if b.re.abs() <= DIV_TOL && a.norm() > tol {
            return Err(Error::DominationFailure(i));
        }
    }
    let (q, _) = h0.div_by(&fam.h, DIV_TOL)?;
    let q = reduce(q, 1);
    Cocycle::new(MartingaleFn::new(fam, vec![q; depth + 1])?)
}

/// `h0 = xi_0 h`.
pub fn cocycle_to_harmonic(c: &Cocycle) -> Result<StepFunction> {
    c.0.levels[0].mul(&c.0.fam.h)
}

/// Smallest `c` with `|h0|^2 <= c h^2` cellwise (`None` if `h0 != 0` where `h = 0`).
pub fn domination_constant(h0: &StepFunction, h: &StepFunction) -> Result<Option<f64>> {
    let ratio = h0.zip_with(h, |a, b| {
        if b.norm() <= DIV_TOL {
            if a.norm() <= DIV_TOL {
                zero()
            } else {
                Complex64::new(f64::INFINITY, 0.0)
            }
        } else {
            Complex64::new(a.norm_sqr() / b.norm_sqr(), 0.0)
        }
    })?;
    let c = ratio.values().iter().map(|v| v.re).fold(0.0, f64::max);
    Ok(c.is_finite().then_some(c))
}

/// Basis of `{f : R_{m0} f = f}` at `level`, from the right singular vectors of
/// `R - I` with singular value below `tol`.
pub fn harmonic_basis(m0: &StepFunction, level: u32, tol: f64) -> Result<Vec<StepFunction>> {
    let sys = m0.system();
    let rows = TransferOp::filter(m0).rows(sys, level.max(m0.resolution()))?;
    let len = rows.len();
    let mut a = DMatrix::<f64>::identity(len, len) * -1.0;
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            a[(i, j)] += w;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut basis = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            let values = v_t.row(k).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            basis.push(StepFunction::new(sys, level.max(m0.resolution()), values)?);
        }
    }
    Ok(basis)
}

/// `max_n sup |m0 o r^n . xi_n - m0' o r^n . xi_{n+1}|` plus
/// `|| (1/#) sum conj(m0') m0 h0 - h0 ||_inf` with `h0 = xi_0 h`.
pub fn intertwine_residual(m0: &StepFunction, m0p: &StepFunction, f: &MartingaleFn) -> Result<f64> {
    if m0.system() != m0p.system() || m0.system() != f.fam.system() {
        return Err(Error::SystemMismatch);
    }
    let mut a = m0.clone();
    let mut b = m0p.clone();
    let mut worst = 0.0f64;
    for n in 0..f.depth() {
        if n > 0 {
            a = a.compose_r()?;
            b = b.compose_r()?;
        }
        let lhs = a.mul(&f.levels[n])?;
        let rhs = b.mul(&f.levels[n + 1])?;
        worst = worst.max(lhs.sup_distance(&rhs)?);
    }
    let h0 = f.levels[0].mul(&f.fam.h)?;
    let kernel = m0p.conj().mul(m0)?;
    let res = kernel.resolution().max(h0.resolution());
    let g = kernel.mul(&h0)?.refine_to(res)?;
    let sys = m0.system();
    let cells = sys.cells(res)?;
    let mixed = (0..cells.len())
        .map(|x| {
            let pre = cells.preimage_cells(x);
            pre.iter().map(|&y| g.values()[y]).sum::<Complex64>() / pre.len() as f64
        })
        .collect();
    let mixed = StepFunction::new(sys, res, mixed)?;
    Ok(worst + mixed.sup_distance(&h0)?)
}

/// A dyadic rational `num / 2^exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dyadic {
    pub num: i64,
    pub exp: u32,
}

impl Dyadic {
    pub fn new(num: i64, exp: u32) -> Self {
        Self { num, exp }
    }

    pub fn half(self) -> Self {
        Self { num: self.num, exp: self.exp + 1 }
    }

    /// `self * 2^{-j}` reduced mod 1 (exact in binary floating point).
    fn phase(self, j: i32) -> f64 {
        let t = self.num as f64 * 2f64.powi(-(self.exp as i32) - j);
        t - t.floor()
    }
}

/// `max_j || S pi(g_k) delta_j - pi(g_{k/2}) S delta_j ||` on the bilateral
/// lattice `delta_{jmin-1}, ..., delta_{jmax-1}`, where `S delta_j = delta_{j-1}`
/// and `pi(g_k) delta_j = exp(i 2 pi k 2^{-j}) delta_j`.
pub fn shift_dilation_check(k: Dyadic, jmin: i32, jmax: i32) -> Result<f64> {
    if jmin >= jmax {
        return Err(Error::InvalidArgument(format!("empty range [{jmin}, {jmax})")));
    }
    let lo = jmin - 1;
    let len = (jmax - lo) as usize;
    let basis = |j: i32| {
        let mut v = vec![zero(); len];
        v[(j - lo) as usize] = Complex64::new(1.0, 0.0);
        v
    };
    let shift = |v: &[Complex64]| {
        let mut out = vec![zero(); len];
        out[..len - 1].copy_from_slice(&v[1..]);
        out
    };
    let pi = |g: Dyadic, v: &[Complex64]| {
        v.iter()
            .enumerate()
            .map(|(i, &c)| c * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * g.phase(lo + i as i32)))
            .collect::<Vec<_>>()
    };
    let mut worst = 0.0f64;
    for j in jmin..jmax {
        let d = basis(j);
        let lhs = shift(&pi(k, &d));
        let rhs = pi(k.half(), &shift(&d));
        let gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(gap);
    }
    Ok(worst)
}
