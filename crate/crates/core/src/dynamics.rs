//! Finite-to-one systems: the circle map `x -> N x mod 1`, one-sided subshifts of
//! finite type and affine Cantor-type iterated function systems.
//!
//! All three are handled as one-sided shifts over a finite alphabet of *letters*:
//! base-`N` digits for the circle, digit positions for an IFS and states for a
//! subshift. A resolution-`d` cell is an admissible word of length `d`; cells are
//! always enumerated in ascending lexicographic order, which for the circle
//! coincides with the index `j` of the interval `[j/N^d, (j+1)/N^d)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of a system, as read from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SystemSpec {
    #[serde(rename = "circle")]
    CircleMapN {
        #[serde(rename = "N")]
        n: u32,
    },
    #[serde(rename = "sft")]
    SubshiftSft {
        #[serde(rename = "A")]
        matrix: Vec<Vec<u8>>,
    },
    #[serde(rename = "ifs")]
    AffineIfs { scale: u32, digits: Vec<u32> },
}

/// A point of the system at finite resolution.
///
/// Circle points are the rationals `index / N^level`; subshift and IFS points are
/// finite words standing for the cylinder they start. Subshift symbols are the
/// 0-based states of the transition matrix; IFS symbols are the digit values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointCode {
    Rational { index: u64, level: u32 },
    Word(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchIndex(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructureFlags {
    pub onto: bool,
    pub aperiodic: bool,
    pub max_branches: usize,
}

/// Admissible words of one fixed length together with the index tables used by
/// the transfer operator.
#[derive(Debug)]
pub struct CellSpace {
    depth: u32,
    base: u64,
    /// Sorted word codes; `None` for full shifts where code == index.
    codes: Option<Vec<u64>>,
    len: usize,
    pre_offsets: Vec<usize>,
    pre_cells: Vec<usize>,
}

impl CellSpace {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn code(&self, i: usize) -> u64 {
        match &self.codes {
            Some(c) => c[i],
            None => i as u64,
        }
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        match &self.codes {
            Some(c) => c.binary_search(&code).ok(),
            None => (code < self.len as u64).then_some(code as usize),
        }
    }

    /// Letters of cell `i`, most significant (first) letter first.
    pub fn letters(&self, i: usize) -> Vec<u32> {
        let mut code = self.code(i);
        let mut out = vec![0u32; self.depth as usize];
        for slot in out.iter_mut().rev() {
            *slot = (code % self.base) as u32;
            code /= self.base;
        }
        out
    }

    pub fn first_letter(&self, i: usize) -> u32 {
        (self.code(i) / self.base.pow(self.depth - 1)) as u32
    }

    /// Cells (same resolution) containing the branch images `tau_k(x)` for `x` in
    /// cell `i`, in ascending branch order.
    pub fn preimage_cells(&self, i: usize) -> &[usize] {
        &self.pre_cells[self.pre_offsets[i]..self.pre_offsets[i + 1]]
    }

    pub fn branch_count(&self, i: usize) -> usize {
        self.pre_offsets[i + 1] - self.pre_offsets[i]
    }
}

struct Inner {
    spec: SystemSpec,
    alphabet: usize,
    adjacency: Vec<Vec<bool>>,
    /// `preds[s]`: letters `y` with `A(y, s) = 1`, ascending.
    preds: Vec<Vec<u32>>,
    /// `succ[s]`: letters `t` with `A(s, t) = 1`, ascending.
    succ: Vec<Vec<u32>>,
    full_shift: bool,
    cache: Mutex<BTreeMap<u32, Arc<CellSpace>>>,
}

/// A validated system. Cheap to clone; cell tables are built lazily and shared.
#[derive(Clone)]
pub struct System(Arc<Inner>);

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("System").field(&self.0.spec).finish()
    }
}

impl PartialEq for System {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

impl System {
    pub fn new(spec: SystemSpec) -> Result<Self> {
        let (alphabet, adjacency) = match &spec {
            SystemSpec::CircleMapN { n } => {
                if *n < 2 {
                    return Err(Error::InvalidSystem(format!("circle map needs N >= 2, got {n}")));
                }
                let k = *n as usize;
                (k, vec![vec![true; k]; k])
            }
            SystemSpec::SubshiftSft { matrix } => {
                let k = matrix.len();
                if k == 0 {
                    return Err(Error::InvalidSystem("empty transition matrix".into()));
                }
                let mut adj = vec![vec![false; k]; k];
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != k {
                        return Err(Error::InvalidSystem(format!(
                            "transition matrix row {i} has length {}, expected {k}",
                            row.len()
                        )));
                    }
                    for (j, &a) in row.iter().enumerate() {
                        match a {
                            0 => {}
                            1 => adj[i][j] = true,
                            other => {
                                return Err(Error::InvalidSystem(format!(
                                    "transition matrix entry ({i},{j}) = {other} is not 0/1"
                                )))
                            }
                        }
                    }
                }
                if let Some(j) = (0..k).find(|&j| !(0..k).any(|i| adj[i][j])) {
                    return Err(Error::InvalidSystem(format!("column {j} has no entry 1: the shift is not onto")));
                }
                if let Some(i) = (0..k).find(|&i| !adj[i].iter().any(|&a| a)) {
                    return Err(Error::InvalidSystem(format!(
                        "row {i} has no entry 1: state {i} admits no infinite continuation"
                    )));
                }
                (k, adj)
            }
            SystemSpec::AffineIfs { scale, digits } => {
                if *scale < 2 {
                    return Err(Error::InvalidSystem(format!("IFS scale must be >= 2, got {scale}")));
                }
                if digits.is_empty() {
                    return Err(Error::InvalidSystem("IFS needs at least one digit".into()));
                }
                let mut sorted = digits.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != digits.len() {
                    return Err(Error::InvalidSystem("IFS digits must be distinct".into()));
                }
                if let Some(d) = digits.iter().find(|&&d| d >= *scale) {
                    return Err(Error::InvalidSystem(format!("digit {d} not in [0, {scale})")));
                }
                let k = digits.len();
                (k, vec![vec![true; k]; k])
            }
        };
        // IFS digits are kept in ascending order so that letter order matches digit order.
        let spec = match spec {
            SystemSpec::AffineIfs { scale, mut digits } => {
                digits.sort_unstable();
                SystemSpec::AffineIfs { scale, digits }
            }
            other => other,
        };
        let preds =
            (0..alphabet).map(|s| (0..alphabet).filter(|&y| adjacency[y][s]).map(|y| y as u32).collect()).collect();
        let succ =
            (0..alphabet).map(|s| (0..alphabet).filter(|&t| adjacency[s][t]).map(|t| t as u32).collect()).collect();
        let full_shift = adjacency.iter().all(|row| row.iter().all(|&a| a));
        Ok(System(Arc::new(Inner {
            spec,
            alphabet,
            adjacency,
            preds,
            succ,
            full_shift,
            cache: Mutex::new(BTreeMap::new()),
        })))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text).map_err(|e| Error::InvalidSystem(e.to_string()))?;
        Self::new(spec)
    }

    pub fn circle(n: u32) -> Result<Self> {
        Self::new(SystemSpec::CircleMapN { n })
    }

    pub fn sft(matrix: Vec<Vec<u8>>) -> Result<Self> {
        Self::new(SystemSpec::SubshiftSft { matrix })
    }

    pub fn ifs(scale: u32, digits: Vec<u32>) -> Result<Self> {
        Self::new(SystemSpec::AffineIfs { scale, digits })
    }

    /// The middle-third Cantor system, digits {0, 2} in base 3.
    pub fn cantor() -> Self {
        Self::ifs(3, vec![0, 2]).expect("valid Cantor IFS")
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.0.spec
    }

    pub fn alphabet_size(&self) -> usize {
        self.0.alphabet
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.0.spec, SystemSpec::CircleMapN { .. })
    }

    pub fn admissible(&self, a: u32, b: u32) -> bool {
        self.0.adjacency[a as usize][b as usize]
    }

    /// Letters that may precede `s`, ascending. The length is the branch count at
    /// any point starting with `s`.
    pub fn predecessors(&self, s: u32) -> &[u32] {
        &self.0.preds[s as usize]
    }

    /// Number of inverse branches at a point whose first letter is `s`.
    pub fn fiber_size(&self, s: u32) -> usize {
        self.0.preds[s as usize].len()
    }

    fn smallest_successor(&self, s: u32) -> u32 {
        self.0.succ[s as usize][0]
    }

    /// The cell table at resolution `depth` (>= 1).
    pub fn cells(&self, depth: u32) -> Result<Arc<CellSpace>> {
        if depth == 0 {
            return Err(Error::InvalidResolution(0));
        }
        let base = self.0.alphabet as u64;
        if (base as f64).powi(depth as i32) >= u64::MAX as f64 / 2.0 {
            return Err(Error::InvalidResolution(depth));
        }
        if let Some(c) = self.0.cache.lock().expect("cell cache poisoned").get(&depth) {
            return Ok(Arc::clone(c));
        }
        let space = Arc::new(self.build_cells(depth));
        self.0.cache.lock().expect("cell cache poisoned").entry(depth).or_insert_with(|| Arc::clone(&space));
        Ok(space)
    }

    fn build_cells(&self, depth: u32) -> CellSpace {
        let base = self.0.alphabet as u64;
        let top = base.pow(depth - 1);
        let codes = if self.0.full_shift {
            None
        } else {
            let mut words: Vec<u64> = (0..base).collect();
            for _ in 1..depth {
                let mut next = Vec::with_capacity(words.len() * 2);
                for &w in &words {
                    let last = (w % base) as usize;
                    for &t in &self.0.succ[last] {
                        next.push(w * base + t as u64);
                    }
                }
                words = next;
            }
            Some(words)
        };
        let len = codes.as_ref().map_or(base.pow(depth) as usize, Vec::len);
        let mut space =
            CellSpace { depth, base, codes, len, pre_offsets: Vec::with_capacity(len + 1), pre_cells: Vec::new() };
        space.pre_offsets.push(0);
        for i in 0..len {
            let code = space.code(i);
            let first = code / top;
            // Prepend y and keep the first `depth` letters of the longer word.
            let tail = code / base;
            for &y in &self.0.preds[first as usize] {
                let pre = y as u64 * top + tail;
                let j = space.index_of(pre).expect("prefixed admissible word is a cell");
                space.pre_cells.push(j);
            }
            space.pre_offsets.push(space.pre_cells.len());
        }
        space
    }

    /// Index at resolution `depth - 1` of the cell containing `r(cell)`.
    pub fn shifted_cell(&self, depth: u32, i: usize) -> Result<usize> {
        let here = self.cells(depth)?;
        let below = self.cells(depth - 1)?;
        let code = here.code(i) % here.base.pow(depth - 1);
        Ok(below.index_of(code).expect("shifted admissible word is a cell"))
    }

    /// Index at resolution `depth - 1` of the cell containing cell `i`.
    pub fn parent_cell(&self, depth: u32, i: usize) -> Result<usize> {
        let here = self.cells(depth)?;
        let below = self.cells(depth - 1)?;
        Ok(below.index_of(here.code(i) / here.base).expect("truncated admissible word is a cell"))
    }

    /// Letters of a point, validated.
    pub fn point_letters(&self, p: &PointCode) -> Result<Vec<u32>> {
        match (&self.0.spec, p) {
            (SystemSpec::CircleMapN { n }, PointCode::Rational { index, level }) => {
                let n = *n as u64;
                let bound = n
                    .checked_pow(*level)
                    .ok_or_else(|| Error::InvalidPoint(format!("level {level} too deep for u64 indices")))?;
                if *index >= bound {
                    return Err(Error::InvalidPoint(format!("index {index} >= {n}^{level}")));
                }
                let mut out = vec![0u32; *level as usize];
                let mut j = *index;
                for slot in out.iter_mut().rev() {
                    *slot = (j % n) as u32;
                    j /= n;
                }
                Ok(out)
            }
            (SystemSpec::CircleMapN { n }, PointCode::Word(w)) => {
                if let Some(d) = w.iter().find(|&&d| d >= *n) {
                    return Err(Error::InvalidPoint(format!("digit {d} >= {n}")));
                }
                Ok(w.clone())
            }
            (SystemSpec::AffineIfs { digits, .. }, PointCode::Word(w)) => w
                .iter()
                .map(|d| {
                    digits
                        .iter()
                        .position(|x| x == d)
                        .map(|i| i as u32)
                        .ok_or_else(|| Error::InvalidPoint(format!("{d} is not an IFS digit")))
                })
                .collect(),
            (SystemSpec::SubshiftSft { .. }, PointCode::Word(w)) => {
                if let Some(s) = w.iter().find(|&&s| s as usize >= self.0.alphabet) {
                    return Err(Error::InvalidPoint(format!("state {s} out of range")));
                }
                if let Some(i) = (1..w.len()).find(|&i| !self.admissible(w[i - 1], w[i])) {
                    return Err(Error::InvalidPoint(format!(
                        "transition {} -> {} at position {i} is not admissible",
                        w[i - 1],
                        w[i]
                    )));
                }
                Ok(w.clone())
            }
            (_, PointCode::Rational { .. }) => {
                Err(Error::InvalidPoint("rational codes are only valid for circle maps".into()))
            }
        }
    }

    /// Inverse of [`System::point_letters`]. Circle points come back as rationals.
    pub fn point_from_letters(&self, letters: &[u32]) -> PointCode {
        match &self.0.spec {
            SystemSpec::CircleMapN { n } => {
                let index = letters.iter().fold(0u64, |acc, &d| acc * *n as u64 + d as u64);
                PointCode::Rational { index, level: letters.len() as u32 }
            }
            SystemSpec::AffineIfs { digits, .. } => {
                PointCode::Word(letters.iter().map(|&l| digits[l as usize]).collect())
            }
            SystemSpec::SubshiftSft { .. } => PointCode::Word(letters.to_vec()),
        }
    }

    /// Extends a letter word to at least `len` letters with the smallest admissible
    /// continuation (zeros for the circle, i.e. the exact rational point).
    pub fn pad_letters(&self, letters: &mut Vec<u32>, len: usize) {
        while letters.len() < len {
            let next = match letters.last() {
                Some(&s) => self.smallest_successor(s),
                None => 0,
            };
            letters.push(next);
        }
    }

    /// Cell at resolution `depth` containing the point with these letters.
    pub fn cell_of_letters(&self, depth: u32, letters: &[u32]) -> Result<usize> {
        let space = self.cells(depth)?;
        let mut padded: Vec<u32> = letters.iter().take(depth as usize).copied().collect();
        self.pad_letters(&mut padded, depth as usize);
        let code = padded.iter().fold(0u64, |acc, &l| acc * space.base + l as u64);
        space.index_of(code).ok_or_else(|| Error::InvalidPoint(format!("word {padded:?} is not admissible")))
    }

    pub fn cell_of_point(&self, depth: u32, p: &PointCode) -> Result<usize> {
        self.cell_of_letters(depth, &self.point_letters(p)?)
    }

    /// Representative letters of cell `i` at resolution `depth`, padded by one
    /// extra letter so that the fiber size of `r` of the point is defined.
    pub fn representative_letters(&self, depth: u32, i: usize) -> Result<Vec<u32>> {
        let mut letters = self.cells(depth)?.letters(i);
        self.pad_letters(&mut letters, depth as usize + 1);
        Ok(letters)
    }

    /// Real coordinate of a point: `sum letter_value * base^-(i+1)`. For subshifts the
    /// states are read as base-`K` digits.
    pub fn coordinate(&self, letters: &[u32]) -> f64 {
        let (base, value): (f64, Box<dyn Fn(u32) -> f64>) = match &self.0.spec {
            SystemSpec::CircleMapN { n } => (*n as f64, Box::new(|l| l as f64)),
            SystemSpec::AffineIfs { scale, digits } => {
                let digits = digits.clone();
                (*scale as f64, Box::new(move |l| digits[l as usize] as f64))
            }
            SystemSpec::SubshiftSft { .. } => (self.0.alphabet as f64, Box::new(|l| l as f64)),
        };
        letters.iter().rev().fold(0.0, |acc, &l| (acc + value(l)) / base)
    }

    /// Number of inverse branches at `p`.
    pub fn branch_count(&self, p: &PointCode) -> Result<usize> {
        let letters = self.point_letters(p)?;
        match &self.0.spec {
            SystemSpec::SubshiftSft { .. } => match letters.first() {
                Some(&s) => Ok(self.fiber_size(s)),
                None => Err(Error::EmptyWord),
            },
            _ => Ok(self.0.alphabet),
        }
    }

    pub fn structure_flags(&self) -> StructureFlags {
        let k = self.0.alphabet;
        let adj = &self.0.adjacency;
        let onto = (0..k).all(|j| (0..k).any(|i| adj[i][j]));
        let mut power = adj.clone();
        let mut aperiodic = power.iter().all(|r| r.iter().all(|&a| a));
        for _ in 1..k * k {
            if aperiodic {
                break;
            }
            power = (0..k).map(|i| (0..k).map(|j| (0..k).any(|m| power[i][m] && adj[m][j])).collect()).collect();
            aperiodic = power.iter().all(|r| r.iter().all(|&a| a));
        }
        let max_branches = (0..k as u32).map(|s| self.fiber_size(s)).max().unwrap_or(0);
        StructureFlags { onto, aperiodic, max_branches }
    }

    /// `r(p)`. Circle points keep their level; words lose their first symbol.
    pub fn forward(&self, p: &PointCode) -> Result<PointCode> {
        let letters = self.point_letters(p)?;
        match (&self.0.spec, p) {
            (SystemSpec::CircleMapN { n }, PointCode::Rational { index, level }) => {
                let modulus = (*n as u64).pow(*level);
                let index = if modulus == 1 { 0 } else { (*index * *n as u64) % modulus };
                Ok(PointCode::Rational { index, level: *level })
            }
            _ => {
                if letters.is_empty() {
                    return Err(Error::EmptyWord);
                }
                Ok(self.point_from_letters_like(p, &letters[1..]))
            }
        }
    }

    /// All `y` with `r(y) = p`, in ascending branch order, one level deeper.
    pub fn preimages(&self, p: &PointCode) -> Result<Vec<PointCode>> {
        let count = self.branch_count(p)?;
        (0..count).map(|k| self.branch(BranchIndex(k), p)).collect()
    }

    /// `tau_k(p)`.
    pub fn branch(&self, k: BranchIndex, p: &PointCode) -> Result<PointCode> {
        let letters = self.point_letters(p)?;
        let count = self.branch_count(p)?;
        if k.0 >= count {
            return Err(Error::BranchOutOfRange { k: k.0, count });
        }
        let prefix = match letters.first() {
            Some(&s) if !self.0.full_shift => self.predecessors(s)[k.0],
            _ => k.0 as u32,
        };
        let mut out = Vec::with_capacity(letters.len() + 1);
        out.push(prefix);
        out.extend_from_slice(&letters);
        Ok(self.point_from_letters_like(p, &out))
    }

    /// Branch index `k` with `p = tau_k(r(p))`, read off the first letter.
    pub fn branch_of_letters(&self, letters: &[u32]) -> usize {
        match letters {
            [] => 0,
            [a] if !self.0.full_shift => {
                // Fiber of a single-letter point is determined by the padded successor.
                let b = self.smallest_successor(*a);
                self.predecessors(b).iter().position(|&y| y == *a).unwrap_or(0)
            }
            [a, b, ..] if !self.0.full_shift => self.predecessors(*b).iter().position(|&y| y == *a).unwrap_or(0),
            [a, ..] => *a as usize,
        }
    }

    fn point_from_letters_like(&self, like: &PointCode, letters: &[u32]) -> PointCode {
        match like {
            PointCode::Word(_) if self.is_circle() => PointCode::Word(letters.to_vec()),
            _ => self.point_from_letters(letters),
        }
    }

    /// Exact equality of two points as elements of the space (circle rationals are
    /// compared after reduction to a common level).
    pub fn same_point(&self, a: &PointCode, b: &PointCode) -> Result<bool> {
        let mut la = self.point_letters(a)?;
        let mut lb = self.point_letters(b)?;
        if self.is_circle() {
            while la.last() == Some(&0) {
                la.pop();
            }
            while lb.last() == Some(&0) {
                lb.pop();
            }
        }
        Ok(la == lb)
    }
}
