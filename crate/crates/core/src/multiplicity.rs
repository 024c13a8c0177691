//! Multiplicity functions and how they transform under one refinement step.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::dynamics::System;
use crate::error::{Error, Result};

/// An element of `{0, 1, ..., inf}`; arithmetic saturates at `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mult {
    Finite(u64),
    Infinite,
}

impl Mult {
    pub fn checked_sub(self, other: Mult) -> Option<Mult> {
        match (self, other) {
            (Mult::Infinite, Mult::Finite(_)) => Some(Mult::Infinite),
            (Mult::Infinite, Mult::Infinite) => None,
            (Mult::Finite(_), Mult::Infinite) => None,
            (Mult::Finite(a), Mult::Finite(b)) => a.checked_sub(b).map(Mult::Finite),
        }
    }
}

impl Add for Mult {
    type Output = Mult;

    fn add(self, other: Mult) -> Mult {
        match (self, other) {
            (Mult::Finite(a), Mult::Finite(b)) => a.checked_add(b).map_or(Mult::Infinite, Mult::Finite),
            _ => Mult::Infinite,
        }
    }
}

impl fmt::Display for Mult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mult::Finite(v) => write!(f, "{v}"),
            Mult::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Mult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Mult::Finite(v) => s.serialize_u64(*v),
            Mult::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Mult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Mult::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Mult::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected an integer or \"inf\", got {t:?}"))),
        }
    }
}

/// A multiplicity value per cell at a fixed resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MultFn {
    sys: System,
    resolution: u32,
    values: Vec<Mult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultFnJson {
    pub resolution: u32,
    pub values: Vec<Mult>,
}

impl MultFn {
    pub fn new(sys: &System, resolution: u32, values: Vec<Mult>) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        if values.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: values.len() });
        }
        Ok(Self { sys: sys.clone(), resolution, values })
    }

    pub fn constant(sys: &System, resolution: u32, m: Mult) -> Result<Self> {
        let len = sys.cells(resolution)?.len();
        Self::new(sys, resolution, vec![m; len])
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[Mult] {
        &self.values
    }

    pub fn to_json(&self) -> MultFnJson {
        MultFnJson { resolution: self.resolution, values: self.values.clone() }
    }

    pub fn from_json(sys: &System, json: &MultFnJson) -> Result<Self> {
        Self::new(sys, json.resolution, json.values.clone())
    }

    fn zip(&self, other: &Self, f: impl Fn(Mult, Mult) -> Mult) -> Result<Self> {
        if self.sys != other.sys {
            return Err(Error::SystemMismatch);
        }
        if self.resolution != other.resolution {
            return Err(Error::ResolutionMismatch { left: self.resolution, right: other.resolution });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(&self.sys, self.resolution, values)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }
}

/// `m^r(x) = sum_{r(y) = x} m(y)`, at the same resolution.
pub fn induced_multiplicity(m: &MultFn) -> Result<MultFn> {
    let cells = m.sys.cells(m.resolution)?;
    let values = (0..cells.len())
        .map(|x| cells.preimage_cells(x).iter().fold(Mult::Finite(0), |acc, &y| acc + m.values[y]))
        .collect();
    MultFn::new(&m.sys, m.resolution, values)
}

/// `m_W = m^r - m`, failing on the first cell where `m^r < m`.
pub fn detail_multiplicity(m: &MultFn) -> Result<MultFn> {
    let induced = induced_multiplicity(m)?;
    let values = induced
        .values
        .iter()
        .zip(&m.values)
        .enumerate()
        .map(|(i, (&a, &b))| a.checked_sub(b).ok_or(Error::NegativeDetail(i)))
        .collect::<Result<_>>()?;
    MultFn::new(&m.sys, m.resolution, values)
}
