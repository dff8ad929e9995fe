//! Five-class FPGA resource vectors.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Resource classes in a fixed order, used when iterating over a [`ResourceVec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Lut,
    Ff,
    Bram,
    Dsp,
    Uram,
}

impl Resource {
    pub const ALL: [Resource; 5] = [
        Resource::Lut,
        Resource::Ff,
        Resource::Bram,
        Resource::Dsp,
        Resource::Uram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Resource::Lut => "lut",
            Resource::Ff => "ff",
            Resource::Bram => "bram",
            Resource::Dsp => "dsp",
            Resource::Uram => "uram",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Absolute resource counts. BRAM is counted in 36Kb blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceVec {
    pub lut: u64,
    pub ff: u64,
    pub bram: u64,
    pub dsp: u64,
    pub uram: u64,
}

impl ResourceVec {
    pub const ZERO: ResourceVec = ResourceVec {
        lut: 0,
        ff: 0,
        bram: 0,
        dsp: 0,
        uram: 0,
    };

    pub const fn new(lut: u64, ff: u64, bram: u64, dsp: u64, uram: u64) -> Self {
        ResourceVec {
            lut,
            ff,
            bram,
            dsp,
            uram,
        }
    }

    pub fn get(&self, r: Resource) -> u64 {
        match r {
            Resource::Lut => self.lut,
            Resource::Ff => self.ff,
            Resource::Bram => self.bram,
            Resource::Dsp => self.dsp,
            Resource::Uram => self.uram,
        }
    }

    pub fn get_mut(&mut self, r: Resource) -> &mut u64 {
        match r {
            Resource::Lut => &mut self.lut,
            Resource::Ff => &mut self.ff,
            Resource::Bram => &mut self.bram,
            Resource::Dsp => &mut self.dsp,
            Resource::Uram => &mut self.uram,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Resource) -> u64) -> Self {
        let mut v = ResourceVec::ZERO;
        for r in Resource::ALL {
            *v.get_mut(r) = f(r);
        }
        v
    }

    pub fn map(&self, mut f: impl FnMut(Resource, u64) -> u64) -> Self {
        ResourceVec::from_fn(|r| f(r, self.get(r)))
    }

    pub fn as_array(&self) -> [u64; 5] {
        [self.lut, self.ff, self.bram, self.dsp, self.uram]
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVec) -> bool {
        Resource::ALL.iter().all(|&r| self.get(r) <= other.get(r))
    }

    /// First resource class on which `self` exceeds `limit`.
    pub fn first_excess(&self, limit: &ResourceVec) -> Option<Resource> {
        Resource::ALL
            .iter()
            .copied()
            .find(|&r| self.get(r) > limit.get(r))
    }

    pub fn saturating_sub(&self, other: &ResourceVec) -> ResourceVec {
        ResourceVec::from_fn(|r| self.get(r).saturating_sub(other.get(r)))
    }

    pub fn scale(&self, k: u64) -> ResourceVec {
        self.map(|_, v| v * k)
    }

    /// Component-wise floor division.
    pub fn div_floor(&self, k: u64) -> ResourceVec {
        self.map(|_, v| v / k)
    }

    /// Utilization of `self` against `capacity`, in percent, per class.
    pub fn percent_of(&self, capacity: &ResourceVec) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (i, r) in Resource::ALL.iter().enumerate() {
            let cap = capacity.get(*r);
            out[i] = if cap == 0 {
                0.0
            } else {
                100.0 * self.get(*r) as f64 / cap as f64
            };
        }
        out
    }
}

impl Add for ResourceVec {
    type Output = ResourceVec;
    fn add(self, rhs: ResourceVec) -> ResourceVec {
        ResourceVec::from_fn(|r| self.get(r) + rhs.get(r))
    }
}

impl AddAssign for ResourceVec {
    fn add_assign(&mut self, rhs: ResourceVec) {
        *self = *self + rhs;
    }
}

impl Sub for ResourceVec {
    type Output = ResourceVec;
    fn sub(self, rhs: ResourceVec) -> ResourceVec {
        ResourceVec::from_fn(|r| self.get(r) - rhs.get(r))
    }
}

impl std::iter::Sum for ResourceVec {
    fn sum<I: Iterator<Item = ResourceVec>>(iter: I) -> ResourceVec {
        iter.fold(ResourceVec::ZERO, |a, b| a + b)
    }
}

/// Per-class utilization thresholds, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub lut: f64,
    pub ff: f64,
    pub bram: f64,
    pub dsp: f64,
    pub uram: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.70;

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::uniform(DEFAULT_THRESHOLD)
    }
}

impl Thresholds {
    pub fn uniform(t: f64) -> Self {
        Thresholds {
            lut: t,
            ff: t,
            bram: t,
            dsp: t,
            uram: t,
        }
    }

    pub fn get(&self, r: Resource) -> f64 {
        match r {
            Resource::Lut => self.lut,
            Resource::Ff => self.ff,
            Resource::Bram => self.bram,
            Resource::Dsp => self.dsp,
            Resource::Uram => self.uram,
        }
    }

    pub fn is_valid(&self) -> bool {
        Resource::ALL
            .iter()
            .all(|&r| self.get(r) > 0.0 && self.get(r) <= 1.0)
    }

    /// Largest integer usage allowed by the threshold: `floor(T * capacity)`.
    pub fn limit(&self, capacity: &ResourceVec) -> ResourceVec {
        ResourceVec::from_fn(|r| threshold_limit(self.get(r), capacity.get(r)))
    }
}

/// `floor(t * cap)`, tolerant of binary rounding (0.7 * 1000 is 700, not 699).
pub fn threshold_limit(t: f64, cap: u64) -> u64 {
    (t * cap as f64 + 1e-6).floor() as u64
}
