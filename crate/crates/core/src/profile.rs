//! Players, box domains and strategy profiles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-based player index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlayerId(pub usize);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for PlayerId {
    fn from(i: usize) -> Self {
        PlayerId(i)
    }
}

impl std::fmt::Display for PlayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Whether a player minimizes or maximizes its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[serde(alias = "min")]
    Minimize,
    #[serde(alias = "max")]
    Maximize,
}

impl Sense {
    /// Factor turning a natural-sense value into minimization form.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        }
    }
}

/// Axis-aligned box, bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dims("box bounds", lower.len(), upper.len()));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidParameter(format!(
                    "box coordinate {k}: lower {l} exceeds upper {u}"
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        BoxDomain {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        BoxDomain::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Projects `x` onto the box; returns whether any coordinate moved.
    pub fn clamp_in_place(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (k, v) in x.iter_mut().enumerate() {
            let c = v.clamp(self.lower[k], self.upper[k]);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }

    /// Replaces every infinite bound with the corresponding bound of `fallback`.
    pub fn bounded_by(&self, fallback: &BoxDomain) -> BoxDomain {
        let pick = |v: f64, f: f64| if v.is_finite() { v } else { f };
        let lower: Vec<f64> = (0..self.dim())
            .map(|k| pick(self.lower[k], fallback.lower[k]))
            .collect();
        let upper = (0..self.dim())
            .map(|k| pick(self.upper[k], fallback.upper[k]).max(lower[k]))
            .collect();
        BoxDomain { lower, upper }
    }

    /// Uniform draw; every bound must be finite.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                debug_assert!(l.is_finite() && u.is_finite());
                if u > l {
                    l + (u - l) * rng.random::<f64>()
                } else {
                    *l
                }
            })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

/// Strategy profile split into per-player blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    blocks: Vec<Vec<f64>>,
}

impl StrategyProfile {
    pub fn new(blocks: Vec<Vec<f64>>) -> Self {
        StrategyProfile { blocks }
    }

    /// One scalar per player.
    pub fn scalars(values: &[f64]) -> Self {
        StrategyProfile {
            blocks: values.iter().map(|v| vec![*v]).collect(),
        }
    }

    pub fn from_flat(dims: &[usize], flat: &[f64]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if flat.len() != total {
            return Err(Error::dims("flat profile", total, flat.len()));
        }
        let mut blocks = Vec::with_capacity(dims.len());
        let mut at = 0;
        for d in dims {
            blocks.push(flat[at..at + d].to_vec());
            at += d;
        }
        Ok(StrategyProfile { blocks })
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: PlayerId) -> &[f64] {
        &self.blocks[i.0]
    }

    pub fn n_players(&self) -> usize {
        self.blocks.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    /// Euclidean distance between two profiles of the same shape.
    pub fn distance(&self, other: &StrategyProfile) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
