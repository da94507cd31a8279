//! Axis-aligned split rules and the regions they carve out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::Schema;

/// `x[column] <= threshold` goes left, anything else goes right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitRule<T> {
    pub column: usize,
    pub threshold: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn tag(self) -> u8 {
        match self {
            Side::Left => b'L',
            Side::Right => b'R',
        }
    }
}

impl<T: Scalar> SplitRule<T> {
    pub fn new(column: usize, threshold: T) -> Self {
        SplitRule { column, threshold }
    }

    /// Unchecked routing for hot loops; the caller guarantees `column < x.len()`.
    #[inline]
    pub fn goes_left(&self, x: &[T]) -> bool {
        x[self.column] <= self.threshold
    }

    /// Lexicographic `(column, threshold)` order used to break ties.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.column.cmp(&other.column).then(
            self.threshold
                .partial_cmp(&other.threshold)
                .unwrap_or(std::cmp::Ordering::Equal),
        )
    }
}

pub fn route<T: Scalar>(rule: &SplitRule<T>, x: &[T]) -> Result<Side> {
    if rule.column >= x.len() {
        return Err(Error::Schema(format!(
            "rule column {} out of range for a row of {} values",
            rule.column,
            x.len()
        )));
    }
    Ok(if rule.goes_left(x) { Side::Left } else { Side::Right })
}

/// Half-open interval `(lower, upper]`; infinite ends mean unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn unbounded() -> Self {
        Interval {
            lower: T::neg_infinity(),
            upper: T::infinity(),
        }
    }

    #[inline]
    pub fn contains(&self, v: T) -> bool {
        v > self.lower && v <= self.upper
    }
}

/// Conjunction of the rules along a root-to-node path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Region<T> {
    bounds: Vec<Interval<T>>,
    /// Level count for ordinal columns, `None` for continuous ones.
    levels: Vec<Option<usize>>,
}

impl<T: Scalar> Region<T> {
    /// The whole covariate space of `schema`.
    pub fn root(schema: &Schema) -> Self {
        Region {
            bounds: vec![Interval::unbounded(); schema.dim()],
            levels: schema.columns().iter().map(|c| c.levels()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn interval(&self, column: usize) -> &Interval<T> {
        &self.bounds[column]
    }

    pub fn bounds(&self) -> &[Interval<T>] {
        &self.bounds
    }

    #[inline]
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.bounds.len() && self.bounds.iter().zip(x).all(|(b, v)| b.contains(*v))
    }

    /// Admissible ordinal levels of `column` as an inclusive range, or `None`
    /// for continuous columns.
    pub fn admissible_levels(&self, column: usize) -> Option<(usize, usize)> {
        let levels = self.levels[column]?;
        let b = &self.bounds[column];
        // smallest integer strictly above lower, largest integer at or below upper
        let lo = if b.lower.is_finite() {
            (b.lower.floor().to_f64_lossy() + 1.0).max(0.0) as usize
        } else {
            0
        };
        let hi = if b.upper.is_finite() {
            let u = b.upper.floor().to_f64_lossy();
            if u < 0.0 {
                return Some((1, 0));
            }
            (u as usize).min(levels - 1)
        } else {
            levels - 1
        };
        Some((lo, hi))
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|c| {
            let b = &self.bounds[c];
            if !(b.lower < b.upper) {
                return true;
            }
            matches!(self.admissible_levels(c), Some((lo, hi)) if lo > hi)
        })
    }

    /// Subset of the region on `side` of `rule`.
    pub fn refine(&self, rule: &SplitRule<T>, side: Side) -> Result<Region<T>> {
        if rule.column >= self.dim() {
            return Err(Error::Schema(format!(
                "rule column {} out of range for {} columns",
                rule.column,
                self.dim()
            )));
        }
        let b = self.bounds[rule.column];
        if !(rule.threshold > b.lower && rule.threshold < b.upper) {
            return Err(Error::DegenerateSplit(format!(
                "threshold {} on column {} is not strictly inside ({}, {}]",
                rule.threshold, rule.column, b.lower, b.upper
            )));
        }
        let mut out = self.clone();
        match side {
            Side::Left => out.bounds[rule.column].upper = rule.threshold,
            Side::Right => out.bounds[rule.column].lower = rule.threshold,
        }
        if out.is_empty() {
            return Err(Error::DegenerateSplit(format!(
                "{side:?} side of column {} at {} leaves no admissible level",
                rule.column, rule.threshold
            )));
        }
        Ok(out)
    }
}
