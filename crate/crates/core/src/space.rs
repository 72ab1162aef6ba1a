//! Finite spaces, nonnegative extended costs and probability vectors.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Add;

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted when building a [`Distribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A finite set `{0, .., size-1}`, optionally labelled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteSpace {
    size: usize,
    labels: Option<Vec<String>>,
}

impl FiniteSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InstanceMismatch("finite spaces need at least one element".into()));
        }
        Ok(FiniteSpace { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InstanceMismatch("finite spaces need at least one element".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InstanceMismatch(alloc::format!("duplicate label {a:?}")));
            }
        }
        Ok(FiniteSpace {
            size: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// A value in `[0, +inf]`.
///
/// NaN and negative numbers are rejected at construction, so `Cost` is
/// totally ordered.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Cost(f64);

impl Cost {
    pub const ZERO: Cost = Cost(0.0);
    pub const INFINITY: Cost = Cost(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidCost(value));
        }
        // normalize -0.0
        Ok(Cost(value + 0.0))
    }

    /// Panics on NaN or negative input; for literals in tests and builders.
    pub fn of(value: f64) -> Self {
        Cost::new(value).expect("cost must be nonnegative and not NaN")
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// `|a - b|`, with `inf - inf = 0`.
    pub fn distance(self, other: Cost) -> f64 {
        if self.0 == other.0 {
            0.0
        } else {
            (self.0 - other.0).abs()
        }
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.partial_cmp(&other.0).unwrap_or(Ordering::Equal)
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl fmt::Debug for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl TryFrom<f64> for Cost {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Cost::new(value)
    }
}

/// A probability vector over a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates without renormalizing: every entry `>= 0` and `|sum - 1| <= 1e-12`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InstanceMismatch("empty distribution".into()));
        }
        let sum: f64 = probs.iter().sum();
        let bad_entry = probs.iter().any(|p| *p < 0.0 || !p.is_finite());
        if bad_entry || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Normalization {
                sum,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        Ok(Distribution { probs })
    }

    pub fn dirac(size: usize, at: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::InstanceMismatch(alloc::format!(
                "dirac point {at} outside a space of size {size}"
            )));
        }
        let mut probs = alloc::vec![0.0; size];
        probs[at] = 1.0;
        Ok(Distribution { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InstanceMismatch("empty distribution".into()));
        }
        Ok(Distribution {
            probs: alloc::vec![1.0 / size as f64; size],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Total-variation distance `1/2 sum |p_i - q_i|`; `inf` on length mismatch.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// `sum_i p_i * v_i` in index order, with `0 * inf = 0`.
pub fn expectation(d: &Distribution, values: &[Cost]) -> Result<Cost> {
    if values.len() != d.len() {
        return Err(Error::InstanceMismatch(alloc::format!(
            "expectation over {} values with a distribution of size {}",
            values.len(),
            d.len()
        )));
    }
    Ok(expect_with(d, |i| values[i]))
}

/// Same as [`expectation`] with values produced on demand.
pub(crate) fn expect_with(d: &Distribution, mut value: impl FnMut(usize) -> Cost) -> Cost {
    let mut acc = 0.0;
    for (i, &p) in d.probs.iter().enumerate() {
        if p > 0.0 {
            acc += p * value(i).0;
        }
    }
    Cost(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn expectation_examples() {
        let half = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(expectation(&half, &[Cost::of(2.0), Cost::of(4.0)]).unwrap(), Cost::of(3.0));
        let sure = Distribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(expectation(&sure, &[Cost::of(5.0), Cost::INFINITY]).unwrap(), Cost::of(5.0));
        assert!(expectation(&half, &[Cost::of(5.0), Cost::INFINITY]).unwrap().is_infinite());
    }

    #[test]
    fn expectation_length_mismatch() {
        let half = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            expectation(&half, &[Cost::ZERO]),
            Err(Error::InstanceMismatch(_))
        ));
    }

    #[test]
    fn distribution_rejects_bad_mass() {
        assert!(matches!(
            Distribution::new(vec![0.5, 0.4]),
            Err(Error::Normalization { tolerance, .. }) if tolerance == 1e-12
        ));
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![0.5, 0.5 + 1e-13]).is_ok());
        assert!(Distribution::new(vec![0.5, 0.5 + 1e-11]).is_err());
    }

    #[test]
    fn cost_rejects_nan_and_negative() {
        assert!(Cost::new(f64::NAN).is_err());
        assert!(Cost::new(-1.0).is_err());
        assert!(Cost::new(f64::INFINITY).is_ok());
        assert_eq!(Cost::of(-0.0).get().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn labels_must_be_distinct() {
        use alloc::string::ToString;
        assert!(FiniteSpace::with_labels(vec!["a".to_string(), "a".to_string()]).is_err());
        assert_eq!(
            FiniteSpace::with_labels(vec!["a".to_string(), "b".to_string()]).unwrap().size(),
            2
        );
        assert!(FiniteSpace::new(0).is_err());
    }
}
