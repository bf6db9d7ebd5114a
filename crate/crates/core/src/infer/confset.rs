//! Confidence sets on the real line.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

/// Shape of a [`ConfidenceSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSetShape {
    /// `[lo, hi]`; either endpoint may be infinite.
    Interval,
    /// `(−∞, lo] ∪ [hi, ∞)` with `lo < hi`.
    UnionOfTwoRays,
    /// The whole real line.
    FullLine,
}

/// A subset of the real line produced by test inversion.
///
/// Null-imposed test inversion can accept an interval of nulls, everything
/// outside an interval, or every null; all three occur in practice when the
/// instrument carries little information.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub shape: ConfidenceSetShape,
    pub lo: f64,
    pub hi: f64,
    /// Confidence level in (0,1).
    pub level: f64,
    /// Set length divided by twice the critical value; infinite for unbounded
    /// sets. Comparable to a conventional standard error.
    pub effective_se: f64,
}

impl ConfidenceSet {
    pub fn interval(lo: f64, hi: f64, level: f64, z: f64) -> Self {
        debug_assert!(lo <= hi);
        let effective_se = (hi - lo) / (2.0 * z);
        ConfidenceSet { shape: ConfidenceSetShape::Interval, lo, hi, level, effective_se }
    }

    pub fn centered(center: f64, se: f64, level: f64, z: f64) -> Self {
        ConfidenceSet {
            shape: ConfidenceSetShape::Interval,
            lo: center - z * se,
            hi: center + z * se,
            level,
            effective_se: se,
        }
    }

    pub fn union_of_two_rays(lo: f64, hi: f64, level: f64) -> Self {
        debug_assert!(lo < hi);
        ConfidenceSet {
            shape: ConfidenceSetShape::UnionOfTwoRays,
            lo,
            hi,
            level,
            effective_se: f64::INFINITY,
        }
    }

    pub fn full_line(level: f64) -> Self {
        ConfidenceSet {
            shape: ConfidenceSetShape::FullLine,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            level,
            effective_se: f64::INFINITY,
        }
    }

    /// Membership test (closed sets: boundaries belong to the set).
    pub fn contains(&self, value: f64) -> bool {
        match self.shape {
            ConfidenceSetShape::Interval => value >= self.lo && value <= self.hi,
            ConfidenceSetShape::UnionOfTwoRays => value <= self.lo || value >= self.hi,
            ConfidenceSetShape::FullLine => true,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.shape == ConfidenceSetShape::Interval && self.lo.is_finite() && self.hi.is_finite()
    }
}

/// An endpoint that serializes infinities as the strings `"inf"` / `"-inf"`
/// (plain JSON numbers otherwise).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            serializer.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl Serialize for ConfidenceSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ConfidenceSet", 3)?;
        s.serialize_field("shape", &self.shape)?;
        s.serialize_field("lo", &Endpoint(self.lo))?;
        s.serialize_field("hi", &Endpoint(self.hi))?;
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_by_shape() {
        let z = 1.96;
        let i = ConfidenceSet::interval(-1.0, 2.0, 0.95, z);
        assert!(i.contains(-1.0) && i.contains(0.0) && i.contains(2.0));
        assert!(!i.contains(2.1));
        assert!((i.effective_se - 3.0 / (2.0 * z)).abs() < 1e-15);

        let r = ConfidenceSet::union_of_two_rays(-1.0, 2.0, 0.95);
        assert!(r.contains(-5.0) && r.contains(3.0) && r.contains(-1.0) && r.contains(2.0));
        assert!(!r.contains(0.0));
        assert!(r.effective_se.is_infinite());

        assert!(ConfidenceSet::full_line(0.95).contains(1e308));
    }

    #[test]
    fn infinite_endpoints_serialize_as_strings() {
        let r = ConfidenceSet::full_line(0.95);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"shape":"full_line","lo":"-inf","hi":"inf"}"#);

        let i = ConfidenceSet::interval(1.0, 2.0, 0.95, 1.96);
        let json = serde_json::to_string(&i).unwrap();
        assert_eq!(json, r#"{"shape":"interval","lo":1.0,"hi":2.0}"#);
    }
}
