//! Extended nonnegative reals `[0, ∞]`.
//!
//! Cavity messages and external fields may be infinite. The type carries no
//! arithmetic that could mix `0` and `∞`; every such limit is resolved by the
//! degree comparison in [`crate::measure`].

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("{0} is not an extended nonnegative real")]
pub struct InvalidExtReal(pub f64);

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);
    pub const ONE: ExtReal = ExtReal::Finite(1.0);
    pub const INFINITY: ExtReal = ExtReal::Infinite;

    /// Maps `f64::INFINITY` to [`ExtReal::Infinite`]; rejects NaN and negatives.
    pub fn new(value: f64) -> Result<Self, InvalidExtReal> {
        if value.is_nan() || value < 0.0 {
            Err(InvalidExtReal(value))
        } else if value.is_infinite() {
            Ok(ExtReal::Infinite)
        } else {
            // normalizes -0.0
            Ok(ExtReal::Finite(value + 0.0))
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, ExtReal::Finite(v) if v == 0.0)
    }

    /// `f64` view, with `∞` mapped to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    /// Multiplies by a strictly positive finite scalar.
    pub fn scale(self, factor: f64) -> ExtReal {
        debug_assert!(factor > 0.0 && factor.is_finite());
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * factor),
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }

    /// Distance used for convergence tests: `0` when both are infinite, `∞`
    /// when exactly one is, otherwise `|a - b|` measured absolutely below 1
    /// and relatively above.
    pub fn gap(self, other: ExtReal) -> f64 {
        match (self, other) {
            (ExtReal::Infinite, ExtReal::Infinite) => 0.0,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() / a.max(b).max(1.0),
            _ => f64::INFINITY,
        }
    }

    pub fn midpoint(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(0.5 * (a + b)),
            _ => ExtReal::Infinite,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Infinite, ExtReal::Infinite) => Ordering::Equal,
            (ExtReal::Infinite, _) => Ordering::Greater,
            (_, ExtReal::Infinite) => Ordering::Less,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl From<ExtReal> for f64 {
    fn from(value: ExtReal) -> f64 {
        value.to_f64()
    }
}

impl TryFrom<f64> for ExtReal {
    type Error = InvalidExtReal;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        ExtReal::new(value)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => fmt::Display::fmt(v, f),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

// Serialized as a JSON number, or the string "inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => serializer.serialize_f64(*v),
            ExtReal::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => ExtReal::new(v).map_err(serde::de::Error::custom),
            Repr::Text(s) if s == "inf" || s == "infinity" => Ok(ExtReal::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}
