//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar the chemistry, fitting, metrics and network code is written against.
///
/// Implemented for `f32` and `f64`. The matrix kernels come from ndarray, so
/// both get the optimized GEMM path.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon, as an `f64`, used to size relative tolerances.
    const EPSILON_F64: f64;

    /// Lossy conversion from a literal. Panics only for values the type
    /// cannot represent at all, which never happens for f32/f64.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal fits scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Round-trip text form with 17 significant digits.
    fn to_text(self) -> String {
        format!("{:.16e}", self)
    }

    fn parse_text(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Scalar for f32 {
    const EPSILON_F64: f64 = f32::EPSILON as f64;
}

impl Scalar for f64 {
    const EPSILON_F64: f64 = f64::EPSILON;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        for x in [0.1f64, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(f64::parse_text(&x.to_text()), Some(x));
        }
        for x in [0.1f32, -1.0 / 3.0, 1.1754944e-38] {
            assert_eq!(f32::parse_text(&x.to_text()), Some(x));
        }
    }

    #[test]
    fn text_has_seventeen_significant_digits() {
        let s = 0.25f64.to_text();
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }
}
