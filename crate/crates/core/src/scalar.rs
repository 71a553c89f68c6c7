//! Coefficient scalars for polynomial arithmetic.
//!
//! The engine is generic over the coefficient type: the exact pipelines run
//! over arbitrary-precision rationals, the evaluation paths over `f64`.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational coefficient.
pub type Rat = BigRational;

/// Ring/field interface required of polynomial coefficients.
///
/// Implemented by `Rat` (exact) and `f64` (numeric) through the blanket impl.
pub trait Scalar:
    Num + Signed + Clone + PartialEq + Debug + Display + FromPrimitive + ToPrimitive + 'static
{
    /// Exact ratio of two machine integers.
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_i64(num).unwrap() / Self::from_i64(den).unwrap()
    }

    fn to_float(&self) -> f64 {
        self.to_f64().expect("coefficient not representable as f64")
    }
}

impl<T> Scalar for T where
    T: Num + Signed + Clone + PartialEq + Debug + Display + FromPrimitive + ToPrimitive + 'static
{
}

/// Exact rational from a numerator/denominator pair.
pub fn rat(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational from an integer.
pub fn rat_int(num: i64) -> Rat {
    Rat::from(BigInt::from(num))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact() {
        let x: Rat = Scalar::from_ratio(3, 2);
        assert_eq!(x, rat(3, 2));
        assert_eq!(x.to_float(), 1.5);
    }

    #[test]
    fn float_scalar_ratio() {
        let x: f64 = Scalar::from_ratio(1, 4);
        assert_eq!(x, 0.25);
    }
}
