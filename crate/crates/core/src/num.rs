//! Scalar abstraction used by inference, sampling and evaluation.
//!
//! Frequencies and probabilities are computed in a generic scalar so that the
//! same code path runs in floating point for learned models and in exact
//! rational arithmetic when verifying exact models.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive, Zero};

/// Arbitrary-precision rational used for exact verification.
pub type Rational = BigRational;

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Whether arithmetic in this type is exact (no rounding).
    const EXACT: bool;

    fn from_count(n: u64) -> Self;

    /// Converts an `f64`; exact types take the exact binary value.
    fn from_f64_lossy(x: f64) -> Self;

    /// Converts a decimal literal such as `0.03`; exact types keep the decimal value.
    fn from_decimal(x: f64) -> Self {
        Self::from_f64_lossy(x)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Rounds to the nearest integer when within `tol` of it. No-op for exact types.
    fn snap_integer(self, tol: f64) -> Self;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const EXACT: bool = false;

            fn from_count(n: u64) -> Self {
                n as $t
            }

            fn from_f64_lossy(x: f64) -> Self {
                x as $t
            }

            fn snap_integer(self, tol: f64) -> Self {
                let r = self.round();
                if ((self - r).abs() as f64) < tol {
                    r
                } else {
                    self
                }
            }
        }
    )*};
}

float_scalar!(f32, f64);

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_count(n: u64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn from_f64_lossy(x: f64) -> Self {
        Rational::from_float(x).unwrap_or_else(Rational::zero)
    }

    fn from_decimal(x: f64) -> Self {
        rational_from_decimal(x)
    }

    fn snap_integer(self, _tol: f64) -> Self {
        self
    }
}

/// Sum of a sequence of scalars.
pub fn sum<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>) -> T {
    values
        .into_iter()
        .fold(T::zero(), |acc, v| acc + v.clone())
}

pub fn min<T: Scalar>(a: &T, b: &T) -> T {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}

/// `|a - b|` for any scalar.
pub fn abs_diff<T: Scalar>(a: &T, b: &T) -> T {
    if a >= b {
        a.clone() - b.clone()
    } else {
        b.clone() - a.clone()
    }
}

/// Exact rational from a decimal probability such as `0.03`, via its shortest
/// decimal representation rather than its binary expansion.
pub fn rational_from_decimal(x: f64) -> Rational {
    let s = format!("{x}");
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s.as_str(), ""),
    };
    let digits: BigInt = format!("{int}{frac}").parse().unwrap_or_default();
    let scale = BigInt::from(10u32).pow(frac.len() as u32);
    Rational::new(digits, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn snap_only_close_values() {
        assert_eq!(3.000_000_1f64.snap_integer(1e-6), 3.0);
        assert_eq!(3.01f64.snap_integer(1e-6), 3.01);
    }

    #[test]
    fn decimal_rationals_are_exact() {
        assert_eq!(
            rational_from_decimal(0.03),
            Rational::new(BigInt::from(3), BigInt::from(100))
        );
        assert_eq!(rational_from_decimal(1.0), Rational::one());
        assert_eq!(rational_from_decimal(0.0), Rational::zero());
    }

    #[test]
    fn rational_counts() {
        let r = Rational::from_count(7) / Rational::from_count(2);
        assert_eq!(r.to_f64_lossy(), 3.5);
    }
}
