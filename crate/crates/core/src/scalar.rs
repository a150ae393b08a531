//! Scalar abstraction: the numeric kernels are generic over the floating
//! point type. `f64` is the working precision everywhere in the binary;
//! `f32` compiles and is exercised by a smoke test with loosened tolerances.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals used in formulas.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Conversion from integer counts.
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    /// Default tolerance corresponding to a target `f64` tolerance, floored
    /// at a few epsilon of the actual scalar type so that `f32` instances
    /// get achievable tolerances.
    #[inline]
    fn tol(target: f64) -> Self {
        let t = Self::c(target);
        let floor = Self::epsilon() * Self::c(8.0);
        if t < floor {
            floor
        } else {
            t
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tol_respects_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-12), 1e-12);
        assert!(<f32 as Scalar>::tol(1e-12) > 1e-7 * 0.5);
    }
}
