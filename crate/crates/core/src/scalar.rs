//! Scalar abstractions.
//!
//! Bound evaluators are generic so the same code runs in `f32`, `f64` and,
//! where the quantity is rational, in exact arithmetic.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num};

/// A field element that can be built from a count.
///
/// Enough structure to evaluate finite sums of reciprocals exactly
/// (`BigRational`) or approximately (`f32`, `f64`).
pub trait Scalar: Num + Clone + Debug {
    fn from_count(n: u64) -> Self;
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl Scalar for BigRational {
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// floating point: f32 or f64
pub trait Real: Scalar + Float + FromPrimitive + Display + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 is representable")
}
