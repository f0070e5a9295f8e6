//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts an index or count into the working scalar.
#[inline]
pub fn from_usize<T: Scalar>(k: usize) -> T {
    T::from_usize(k).expect("integer representable in scalar type")
}

/// The bracket `<s> = 3 + |s|` used in every bound normalization.
#[inline]
pub fn bracket<T: Scalar>(s: T) -> T {
    lit::<T>(3.0) + s.abs()
}

/// Relative difference `|a - b| / max(|a|, |b|, tiny)`.
pub fn rel_diff<T: Scalar>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs()).max(T::min_positive_value());
    (a - b).abs() / scale
}
