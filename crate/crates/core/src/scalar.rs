//! Scalar abstraction for the numeric core.
//!
//! All geometry, matching, and scoring code is generic over [`Scalar`] so the
//! library runs in either `f32` or `f64`. The crate root exports `f64`-backed
//! aliases for everyday use.

use std::fmt;

/// Floating-point scalar used throughout the crate.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + serde::Serialize
    + serde::de::DeserializeOwned
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Conversion from an `f64` constant.
#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant representable in scalar type")
}

/// Conversion from a count.
#[inline]
pub(crate) fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
