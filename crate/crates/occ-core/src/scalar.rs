//! Scalar abstraction: all geometry and feature math is generic over `Real`,
//! instantiated as `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumCast + Sum + Send + Sync + Debug + Display + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + NumCast + Sum + Send + Sync + Debug + Display + 'static
{
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 converts to any Real")
}

/// Sum with a fixed pairwise reduction tree.
///
/// The split points depend only on the slice length, so the result is
/// identical no matter how the values were produced, and rounding error stays
/// O(log n) instead of O(n).
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        let mut acc = T::zero();
        for &v in values {
            acc = acc + v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
