//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use std::fmt::{Debug, Display};

/// Real floating point scalar: `f32` or `f64`.
///
/// Everything linear-algebraic goes through [`RealField`]; `ToPrimitive` is only
/// used to hand values back to `f64` for reporting.
pub trait Real: RealField + Copy + ToPrimitive + Display + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive value treated as nonzero by tolerance checks.
    fn tiny() -> Self;
}

impl Real for f32 {
    fn tiny() -> Self {
        f32::MIN_POSITIVE
    }
}

impl Real for f64 {
    fn tiny() -> Self {
        f64::MIN_POSITIVE
    }
}
