use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the numerical core is generic over (`f32` or `f64`).
///
/// `RealField` supplies the linear algebra (decompositions, `sqrt`, `abs`),
/// `num-traits` supplies lossless-enough conversions for I/O and literals.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Default absolute objective-change tolerance for the block-coordinate solver.
    const DEFAULT_TOL: f64;

    /// Converts an `f64` literal or computed constant.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable as float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    const DEFAULT_TOL: f64 = 1e-8;
}

impl Scalar for f32 {
    const DEFAULT_TOL: f64 = 1e-5;
}
