//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

/// Real floating-point scalar: `f32` or `f64`.
///
/// All solvers are written against this trait. The tolerances quoted in the
/// documentation are for `f64`; `f32` runs work but stop at single precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssignOps + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a node index or count.
    #[inline]
    fn from_usize_lossy(i: usize) -> Self {
        <Self as FromPrimitive>::from_usize(i).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest relative spacing used when scaling stopping criteria.
    #[inline]
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Uniform node coordinate `i / (n - 1)` on `[0, 1]`.
#[inline]
pub fn node<T: Real>(i: usize, n: usize) -> T {
    T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)
}

/// Max-abs of a slice; zero for an empty slice.
#[inline]
pub fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}
