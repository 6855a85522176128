use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, Signed, ToPrimitive};

/// Scalar type for all numeric kernels: `f32` or `f64`.
///
/// The bounds also satisfy `rustfft::FftNum`, so anything `Real` can be
/// fed to the FFT-based signal routines directly.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Signed
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` literal or intermediate into the working scalar type.
#[inline]
pub fn cvt<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 converts into Real scalar")
}
