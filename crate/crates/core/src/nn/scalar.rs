use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumCast, ToPrimitive};

/// Floating-point element type of tensors: `f32` or `f64`.
pub trait Scalar:
    LinalgScalar
    + Float
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("finite cast")
    }

    fn to64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite cast")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
