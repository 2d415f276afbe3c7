//! Real scalar abstraction shared by the operator, kernel and transfer-function
//! code. Implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Machine-level tolerance used for structural checks (hermiticity,
    /// normalization) at this precision.
    fn structural_tol() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Real for f32 {
    fn structural_tol() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn structural_tol() -> Self {
        1e-10
    }
}

pub type C<R> = Complex<R>;

#[inline]
pub fn cplx<R: Real>(re: f64, im: f64) -> C<R> {
    Complex::new(R::lit(re), R::lit(im))
}

#[inline]
pub fn czero<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::zero())
}

#[inline]
pub fn cone<R: Real>() -> C<R> {
    Complex::new(R::one(), R::zero())
}

#[inline]
pub fn ci<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::one())
}
