//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Geometry and phase bookkeeping are always evaluated in `f64` (carrier
//! phases reach ~10^6 rad) and cast down once; everything downstream of
//! channel synthesis is generic over [`Real`].

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real scalar backing the complex linear algebra: `f32` or `f64`.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;
pub type CVec<T> = DVector<Complex<T>>;
pub type CMat<T> = DMatrix<Complex<T>>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

/// `exp(j theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// `exp(j theta)` evaluated in `f64` and then cast.
#[inline]
pub fn cis64<T: Real>(theta: f64) -> C<T> {
    Complex::new(T::lit(theta.cos()), T::lit(theta.sin()))
}

#[inline]
pub fn c64<T: Real>(z: Complex<f64>) -> C<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

#[inline]
pub fn abs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn modulus<T: Real>(z: C<T>) -> T {
    abs2(z).sqrt()
}

/// Real inner product `Re(a^H b)` of the real embedding.
pub fn re_dot<T: Real>(a: &CVec<T>, b: &CVec<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + x.re * y.re + x.im * y.im)
}

pub fn norm2<T: Real>(a: &CVec<T>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + abs2(*z))
}

/// `x^H A x`, real part (A is assumed Hermitian).
pub fn quad_form<T: Real>(a: &CMat<T>, x: &CVec<T>) -> T {
    let ax = a * x;
    x.dotc(&ax).re
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Casts a complex matrix between scalar types.
pub fn cast_mat<S: Real, T: Real>(m: &CMat<S>) -> CMat<T> {
    m.map(|z| Complex::new(T::lit(z.re.as_f64()), T::lit(z.im.as_f64())))
}

pub fn cast_vec<S: Real, T: Real>(v: &CVec<S>) -> CVec<T> {
    v.map(|z| Complex::new(T::lit(z.re.as_f64()), T::lit(z.im.as_f64())))
}
