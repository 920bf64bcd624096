//! Scalar abstraction and small complex-matrix helpers.

use std::fmt;

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::ToPrimitive;

/// Real floating-point type the library is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive + fmt::Display + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + ToPrimitive + fmt::Display + Send + Sync + 'static {}

pub type C<T> = Complex<T>;
pub type CMat<T> = DMatrix<Complex<T>>;
pub type CVec<T> = DVector<Complex<T>>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> C<T> {
    Complex::new(lit(re), lit(im))
}

#[inline]
pub fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

/// The imaginary unit.
#[inline]
pub fn ci<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::one())
}

pub fn zeros<T: Real>(r: usize, c: usize) -> CMat<T> {
    DMatrix::from_element(r, c, czero())
}

pub fn eye<T: Real>(n: usize) -> CMat<T> {
    DMatrix::identity(n, n)
}

/// Frobenius norm.
pub fn fnorm<T: Real>(m: &CMat<T>) -> T {
    m.norm()
}

/// Column-stacking vectorization.
pub fn vec_of<T: Real>(m: &CMat<T>) -> CVec<T> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec<T: Real>(v: &[C<T>], rows: usize, cols: usize) -> CMat<T> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Hermitian part `(m + m^H) / 2`.
pub fn herm_part<T: Real>(m: &CMat<T>) -> CMat<T> {
    (m + m.adjoint()) * creal(lit::<T>(0.5))
}

/// Matrix of `S -> X S Y^H` under column stacking: `conj(Y) ⊗ X`.
pub fn sandwich<T: Real>(x: &CMat<T>, y: &CMat<T>) -> CMat<T> {
    y.conjugate().kronecker(x)
}

/// Scales a matrix by a real number.
pub fn rscale<T: Real>(m: &CMat<T>, s: T) -> CMat<T> {
    m * creal(s)
}

/// Largest Frobenius norm in a list of matrices.
pub fn max_norm<T: Real>(ms: &[CMat<T>]) -> T {
    ms.iter().map(fnorm).fold(T::zero(), |a, b| a.max(b))
}

/// Frobenius norm of a tuple of matrices, viewed as one long vector.
pub fn tuple_norm<T: Real>(ms: &[CMat<T>]) -> T {
    ms.iter()
        .map(|m| m.norm_squared())
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

/// `max_i ‖a_i − b_i‖`.
pub fn max_diff<T: Real>(a: &[CMat<T>], b: &[CMat<T>]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| fnorm(&(x - y)))
        .fold(T::zero(), |p, q| p.max(q))
}

/// Converts a matrix between scalar types through `f64`.
pub fn cast_mat<S: Real, T: Real>(m: &CMat<S>) -> CMat<T> {
    m.map(|z| cplx(to_f64(z.re), to_f64(z.im)))
}

/// Modulus of a complex scalar.
#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    z.norm_sqr().sqrt()
}
