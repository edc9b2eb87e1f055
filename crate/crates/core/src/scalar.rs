//! Floating-point scalar abstraction.
//!
//! Everything numeric in the crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The only operation that cannot be written
//! generically at full speed is the blocked matrix product used to accumulate
//! sketch tensors, so each implementation routes it to the matching
//! `matrixmultiply` kernel.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type usable throughout the sketch and tree pipeline.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// `c[m x n] = a^T[m x k] * b[k x n]` with `a` stored row-major as `k x m`
    /// and `b`, `c` row-major. Any previous content of `c` is overwritten.
    fn gemm_at_b(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    /// Lossless-enough conversion from `f64`; used for constants and file IO.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }
}

fn check_gemm_dims(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(a >= k * m, "gemm: lhs buffer too small");
    assert!(b >= k * n, "gemm: rhs buffer too small");
    assert!(c >= m * n, "gemm: output buffer too small");
}

impl Scalar for f64 {
    fn gemm_at_b(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        check_gemm_dims(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: the buffer sizes were checked against the strides above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                1,
                m as isize,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f32 {
    fn gemm_at_b(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        check_gemm_dims(m, k, n, a.len(), b.len(), c.len());
        // SAFETY: the buffer sizes were checked against the strides above.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                1,
                m as isize,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}
