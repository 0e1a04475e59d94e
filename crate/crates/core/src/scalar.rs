//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All tensors hold `Complex<T>` amplitudes where `T: Real`. The trait bundles
//! the `num-traits` float interface with the handful of dense kernels that are
//! delegated to `faer` (matrix product, thin SVD, Hermitian eigensolver), so
//! the rest of the code never touches backend types directly.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use faer::{Accum, MatRef, Par, Side};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

use crate::error::{Error, Result};

/// Real scalar type backing the complex amplitudes.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance used for contract checks (unitarity, anti-Hermiticity).
    const CHECK_TOL: f64;

    /// Row-major product `a (m×k) · b (k×n)`.
    fn matmul(
        a: &[Complex<Self>],
        b: &[Complex<Self>],
        m: usize,
        k: usize,
        n: usize,
    ) -> Vec<Complex<Self>>;

    /// Thin SVD of a row-major `m×n` matrix.
    ///
    /// Returns `(u, s, vh)` with `u` row-major `m×r`, `vh` row-major `r×n`,
    /// `r = min(m, n)`, `s` descending.
    fn thin_svd(a: &[Complex<Self>], m: usize, n: usize) -> Result<DenseSvd<Self>>;

    /// Eigendecomposition of a Hermitian row-major `n×n` matrix.
    ///
    /// Eigenvalues ascending; eigenvectors are the columns of the returned
    /// row-major matrix.
    fn hermitian_eigen(a: &[Complex<Self>], n: usize) -> Result<(Vec<Self>, Vec<Complex<Self>>)>;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

/// Raw thin SVD factors in row-major storage.
#[derive(Clone, Debug)]
pub struct DenseSvd<T> {
    pub u: Vec<Complex<T>>,
    pub s: Vec<T>,
    pub vh: Vec<Complex<T>>,
    pub rank: usize,
}

macro_rules! impl_real {
    ($t:ty, $tol:expr) => {
        impl Real for $t {
            const CHECK_TOL: f64 = $tol;

            fn matmul(
                a: &[Complex<$t>],
                b: &[Complex<$t>],
                m: usize,
                k: usize,
                n: usize,
            ) -> Vec<Complex<$t>> {
                let mut out = vec![Complex::new(0.0, 0.0); m * n];
                if m == 0 || n == 0 || k == 0 {
                    return out;
                }
                let lhs = MatRef::from_row_major_slice(a, m, k);
                let rhs = MatRef::from_row_major_slice(b, k, n);
                let dst = faer::MatMut::from_row_major_slice_mut(&mut out, m, n);
                faer::linalg::matmul::matmul(
                    dst,
                    Accum::Replace,
                    lhs,
                    rhs,
                    Complex::new(1.0, 0.0),
                    Par::Seq,
                );
                out
            }

            fn thin_svd(a: &[Complex<$t>], m: usize, n: usize) -> Result<DenseSvd<$t>> {
                let mat = MatRef::from_row_major_slice(a, m, n);
                let svd = mat.thin_svd().map_err(|e| Error::Numerical {
                    context: format!("SVD of {m}x{n} matrix did not converge: {e:?}"),
                })?;
                let r = m.min(n);
                let (uf, sf, vf) = (svd.U(), svd.S().column_vector(), svd.V());
                let mut u = vec![Complex::new(0.0, 0.0); m * r];
                let mut vh = vec![Complex::new(0.0, 0.0); r * n];
                let mut s = vec![0.0; r];
                for j in 0..r {
                    s[j] = sf[j].re;
                    for i in 0..m {
                        u[i * r + j] = uf[(i, j)];
                    }
                    for i in 0..n {
                        vh[j * n + i] = vf[(i, j)].conj();
                    }
                }
                Ok(DenseSvd { u, s, vh, rank: r })
            }

            fn hermitian_eigen(
                a: &[Complex<$t>],
                n: usize,
            ) -> Result<(Vec<$t>, Vec<Complex<$t>>)> {
                let mat = MatRef::from_row_major_slice(a, n, n);
                let evd = mat.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical {
                    context: format!("Hermitian eigensolver failed on {n}x{n} matrix: {e:?}"),
                })?;
                let (uf, sf) = (evd.U(), evd.S().column_vector());
                let vals = (0..n).map(|i| sf[i].re).collect();
                let mut vecs = vec![Complex::new(0.0, 0.0); n * n];
                for i in 0..n {
                    for j in 0..n {
                        vecs[i * n + j] = uf[(i, j)];
                    }
                }
                Ok((vals, vecs))
            }
        }
    };
}

impl_real!(f64, 1e-12);
impl_real!(f32, 1e-5);

/// Shorthand for building a complex scalar from two `f64` literals.
#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}
