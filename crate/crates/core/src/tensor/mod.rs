//! Dense complex tensors in row-major order.
//!
//! The last axis varies fastest. Reshapes only rewrite the shape vector;
//! `permute` is the single operation that reorders data.

mod expm;
mod svd;

pub use expm::unitary_from_generator;
pub use svd::{split_matrix, svd_split, MatrixSplit, SvdResult, TruncationPolicy};

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<Complex<T>>,
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

impl<T: Real> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<Complex<T>>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {len} amplitudes, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![Complex::zero(); len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        t
    }

    /// Builds a matrix from a closure over `(row, col)`.
    pub fn from_fn_2d(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> Complex<T> {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: Complex<T>) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Reorders axes so that output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim(format!("{perm:?} is not a permutation of {r} axes")));
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = row_major_strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            // odometer increment over the new shape
            for ax in (0..r).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose of a matrix.
    pub fn dagger(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::dim(format!("dagger needs a matrix, got {:?}", self.shape)));
        }
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub fn scale(&mut self, factor: Complex<T>) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical {
                context: format!("non-finite amplitude produced by {what}"),
            })
        }
    }

    /// Largest absolute entry of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max))
    }

    /// Matrix product for rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract_pair(self, other, &[(1, 0)])
    }
}

/// Contracts `a` with `b` over the listed `(axis_of_a, axis_of_b)` pairs.
///
/// The result carries the unpaired axes of `a` (in order) followed by the
/// unpaired axes of `b`. With no pairs this is the outer product.
pub fn contract_pair<T: Real>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
    paired_axes: &[(usize, usize)],
) -> Result<DenseTensor<T>> {
    let (ra, rb) = (a.rank(), b.rank());
    let mut used_a = vec![false; ra];
    let mut used_b = vec![false; rb];
    for &(ia, ib) in paired_axes {
        if ia >= ra || ib >= rb {
            return Err(Error::dim(format!(
                "axis pair ({ia}, {ib}) out of range for ranks {ra}, {rb}"
            )));
        }
        if used_a[ia] || used_b[ib] {
            return Err(Error::dim(format!("axis pair ({ia}, {ib}) repeats an axis")));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::dim(format!(
                "paired axes ({ia}, {ib}) have extents {} and {}",
                a.shape[ia], b.shape[ib]
            )));
        }
        used_a[ia] = true;
        used_b[ib] = true;
    }
    let free_a: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..rb).filter(|&i| !used_b[i]).collect();

    let perm_a: Vec<usize> = free_a
        .iter()
        .copied()
        .chain(paired_axes.iter().map(|p| p.0))
        .collect();
    let perm_b: Vec<usize> = paired_axes
        .iter()
        .map(|p| p.1)
        .chain(free_b.iter().copied())
        .collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = paired_axes.iter().map(|p| a.shape[p.0]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let data = T::matmul(&pa.data, &pb.data, m, k, n);

    let mut shape: Vec<usize> = free_a.iter().map(|&i| a.shape[i]).collect();
    shape.extend(free_b.iter().map(|&i| b.shape[i]));
    if shape.is_empty() {
        shape.push(1);
    }
    let out = DenseTensor { shape, data };
    out.ensure_finite("contract_pair")?;
    Ok(out)
}
