//! Matrix exponential of anti-Hermitian generators.

use num_complex::Complex;
use num_traits::Zero;

use super::DenseTensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Returns `exp(m)` for an anti-Hermitian square matrix `m`.
///
/// `i·m` is Hermitian, so `exp(m) = W exp(-i Λ) W^H` with `i·m = W Λ W^H`.
/// The exponential is taken block by block over the connected components of
/// the nonzero pattern, so entries that are structurally zero stay exactly
/// zero in the result.
pub fn unitary_from_generator<T: Real>(m: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let shape = m.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::dim(format!("generator must be square, got {shape:?}")));
    }
    let n = shape[0];
    m.ensure_finite("generator")?;
    let a = m.data();
    let scale = a.iter().map(|z| z.norm()).fold(T::zero(), T::max).max(T::one());
    let tol = T::lit(T::CHECK_TOL) * scale;
    for i in 0..n {
        for j in 0..n {
            if (a[i * n + j] + a[j * n + i].conj()).norm() > tol {
                return Err(Error::contract(format!(
                    "generator is not anti-Hermitian at ({i}, {j})"
                )));
            }
        }
    }

    // components of the symmetric nonzero pattern
    let mut comp = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..n {
                if comp[j] == usize::MAX && !(a[i * n + j].is_zero() && a[j * n + i].is_zero()) {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }

    let mut out = vec![Complex::zero(); n * n];
    let i_unit = Complex::new(T::zero(), T::one());
    for idx in &blocks {
        let b = idx.len();
        if b == 1 {
            // a purely imaginary diagonal entry
            out[idx[0] * n + idx[0]] = a[idx[0] * n + idx[0]].exp();
            continue;
        }
        let mut h = Vec::with_capacity(b * b);
        for &i in idx {
            for &j in idx {
                h.push(a[i * n + j] * i_unit);
            }
        }
        // symmetrize away round-off so the eigensolver sees an exact Hermitian input
        for r in 0..b {
            for c in r..b {
                let avg = (h[r * b + c] + h[c * b + r].conj()) * T::lit(0.5);
                h[r * b + c] = avg;
                h[c * b + r] = avg.conj();
            }
        }
        let (vals, w) = T::hermitian_eigen(&h, b)?;
        let phases: Vec<Complex<T>> = vals
            .iter()
            .map(|&l| Complex::new(l.cos(), -l.sin()))
            .collect();
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                let mut acc = Complex::zero();
                for k in 0..b {
                    acc += w[r * b + k] * phases[k] * w[c * b + k].conj();
                }
                out[i * n + j] = acc;
            }
        }
    }
    DenseTensor::new(vec![n, n], out)
}
