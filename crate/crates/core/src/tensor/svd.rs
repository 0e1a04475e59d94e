//! Truncated singular value decomposition.
//!
//! Excitation-conserving evolution leaves exact zeros in every matrix we
//! split, so the matrix is first partitioned into independent blocks (the
//! connected components of its nonzero pattern, rows and columns treated as
//! a bipartite graph). Each block is decomposed on its own: one-sided Jacobi
//! for small blocks, `faer` for large ones. Singular vectors of different
//! blocks never mix, which keeps the zero structure exact downstream.

use num_complex::Complex;
use num_traits::{One, Zero};

use super::DenseTensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Blocks with both sides above this size go to the `faer` backend.
const JACOBI_MAX_DIM: usize = 24;
const JACOBI_MAX_SWEEPS: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub max_bond: usize,
    /// Largest allowed ratio discarded / total squared weight.
    pub cutoff: f64,
}

impl TruncationPolicy {
    pub fn new(max_bond: usize, cutoff: f64) -> Result<Self> {
        if max_bond < 1 {
            return Err(Error::contract("max_bond must be at least 1"));
        }
        if !(0.0..1.0).contains(&cutoff) {
            return Err(Error::contract(format!("cutoff {cutoff} outside [0, 1)")));
        }
        Ok(Self { max_bond, cutoff })
    }

    /// Keeps every numerically nonzero singular value.
    pub fn exact() -> Self {
        Self {
            max_bond: usize::MAX,
            cutoff: 0.0,
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            max_bond: 512,
            cutoff: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SvdResult<T: Real> {
    /// Shape `[left extents..., k]`.
    pub left_isometry: DenseTensor<T>,
    pub singular_values: Vec<T>,
    /// Shape `[k, right extents...]`.
    pub right_isometry: DenseTensor<T>,
    pub discarded_weight: T,
}

/// Truncated factors of a row-major `m×n` matrix.
#[derive(Clone, Debug)]
pub struct MatrixSplit<T: Real> {
    /// Row-major `m×k`.
    pub u: Vec<Complex<T>>,
    pub s: Vec<T>,
    /// Row-major `k×n`.
    pub vh: Vec<Complex<T>>,
    pub discarded_weight: T,
    pub total_weight: T,
}

impl<T: Real> MatrixSplit<T> {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Splits `t` into `left_axes` versus the remaining axes.
///
/// The left factor keeps the listed axes in the given order; the right
/// factor keeps the remaining axes in their original order.
pub fn svd_split<T: Real>(
    t: &DenseTensor<T>,
    left_axes: &[usize],
    policy: TruncationPolicy,
) -> Result<SvdResult<T>> {
    let r = t.rank();
    let mut is_left = vec![false; r];
    for &ax in left_axes {
        if ax >= r || is_left[ax] {
            return Err(Error::dim(format!("invalid left axes {left_axes:?} for rank {r}")));
        }
        is_left[ax] = true;
    }
    if left_axes.is_empty() || left_axes.len() == r {
        return Err(Error::contract(format!(
            "left axes {left_axes:?} must be a proper non-empty subset of {r} axes"
        )));
    }
    let right_axes: Vec<usize> = (0..r).filter(|&a| !is_left[a]).collect();
    let perm: Vec<usize> = left_axes.iter().chain(&right_axes).copied().collect();
    let p = t.permute(&perm)?;
    let left_shape: Vec<usize> = left_axes.iter().map(|&a| t.shape()[a]).collect();
    let right_shape: Vec<usize> = right_axes.iter().map(|&a| t.shape()[a]).collect();
    let m: usize = left_shape.iter().product();
    let n: usize = right_shape.iter().product();

    let split = split_matrix(p.data(), m, n, policy)?;
    let k = split.rank();
    let mut ls = left_shape;
    ls.push(k);
    let mut rs = vec![k];
    rs.extend(right_shape);
    Ok(SvdResult {
        left_isometry: DenseTensor::new(ls, split.u)?,
        singular_values: split.s,
        right_isometry: DenseTensor::new(rs, split.vh)?,
        discarded_weight: split.discarded_weight,
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so block order follows first occurrence
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

struct Block {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn find_blocks<T: Real>(a: &[Complex<T>], m: usize, n: usize) -> Vec<Block> {
    let mut uf = UnionFind::new(m + n);
    let mut touched = vec![false; m + n];
    for i in 0..m {
        let row = &a[i * n..(i + 1) * n];
        for (j, z) in row.iter().enumerate() {
            if !z.is_zero() {
                uf.union(i, m + j);
                touched[i] = true;
                touched[m + j] = true;
            }
        }
    }
    let mut slot = vec![usize::MAX; m + n];
    let mut blocks: Vec<Block> = Vec::new();
    for node in 0..m + n {
        if !touched[node] {
            continue;
        }
        let root = uf.find(node);
        if slot[root] == usize::MAX {
            slot[root] = blocks.len();
            blocks.push(Block {
                rows: Vec::new(),
                cols: Vec::new(),
            });
        }
        let b = &mut blocks[slot[root]];
        if node < m {
            b.rows.push(node);
        } else {
            b.cols.push(node - m);
        }
    }
    blocks
}

/// Block-wise thin SVD with truncation under `policy`.
pub fn split_matrix<T: Real>(
    a: &[Complex<T>],
    m: usize,
    n: usize,
    policy: TruncationPolicy,
) -> Result<MatrixSplit<T>> {
    if m == 0 || n == 0 || a.len() != m * n {
        return Err(Error::dim(format!("cannot split {m}x{n} matrix from {} entries", a.len())));
    }
    let blocks = find_blocks(a, m, n);

    // (value, block, column-in-block) in encounter order
    let mut triplets: Vec<(T, usize, usize)> = Vec::new();
    let mut factors = Vec::with_capacity(blocks.len());
    for (bi, b) in blocks.iter().enumerate() {
        let (bm, bn) = (b.rows.len(), b.cols.len());
        let mut sub = Vec::with_capacity(bm * bn);
        for &i in &b.rows {
            for &j in &b.cols {
                sub.push(a[i * n + j]);
            }
        }
        let f = if bm.min(bn) <= JACOBI_MAX_DIM {
            jacobi_svd(&sub, bm, bn)?
        } else {
            let f = T::thin_svd(&sub, bm, bn)?;
            BlockSvd {
                u: f.u,
                s: f.s,
                vh: f.vh,
                r: f.rank,
            }
        };
        for (c, &sv) in f.s.iter().enumerate() {
            triplets.push((sv, bi, c));
        }
        factors.push(f);
    }
    for t in &triplets {
        if !t.0.is_finite() {
            return Err(Error::Numerical {
                context: format!("non-finite singular value in {m}x{n} split"),
            });
        }
    }
    // stable: equal values keep encounter order
    triplets.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));

    let total: T = triplets.iter().map(|t| t.0 * t.0).sum();
    let smax = triplets.first().map(|t| t.0).unwrap_or_else(T::zero);
    // values at round-off level carry no weight and have unreliable vectors
    let floor = smax * T::epsilon() * T::lit(4.0 * (m.max(n) as f64));
    let nonzero = triplets.iter().take_while(|t| t.0 > floor).count();

    let keep = if nonzero == 0 {
        0
    } else {
        choose_rank(&triplets[..nonzero], total, policy)
    };
    let discarded: T = triplets[keep..].iter().map(|t| t.0 * t.0).sum();

    if keep == 0 {
        // all-zero matrix: keep one zero singular value with unit vectors
        let mut u = vec![Complex::zero(); m];
        let mut vh = vec![Complex::zero(); n];
        u[0] = Complex::one();
        vh[0] = Complex::one();
        return Ok(MatrixSplit {
            u,
            s: vec![T::zero()],
            vh,
            discarded_weight: discarded,
            total_weight: total,
        });
    }

    let mut u = vec![Complex::zero(); m * keep];
    let mut vh = vec![Complex::zero(); keep * n];
    let mut s = Vec::with_capacity(keep);
    for (slot, &(sv, bi, c)) in triplets[..keep].iter().enumerate() {
        let (b, f) = (&blocks[bi], &factors[bi]);
        for (ri, &i) in b.rows.iter().enumerate() {
            u[i * keep + slot] = f.u[ri * f.r + c];
        }
        let bn = b.cols.len();
        for (cj, &j) in b.cols.iter().enumerate() {
            vh[slot * n + j] = f.vh[c * bn + cj];
        }
        s.push(sv);
    }
    Ok(MatrixSplit {
        u,
        s,
        vh,
        discarded_weight: discarded,
        total_weight: total,
    })
}

/// Smallest rank whose discarded tail stays within the cutoff, capped by
/// `max_bond`, and extended over a degenerate group straddling the cut.
fn choose_rank<T: Real>(sorted: &[(T, usize, usize)], total: T, policy: TruncationPolicy) -> usize {
    let len = sorted.len();
    let budget = T::lit(policy.cutoff) * total;
    let mut tail = T::zero();
    let mut keep = len;
    // walk from the smallest value upward while the dropped tail fits
    for k in (1..len).rev() {
        let w = sorted[k].0 * sorted[k].0;
        if tail + w > budget {
            break;
        }
        tail += w;
        keep = k;
    }
    keep = keep.min(policy.max_bond).max(1);
    let tol = T::lit(1e-12);
    while keep < len
        && keep < policy.max_bond
        && (sorted[keep - 1].0 - sorted[keep].0).abs() <= tol
    {
        keep += 1;
    }
    keep
}

struct BlockSvd<T: Real> {
    u: Vec<Complex<T>>,
    s: Vec<T>,
    vh: Vec<Complex<T>>,
    r: usize,
}

/// One-sided (Hestenes) Jacobi SVD of a row-major `m×n` matrix.
fn jacobi_svd<T: Real>(a: &[Complex<T>], m: usize, n: usize) -> Result<BlockSvd<T>> {
    if m < n {
        // decompose the adjoint and swap roles
        let mut adj = vec![Complex::zero(); n * m];
        for i in 0..m {
            for j in 0..n {
                adj[j * m + i] = a[i * n + j].conj();
            }
        }
        let f = jacobi_svd(&adj, n, m)?;
        // adj = U S Vh  =>  a = V S U^H
        let r = f.r;
        let mut u = vec![Complex::zero(); m * r];
        for c in 0..r {
            for i in 0..m {
                u[i * r + c] = f.vh[c * m + i].conj();
            }
        }
        let mut vh = vec![Complex::zero(); r * n];
        for c in 0..r {
            for j in 0..n {
                vh[c * n + j] = f.u[j * r + c].conj();
            }
        }
        return Ok(BlockSvd { u, s: f.s, vh, r });
    }

    // column-major working copies: g[j] is column j of A, v[j] column j of V
    let mut g: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| (0..m).map(|i| a[i * n + j]).collect())
        .collect();
    let mut v: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| {
            let mut col = vec![Complex::zero(); n];
            col[j] = Complex::one();
            col
        })
        .collect();
    let eps = T::epsilon();
    // orthogonality tolerance, and a floor below which a column is
    // numerically zero relative to the whole block
    let tol = eps * T::lit((m as f64).sqrt());
    let frob: T = g.iter().flatten().map(|z| z.norm_sqr()).sum();
    let tiny = frob * eps * eps;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: T = g[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: T = g[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex<T> = g[p]
                    .iter()
                    .zip(&g[q])
                    .map(|(x, y)| x.conj() * y)
                    .fold(Complex::zero(), |acc, z| acc + z);
                let gabs = gamma.norm();
                if gabs <= tol * (alpha * beta).sqrt() || alpha <= tiny || beta <= tiny {
                    continue;
                }
                rotated = true;
                let phase = gamma / gabs;
                let zeta = (beta - alpha) / (T::lit(2.0) * gabs);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (gp, gq) = two_mut(&mut g, p, q);
                rotate(gp, gq, c, s, phase);
                let (vp, vq) = two_mut(&mut v, p, q);
                rotate(vp, vq, c, s, phase);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical {
            context: format!("Jacobi SVD of {m}x{n} block did not converge"),
        });
    }

    let norms: Vec<T> = g
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));

    let r = n;
    let mut u = vec![Complex::zero(); m * r];
    let mut vh = vec![Complex::zero(); r * n];
    let mut s = Vec::with_capacity(r);
    for (c, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > T::zero() {
            for i in 0..m {
                u[i * r + c] = g[j][i] / sigma;
            }
        }
        for i in 0..n {
            vh[c * n + i] = v[j][i].conj();
        }
    }
    Ok(BlockSvd { u, s, vh, r })
}

fn two_mut<X>(v: &mut [X], p: usize, q: usize) -> (&mut X, &mut X) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// Rotates the pair so that `<x_p, x_q>` vanishes; `phase` is the
/// unit-modulus phase of that inner product, removed from `x_q` first.
fn rotate<T: Real>(xp: &mut [Complex<T>], xq: &mut [Complex<T>], c: T, s: T, phase: Complex<T>) {
    let ph = phase.conj();
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let bq = *b * ph;
        let na = *a * c - bq * s;
        *b = *a * s + bq * c;
        *a = na;
    }
}
