//! Time-bin matrix product state of the emitter plus its reservoir.
//!
//! Each site tensor has shape `[left_bond, local_dim, right_bond]`. The chain
//! keeps one orthogonality center: sites to its left are left-isometric, sites
//! to its right are right-isometric. The center is moved lazily, only when an
//! operation needs it somewhere else.
//!
//! The left boundary bond may exceed one. Time bins that have left the
//! feedback loop are traced out by [`MpsChain::discard_left_site`]; their
//! Schmidt partners survive as an environment index on the first tensor, so
//! the chain is a purification of the reduced state of the remaining sites.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{contract_pair, split_matrix, DenseTensor, TruncationPolicy};

/// Physical identity of a chain site.
///
/// Time-bin indices count steps of the stroboscopic grid; negative indices
/// are idle vacuum bins standing in for feedback before the first round trip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteKind {
    System,
    TimeBin(i64),
}

/// Where the orthogonality center ends up after a two-site update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct Site<T: Real> {
    pub kind: SiteKind,
    pub tensor: DenseTensor<T>,
}

impl<T: Real> Site<T> {
    pub fn local_dim(&self) -> usize {
        self.tensor.shape()[1]
    }
    pub fn left_bond(&self) -> usize {
        self.tensor.shape()[0]
    }
    pub fn right_bond(&self) -> usize {
        self.tensor.shape()[2]
    }
}

#[derive(Clone, Debug)]
pub struct MpsChain<T: Real> {
    sites: Vec<Site<T>>,
    center: usize,
    discarded: T,
}

/// Product state `(c_g|g⟩ + c_e|e⟩) ⊗ |0⟩^{⊗ n_bins}` with the system first.
pub fn init_chain<T: Real>(
    n_bins: usize,
    p: usize,
    system_state: (Complex<T>, Complex<T>),
) -> Result<MpsChain<T>> {
    let (cg, ce) = system_state;
    let norm = cg.norm_sqr() + ce.norm_sqr();
    if (norm - T::one()).abs() > T::lit(T::CHECK_TOL) {
        return Err(Error::contract(format!(
            "system state must be normalized, |c_g|^2 + |c_e|^2 = {norm}"
        )));
    }
    if p < 2 {
        return Err(Error::contract(format!("bin dimension p = {p} must be at least 2")));
    }
    let mut sites = Vec::with_capacity(n_bins + 1);
    sites.push(Site {
        kind: SiteKind::System,
        tensor: DenseTensor::new(vec![1, 2, 1], vec![cg, ce])?,
    });
    for k in 0..n_bins {
        sites.push(Site {
            kind: SiteKind::TimeBin(k as i64),
            tensor: vacuum_bin(p),
        });
    }
    Ok(MpsChain {
        sites,
        center: 0,
        discarded: T::zero(),
    })
}

/// A `[1, p, 1]` tensor holding the vacuum.
pub fn vacuum_bin<T: Real>(p: usize) -> DenseTensor<T> {
    let mut t = DenseTensor::zeros(vec![1, p, 1]);
    t.data_mut()[0] = Complex::one();
    t
}

impl<T: Real> MpsChain<T> {
    /// Assembles a chain from explicit site tensors.
    ///
    /// Bond extents must match and the right boundary must be 1. The gauge
    /// is not checked; call [`MpsChain::canonicalize`] if the tensors are not
    /// already in mixed-canonical form around `center`.
    pub fn from_sites(sites: Vec<Site<T>>, center: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::contract("chain needs at least one site"));
        }
        if center >= sites.len() {
            return Err(Error::dim(format!(
                "center {center} outside chain of {} sites",
                sites.len()
            )));
        }
        for (pos, s) in sites.iter().enumerate() {
            if s.tensor.rank() != 3 {
                return Err(Error::dim(format!(
                    "site {pos} has shape {:?}, expected [left, local, right]",
                    s.tensor.shape()
                )));
            }
            match s.kind {
                SiteKind::System if s.local_dim() != 2 => {
                    return Err(Error::dim(format!("system site {pos} must have local dimension 2")))
                }
                SiteKind::TimeBin(_) if s.local_dim() < 2 => {
                    return Err(Error::dim(format!("time bin {pos} needs local dimension >= 2")))
                }
                _ => {}
            }
            if pos + 1 < sites.len() && s.right_bond() != sites[pos + 1].left_bond() {
                return Err(Error::dim(format!(
                    "bond {pos}|{} has extents {} and {}",
                    pos + 1,
                    s.right_bond(),
                    sites[pos + 1].left_bond()
                )));
            }
        }
        if sites[sites.len() - 1].right_bond() != 1 {
            return Err(Error::dim("right boundary bond must have extent 1"));
        }
        Ok(Self {
            sites,
            center,
            discarded: T::zero(),
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn ortho_center(&self) -> usize {
        self.center
    }

    /// Sum of squared singular values dropped so far.
    pub fn discarded_weight(&self) -> T {
        self.discarded
    }

    pub fn site(&self, pos: usize) -> &Site<T> {
        &self.sites[pos]
    }

    /// Physical identity of every position, in chain order.
    pub fn logical_order(&self) -> Vec<SiteKind> {
        self.sites.iter().map(|s| s.kind).collect()
    }

    pub fn position_of(&self, kind: SiteKind) -> Option<usize> {
        self.sites.iter().position(|s| s.kind == kind)
    }

    /// Bond extents from the left boundary to the right boundary
    /// (`len() + 1` entries).
    pub fn bond_profile(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.sites.len() + 1);
        out.push(self.sites[0].left_bond());
        out.extend(self.sites.iter().map(|s| s.right_bond()));
        out
    }

    pub fn max_bond(&self) -> usize {
        self.bond_profile().into_iter().max().unwrap_or(1)
    }

    /// `⟨ψ|ψ⟩`, read off the center tensor.
    pub fn norm_sqr(&self) -> T {
        self.sites[self.center].tensor.norm_sqr()
    }

    fn check_pos(&self, pos: usize, what: &str) -> Result<()> {
        if pos >= self.sites.len() {
            return Err(Error::dim(format!(
                "{what}: position {pos} outside chain of {} sites",
                self.sites.len()
            )));
        }
        Ok(())
    }

    /// Contracts sites `pos` and `pos+1` into `[a, d1, d2, b]`.
    fn theta2(&self, pos: usize) -> DenseTensor<T> {
        let (a, b) = (&self.sites[pos].tensor, &self.sites[pos + 1].tensor);
        let (l, d1, chi) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        let (d2, r) = (b.shape()[1], b.shape()[2]);
        let data = T::matmul(a.data(), b.data(), l * d1, chi, d2 * r);
        DenseTensor::new(vec![l, d1, d2, r], data).expect("consistent bond extents")
    }

    /// Splits a `[a, d1, d2, b]` block back into sites `pos`, `pos+1`.
    fn split_into(
        &mut self,
        pos: usize,
        theta: &DenseTensor<T>,
        policy: TruncationPolicy,
        side: Side,
    ) -> Result<T> {
        let s = theta.shape();
        let (a, d1, d2, b) = (s[0], s[1], s[2], s[3]);
        let mut f = split_matrix(theta.data(), a * d1, d2 * b, policy)?;
        let k = f.rank();
        match side {
            Side::Right => {
                for (c, &sv) in f.s.iter().enumerate() {
                    for z in &mut f.vh[c * d2 * b..(c + 1) * d2 * b] {
                        *z *= sv;
                    }
                }
            }
            Side::Left => {
                for row in f.u.chunks_mut(k) {
                    for (z, &sv) in row.iter_mut().zip(&f.s) {
                        *z *= sv;
                    }
                }
            }
        }
        self.sites[pos].tensor = DenseTensor::new(vec![a, d1, k], f.u)?;
        self.sites[pos + 1].tensor = DenseTensor::new(vec![k, d2, b], f.vh)?;
        self.sites[pos].tensor.ensure_finite("two-site split")?;
        self.sites[pos + 1].tensor.ensure_finite("two-site split")?;
        self.center = match side {
            Side::Left => pos,
            Side::Right => pos + 1,
        };
        self.discarded += f.discarded_weight;
        Ok(f.discarded_weight)
    }

    /// Moves the orthogonality center to `target` by exact two-site splits.
    pub fn move_center(&mut self, target: usize) -> Result<()> {
        self.check_pos(target, "move_center")?;
        while self.center < target {
            let th = self.theta2(self.center);
            self.split_into(self.center, &th, TruncationPolicy::exact(), Side::Right)?;
        }
        while self.center > target {
            let th = self.theta2(self.center - 1);
            self.split_into(self.center - 1, &th, TruncationPolicy::exact(), Side::Left)?;
        }
        Ok(())
    }

    /// Brings the chain into mixed-canonical form around `center` with full
    /// sweeps, whatever the gauge of the input tensors.
    pub fn canonicalize(&mut self, center: usize) -> Result<()> {
        self.check_pos(center, "canonicalize")?;
        let last = self.sites.len() - 1;
        self.center = 0;
        self.move_center(last)?;
        self.move_center(center)
    }

    fn ensure_center_near(&mut self, pos: usize) -> Result<()> {
        if self.center != pos && self.center != pos + 1 {
            let target = if self.center < pos { pos } else { pos + 1 };
            self.move_center(target)?;
        }
        Ok(())
    }

    /// Applies a two-site gate on `pos, pos+1` and re-splits under `policy`.
    ///
    /// `gate` is a `[d1·d2, d1·d2]` matrix (or `[d1, d2, d1, d2]` tensor),
    /// rows indexing the output pair. Returns the weight discarded by the
    /// split.
    pub fn apply_two_site(
        &mut self,
        pos: usize,
        gate: &DenseTensor<T>,
        policy: TruncationPolicy,
        side: Side,
    ) -> Result<T> {
        if pos + 1 >= self.sites.len() {
            return Err(Error::dim(format!(
                "apply_two_site: no pair at {pos} in chain of {} sites",
                self.sites.len()
            )));
        }
        let (d1, d2) = (self.sites[pos].local_dim(), self.sites[pos + 1].local_dim());
        let d = d1 * d2;
        if gate.len() != d * d || !(gate.shape() == [d, d] || gate.shape() == [d1, d2, d1, d2]) {
            return Err(Error::dim(format!(
                "gate of shape {:?} does not act on local dimensions {d1} x {d2}",
                gate.shape()
            )));
        }
        let g = gate.clone().reshape(vec![d, d])?;
        check_unitary(&g, T::lit(1e-10))?;
        self.ensure_center_near(pos)?;
        let th = self.theta2(pos);
        let (a, b) = (th.shape()[0], th.shape()[3]);
        let th = th.reshape(vec![a, d, b])?;
        let out = contract_pair(&g, &th, &[(1, 1)])?; // [d, a, b]
        let out = out.permute(&[1, 0, 2])?.reshape(vec![a, d1, d2, b])?;
        self.split_into(pos, &out, policy, side)
    }

    /// Exchanges the physical content of sites `pos` and `pos+1`.
    ///
    /// The orthogonality center travels with the content it sat on: if it
    /// was on `pos` it ends on `pos+1`, and vice versa.
    pub fn swap_sites(&mut self, pos: usize, policy: TruncationPolicy) -> Result<T> {
        if pos + 1 >= self.sites.len() {
            return Err(Error::dim(format!(
                "swap_sites: no pair at {pos} in chain of {} sites",
                self.sites.len()
            )));
        }
        self.ensure_center_near(pos)?;
        let side = if self.center == pos { Side::Right } else { Side::Left };
        let th = self.theta2(pos).permute(&[0, 2, 1, 3])?;
        let w = self.split_into(pos, &th, policy, side)?;
        let moved = self.sites[pos].kind;
        self.sites[pos].kind = self.sites[pos + 1].kind;
        self.sites[pos + 1].kind = moved;
        Ok(w)
    }

    /// `⟨ψ|op|ψ⟩` for a single-site operator at `pos`.
    pub fn local_expectation(&mut self, pos: usize, op: &DenseTensor<T>) -> Result<Complex<T>> {
        self.check_pos(pos, "local_expectation")?;
        let d = self.sites[pos].local_dim();
        if op.shape() != [d, d] {
            return Err(Error::dim(format!(
                "operator of shape {:?} on site with local dimension {d}",
                op.shape()
            )));
        }
        self.move_center(pos)?;
        let rho = reduced_density(&self.sites[pos].tensor);
        let mut acc = Complex::zero();
        for i in 0..d {
            for j in 0..d {
                acc += op.data()[i * d + j] * rho[j * d + i];
            }
        }
        Ok(acc)
    }

    /// Traces out site 0 and makes its Schmidt partners the environment
    /// index of the new first site.
    pub fn discard_left_site(&mut self) -> Result<Site<T>> {
        if self.sites.len() < 2 {
            return Err(Error::contract("cannot discard the only site of a chain"));
        }
        if self.center == 0 {
            self.move_center(1)?;
        }
        self.center -= 1;
        Ok(self.sites.remove(0))
    }

    /// Largest deviation from the isometry conditions around the center.
    pub fn gauge_error(&self) -> T {
        let mut worst = T::zero();
        for (pos, s) in self.sites.iter().enumerate() {
            if pos == self.center {
                continue;
            }
            let t = &s.tensor;
            let (l, d, r) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let (rows, cols, data) = if pos < self.center {
                // columns of the (l·d) × r matrix are orthonormal
                (l * d, r, t.data().to_vec())
            } else {
                // rows of the l × (d·r) matrix are orthonormal: use its adjoint
                let mut adj: Vec<Complex<T>> = vec![Complex::zero(); l * d * r];
                for i in 0..l {
                    for j in 0..d * r {
                        adj[j * l + i] = t.data()[i * d * r + j].conj();
                    }
                }
                (d * r, l, adj)
            };
            for a in 0..cols {
                for b in 0..cols {
                    let mut acc: Complex<T> = Complex::zero();
                    for i in 0..rows {
                        acc += data[i * cols + a].conj() * data[i * cols + b];
                    }
                    let target: Complex<T> = if a == b { Complex::one() } else { Complex::zero() };
                    worst = worst.max((acc - target).norm());
                }
            }
        }
        worst
    }

    /// Dense amplitudes `[env, d_0, ..., d_{N-1}]`; for small chains only.
    pub fn to_state_vector(&self) -> Result<DenseTensor<T>> {
        let mut acc = self.sites[0].tensor.clone();
        for s in &self.sites[1..] {
            let r = acc.rank();
            acc = contract_pair(&acc, &s.tensor, &[(r - 1, 0)])?;
        }
        let mut shape = acc.shape().to_vec();
        shape.pop();
        acc.reshape(shape)
    }

    pub(crate) fn sites_mut(&mut self) -> &mut [Site<T>] {
        &mut self.sites
    }

    pub(crate) fn set_center(&mut self, center: usize) {
        self.center = center;
    }

    pub(crate) fn add_discarded(&mut self, w: T) {
        self.discarded += w;
    }

    pub(crate) fn insert_site(&mut self, pos: usize, site: Site<T>) {
        if pos <= self.center && pos < self.sites.len() {
            self.center += 1;
        }
        self.sites.insert(pos, site);
    }
}

/// `ρ[i, j] = Σ_{a,b} A[a,i,b] conj(A[a,j,b])` for a center tensor.
pub(crate) fn reduced_density<T: Real>(t: &DenseTensor<T>) -> Vec<Complex<T>> {
    let (l, d, r) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut rho = vec![Complex::zero(); d * d];
    let data = t.data();
    for a in 0..l {
        for i in 0..d {
            let ri = &data[(a * d + i) * r..(a * d + i + 1) * r];
            for j in 0..d {
                let rj = &data[(a * d + j) * r..(a * d + j + 1) * r];
                let mut acc = Complex::zero();
                for (x, y) in ri.iter().zip(rj) {
                    acc += x * y.conj();
                }
                rho[i * d + j] += acc;
            }
        }
    }
    rho
}

pub(crate) fn check_unitary<T: Real>(g: &DenseTensor<T>, tol: T) -> Result<()> {
    let n = g.shape()[0];
    let gg = contract_pair(&g.conj(), g, &[(0, 0)])?;
    let err = gg.max_abs_diff(&DenseTensor::identity(n))?;
    if err > tol {
        return Err(Error::contract(format!("gate is not unitary: |G^H G - 1| = {err}")));
    }
    Ok(())
}

/// Projector onto the excited emitter state, `E = |e⟩⟨e|`.
pub fn excitation_operator<T: Real>() -> DenseTensor<T> {
    let mut e = DenseTensor::zeros(vec![2, 2]);
    e.data_mut()[3] = Complex::one();
    e
}

/// Photon-number operator of a `p`-level bin.
pub fn number_operator<T: Real>(p: usize) -> DenseTensor<T> {
    DenseTensor::from_fn_2d(p, p, |i, j| {
        if i == j {
            Complex::new(T::lit(i as f64), T::zero())
        } else {
            Complex::zero()
        }
    })
}
