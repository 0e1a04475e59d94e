//! Recursive Heisenberg equations for emitter matrix elements.
//!
//! The emitter operators `E(t)` and `σ₋(t)` are tracked through their matrix
//! elements between the states `|j, q⟩` (emitter `j ∈ {g, e}`, `q ≤ n`
//! photons left in the pulse). Basis index: `j·(n+1) + q` with `j = 0` for
//! ground. Two-time products against the delayed operators are closed by
//! inserting a unity over this basis, which turns the operator delay
//! equations into matrix delay equations:
//!
//! ```text
//! dE/dt = −2ΓE − √Γ (g* P S + g (P S)†) + ΓΘ (e^{−iφ} S_τ† S + e^{iφ} S† S_τ)
//! dS/dt = −ΓS − √Γ g (1 − 2E) Pᵀ + ΓΘ e^{iφ} (S_τ − 2E S_τ)
//! ```
//!
//! with `(P X)[(j,q), ·] = √q X[(j,q−1), ·]` the photon-removal shift and
//! `X_τ` the matrix at `t − τ`.
//!
//! The pulse envelope is given in arrival time at the emitter (as for the
//! MPS engine). The drive kernel then reads
//! `g(t) = f(t − τ) e^{iφ/2} − f(t) e^{−iφ/2}`: the direct and the mirrored
//! path of the pulse, the latter delayed by one round trip.
//!
//! Integration is classical RK4 on a grid with `τ = l·h`. Delayed values at
//! grid points come from a ring of the last `l + 1` states; at the RK half
//! step they are reconstructed by cubic Hermite interpolation from the
//! stored values and slopes, which keeps the scheme fourth order.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::evolution::{InitialSystem, PhysicsParams, TraceRecord};
use crate::pulse::{DiscretizedPulse, PulseShape};
use crate::scalar::Real;

/// Tolerance of the Hermiticity audit on `E`.
pub const HERMITICITY_TOL: f64 = 1e-9;

/// Matrix elements of `E` and `σ₋` in the `|j, q⟩` basis, row-major `D×D`
/// with `D = 2(n+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergState<T: Real> {
    pub n: usize,
    pub e_mat: Vec<Complex<T>>,
    pub s_mat: Vec<Complex<T>>,
    pub t: f64,
}

impl<T: Real> HeisenbergState<T> {
    pub fn dim(&self) -> usize {
        2 * (self.n + 1)
    }

    pub fn index(n: usize, excited: bool, q: usize) -> usize {
        usize::from(excited) * (n + 1) + q
    }

    /// Schrödinger-picture operators at `t = 0`:
    /// `E = Σ_q |e,q⟩⟨e,q|`, `σ₋ = Σ_q |g,q⟩⟨e,q|`.
    pub fn initial(n: usize) -> Self {
        let d = 2 * (n + 1);
        let mut e_mat = vec![Complex::zero(); d * d];
        let mut s_mat = vec![Complex::zero(); d * d];
        for q in 0..=n {
            let e = Self::index(n, true, q);
            let g = Self::index(n, false, q);
            e_mat[e * d + e] = Complex::new(T::one(), T::zero());
            s_mat[g * d + e] = Complex::new(T::one(), T::zero());
        }
        Self {
            n,
            e_mat,
            s_mat,
            t: 0.0,
        }
    }

    /// `max |E − E†|`.
    pub fn hermiticity_error(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.e_mat[i * d + j] - self.e_mat[j * d + i].conj()).norm());
            }
        }
        worst
    }

    /// `⟨ψ₀|E(t)|ψ₀⟩` for `|ψ₀⟩ = (c_g|g⟩ + c_e|e⟩) ⊗ |n⟩`.
    pub fn excitation(&self, c_g: Complex<T>, c_e: Complex<T>) -> T {
        let d = self.dim();
        let (g, e) = (Self::index(self.n, false, self.n), Self::index(self.n, true, self.n));
        let amp = [(g, c_g), (e, c_e)];
        let mut acc = Complex::zero();
        for &(i, ci) in &amp {
            for &(k, ck) in &amp {
                acc += ci.conj() * ck * self.e_mat[i * d + k];
            }
        }
        acc.re
    }

    fn is_finite(&self) -> bool {
        self.e_mat
            .iter()
            .chain(&self.s_mat)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Source of the pulse envelope `f` (arrival time, ps^(-1/2)).
#[derive(Clone, Copy, Debug)]
pub enum Envelope<'a, T: Real> {
    Vacuum,
    Continuum(&'a PulseShape),
    Discrete(&'a DiscretizedPulse<T>),
}

impl<T: Real> Envelope<'_, T> {
    pub fn at(&self, t: f64) -> Complex<T> {
        match self {
            Envelope::Vacuum => Complex::zero(),
            Envelope::Continuum(s) => Complex::new(T::lit(s.amplitude(t)), T::zero()),
            Envelope::Discrete(p) => p.amplitude_at(t),
        }
    }
}

fn expi<T: Real>(x: f64) -> Complex<T> {
    Complex::new(T::lit(x.cos()), T::lit(x.sin()))
}

/// Drive kernel `g(t)`: the pulse reaching the emitter directly and via the
/// mirror. Without feedback only the direct path remains.
pub fn drive_kernel<T: Real>(t: f64, pulse: &Envelope<'_, T>, params: &PhysicsParams) -> Complex<T> {
    let half = params.phi / 2.0;
    let direct = pulse.at(t) * expi::<T>(-half);
    if params.feedback {
        pulse.at(t - params.tau) * expi::<T>(half) - direct
    } else {
        -direct
    }
}

fn matmul<T: Real>(a: &[Complex<T>], b: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    T::matmul(a, b, d, d, d)
}

fn adjoint<T: Real>(a: &[Complex<T>], d: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
    out
}

/// `(P X)[(j,q), c] = √q X[(j,q−1), c]`.
fn shift_rows<T: Real>(x: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let d = 2 * (n + 1);
    let mut out = vec![Complex::zero(); d * d];
    for j in 0..2 {
        for q in 1..=n {
            let (to, from) = (j * (n + 1) + q, j * (n + 1) + q - 1);
            let f = T::lit((q as f64).sqrt());
            for c in 0..d {
                out[to * d + c] = x[from * d + c] * f;
            }
        }
    }
    out
}

/// `(X Pᵀ)[r, (k,p)] = √p X[r, (k,p−1)]`.
fn shift_cols<T: Real>(x: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let d = 2 * (n + 1);
    let mut out = vec![Complex::zero(); d * d];
    for r in 0..d {
        for k in 0..2 {
            for p in 1..=n {
                let (to, from) = (k * (n + 1) + p, k * (n + 1) + p - 1);
                out[r * d + to] = x[r * d + from] * T::lit((p as f64).sqrt());
            }
        }
    }
    out
}

/// Time derivatives of `(E, σ₋)`. `delayed` is `None` while `t < τ`.
pub fn rhs_matrices<T: Real>(
    state: &HeisenbergState<T>,
    delayed: Option<(&[Complex<T>], &[Complex<T>])>,
    g: Complex<T>,
    params: &PhysicsParams,
) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    let n = state.n;
    let d = state.dim();
    let gamma = T::lit(params.gamma);
    let sg = T::lit(params.gamma.sqrt());
    let (e, s) = (&state.e_mat, &state.s_mat);

    let ps = shift_rows(s, n);
    let ps_adj = adjoint(&ps, d);
    let mut de: Vec<Complex<T>> = (0..d * d)
        .map(|i| -e[i] * (gamma + gamma) - (g.conj() * ps[i] + g * ps_adj[i]) * sg)
        .collect();

    let mut one_minus_2e: Vec<Complex<T>> = e.iter().map(|z| -(*z + *z)).collect();
    for i in 0..d {
        one_minus_2e[i * d + i] += T::one();
    }
    let drive = shift_cols(&one_minus_2e, n);
    let mut ds: Vec<Complex<T>> = (0..d * d)
        .map(|i| -s[i] * gamma - g * drive[i] * sg)
        .collect();

    if let Some((_, sd)) = delayed {
        let (em, ep) = (expi::<T>(-params.phi), expi::<T>(params.phi));
        let a = matmul(&adjoint(sd, d), s, d);
        let b = matmul(&adjoint(s, d), sd, d);
        let esd = matmul(e, sd, d);
        for i in 0..d * d {
            de[i] += (em * a[i] + ep * b[i]) * gamma;
            ds[i] += ep * (sd[i] - esd[i] - esd[i]) * gamma;
        }
    }
    (de, ds)
}

struct Snapshot<T: Real> {
    e: Vec<Complex<T>>,
    s: Vec<Complex<T>>,
    de: Vec<Complex<T>>,
    ds: Vec<Complex<T>>,
}

/// Ring of the last `l + 1` grid states with their slopes.
pub struct HistoryBuffer<T: Real> {
    ring: Vec<Option<Snapshot<T>>>,
    newest: Option<usize>,
}

impl<T: Real> HistoryBuffer<T> {
    pub fn new(l: usize) -> Self {
        Self {
            ring: (0..l + 1).map(|_| None).collect(),
            newest: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.ring.len()
    }

    fn push(&mut self, k: usize, snap: Snapshot<T>) {
        debug_assert!(self.newest.map_or(k == 0, |m| m + 1 == k));
        let cap = self.ring.len();
        self.ring[k % cap] = Some(snap);
        self.newest = Some(k);
    }

    fn get(&self, k: usize) -> Result<&Snapshot<T>> {
        let newest = self
            .newest
            .ok_or_else(|| Error::contract("delay history is empty"))?;
        let cap = self.ring.len();
        if k > newest || newest - k >= cap {
            return Err(Error::contract(format!(
                "grid point {k} is outside the stored history ({}..={newest})",
                (newest + 1).saturating_sub(cap)
            )));
        }
        self.ring[k % cap]
            .as_ref()
            .ok_or_else(|| Error::contract(format!("grid point {k} was never stored")))
    }
}

type Pair<T> = Option<(Vec<Complex<T>>, Vec<Complex<T>>)>;

fn dref<T: Real>(x: &Pair<T>) -> Option<(&[Complex<T>], &[Complex<T>])> {
    x.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()))
}

fn axpy<T: Real>(x: &[Complex<T>], a: T, y: &[Complex<T>]) -> Vec<Complex<T>> {
    x.iter().zip(y).map(|(u, v)| *u + *v * a).collect()
}

/// Everything the Heisenberg engine needs for one run.
#[derive(Clone, Debug)]
pub struct HeisenbergConfig {
    pub physics: PhysicsParams,
    pub initial: InitialSystem,
    pub pulse: Option<(PulseShape, usize)>,
}

/// Integrates the matrix delay equations with RK4 and samples `⟨E⟩` at
/// every grid point.
pub fn integrate_dde<T: Real>(cfg: &HeisenbergConfig) -> Result<(TraceRecord, HeisenbergState<T>)> {
    let phys = &cfg.physics;
    let (shape, n) = match &cfg.pulse {
        Some((s, n)) => (Some(s), *n),
        None => (None, 0),
    };
    if let Some(s) = shape {
        s.validate()?;
    }
    let env: Envelope<'_, T> = match shape {
        Some(s) if n > 0 => Envelope::Continuum(s),
        _ => Envelope::Vacuum,
    };
    let (cg, ce) = cfg.initial.amplitudes::<T>();
    let h = phys.dt;
    let hh = T::lit(h);
    let l = phys.delay_steps();
    let mut hist = HistoryBuffer::<T>::new(l);
    let mut st = HeisenbergState::<T>::initial(n);
    let tf = |x: T| x.to_f64().unwrap_or(f64::NAN);

    let mut trace = TraceRecord {
        warnings: phys.warnings(),
        ..Default::default()
    };
    trace.push(0.0, tf(st.excitation(cg, ce)), None, None, None);
    let mut worst_herm = 0.0f64;

    for k in 0..phys.n_steps() {
        let t = k as f64 * h;
        let active = phys.feedback && k >= l;
        let d0 = if active {
            let s = hist.get(k - l)?;
            Some((s.e.clone(), s.s.clone()))
        } else {
            None
        };
        let k1 = rhs_matrices(&st, dref(&d0), drive_kernel(t, &env, phys), phys);
        hist.push(
            k,
            Snapshot {
                e: st.e_mat.clone(),
                s: st.s_mat.clone(),
                de: k1.0.clone(),
                ds: k1.1.clone(),
            },
        );
        let (dmid, d1) = if active {
            let a = hist.get(k - l)?;
            let b = hist.get(k - l + 1)?;
            let herm = |y0: &[Complex<T>], y1: &[Complex<T>], s0: &[Complex<T>], s1: &[Complex<T>]| {
                let eighth = T::lit(h / 8.0);
                let half = T::lit(0.5);
                (0..y0.len())
                    .map(|i| (y0[i] + y1[i]) * half + (s0[i] - s1[i]) * eighth)
                    .collect::<Vec<_>>()
            };
            (
                Some((herm(&a.e, &b.e, &a.de, &b.de), herm(&a.s, &b.s, &a.ds, &b.ds))),
                Some((b.e.clone(), b.s.clone())),
            )
        } else {
            (None, None)
        };

        let half = hh * T::lit(0.5);
        let gm = drive_kernel(t + 0.5 * h, &env, phys);
        let s2 = HeisenbergState {
            n,
            e_mat: axpy(&st.e_mat, half, &k1.0),
            s_mat: axpy(&st.s_mat, half, &k1.1),
            t: t + 0.5 * h,
        };
        let k2 = rhs_matrices(&s2, dref(&dmid), gm, phys);
        let s3 = HeisenbergState {
            n,
            e_mat: axpy(&st.e_mat, half, &k2.0),
            s_mat: axpy(&st.s_mat, half, &k2.1),
            t: t + 0.5 * h,
        };
        let k3 = rhs_matrices(&s3, dref(&dmid), gm, phys);
        let s4 = HeisenbergState {
            n,
            e_mat: axpy(&st.e_mat, hh, &k3.0),
            s_mat: axpy(&st.s_mat, hh, &k3.1),
            t: t + h,
        };
        let k4 = rhs_matrices(&s4, dref(&d1), drive_kernel(t + h, &env, phys), phys);

        let sixth = hh / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..st.e_mat.len() {
            st.e_mat[i] += (k1.0[i] + k2.0[i] * two + k3.0[i] * two + k4.0[i]) * sixth;
            st.s_mat[i] += (k1.1[i] + k2.1[i] * two + k3.1[i] * two + k4.1[i]) * sixth;
        }
        st.t = (k + 1) as f64 * h;
        if !st.is_finite() {
            return Err(Error::Numerical {
                context: "non-finite matrix element".into(),
            }
            .at_step(k, st.t));
        }
        let herm = tf(st.hermiticity_error());
        worst_herm = worst_herm.max(herm);
        trace.push(st.t, tf(st.excitation(cg, ce)), None, None, None);
    }
    if worst_herm > HERMITICITY_TOL {
        trace
            .warnings
            .push(format!("E lost Hermiticity: max |E - E^H| = {worst_herm:.3e}"));
    }
    trace.hermiticity = Some(worst_herm);
    Ok((trace, st))
}
