//! Stroboscopic time-bin evolution with delayed feedback.
//!
//! Chain layout at the start of step `k` (feedback on, delay `l` steps):
//!
//! ```text
//! [ k-l | k-l+1 | ... | k-1 | S | pulse bins ... ]
//!   ^ center
//! ```
//!
//! The oldest loop bin is swapped up to the emitter, the emitter is swapped
//! past the fresh bin `k`, the two reservoir bins are fused into one `p²`
//! site and the `2p² × 2p²` step unitary is applied. The feedback bin then
//! travels back to the left edge and is traced out, leaving its
//! entanglement in the environment bond.
//!
//! Bins before the first round trip (`k < l`) meet vacuum ancillas labelled
//! `-l..-1`. Without feedback the loop is empty and each step pairs the
//! fresh bin with a throwaway vacuum ancilla.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::mps::{reduced_density, vacuum_bin, MpsChain, Site, SiteKind};
use crate::pulse::{discretize_pulse, n_photon_mps, PulseShape};
use crate::scalar::Real;
use crate::tensor::{split_matrix, unitary_from_generator, DenseTensor, TruncationPolicy};

/// `Γ·Δt` above which the first-order step is flagged.
pub const COARSE_STEP_WARNING: f64 = 0.1;

/// Physical and grid parameters shared by both engines.
///
/// `dt` is the MPS time-bin width or the Heisenberg RK4 step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsParams {
    /// Decay rate Γ in ps⁻¹.
    pub gamma: f64,
    /// Round-trip delay τ in ps.
    pub tau: f64,
    /// Feedback phase φ = ω₀τ in radians.
    pub phi: f64,
    pub dt: f64,
    pub t_max: f64,
    /// With `false` the mirror is absent: two open channels, no return.
    pub feedback: bool,
    delay_steps: usize,
    n_steps: usize,
}

fn integral_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = r.round();
    if k >= 0.0 && (r - k).abs() <= 1e-9 * r.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

impl PhysicsParams {
    pub fn new(gamma: f64, tau: f64, phi: f64, dt: f64, t_max: f64, feedback: bool) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::config("gamma", format!("must be finite and >= 0, got {gamma}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {dt}")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::config("t_max", format!("must be positive, got {t_max}")));
        }
        if !phi.is_finite() {
            return Err(Error::config("phi", "must be finite"));
        }
        let n_steps = integral_ratio(t_max, dt).ok_or_else(|| {
            Error::config("t_max", format!("t_max = {t_max} is not a multiple of dt = {dt}"))
        })?;
        let delay_steps = if feedback {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::config("tau", format!("must be positive, got {tau}")));
            }
            match integral_ratio(tau, dt) {
                Some(l) if l >= 1 => l,
                _ => {
                    return Err(Error::config(
                        "tau",
                        format!("delay tau = {tau} is not a multiple of the step dt = {dt}"),
                    ))
                }
            }
        } else {
            0
        };
        Ok(Self {
            gamma,
            tau,
            phi,
            dt,
            t_max,
            feedback,
            delay_steps,
            n_steps,
        })
    }

    /// `l = τ/Δt`; zero without feedback.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn warnings(&self) -> Vec<String> {
        let g = self.gamma * self.dt;
        if g > COARSE_STEP_WARNING {
            vec![format!("gamma*dt = {g:.3} exceeds {COARSE_STEP_WARNING}; first-order step is coarse")]
        } else {
            Vec::new()
        }
    }
}

/// Initial emitter state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialSystem {
    Ground,
    Excited,
    Superposition { c_g: (f64, f64), c_e: (f64, f64) },
}

impl InitialSystem {
    pub fn amplitudes<T: Real>(&self) -> (Complex<T>, Complex<T>) {
        let c = |z: (f64, f64)| Complex::new(T::lit(z.0), T::lit(z.1));
        match *self {
            InitialSystem::Ground => (c((1.0, 0.0)), c((0.0, 0.0))),
            InitialSystem::Excited => (c((0.0, 0.0)), c((1.0, 0.0))),
            InitialSystem::Superposition { c_g, c_e } => (c(c_g), c(c_e)),
        }
    }
}

/// Sampled observables of one run. Columns have equal length; bond and
/// norm columns are `None` for engines that do not produce them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRecord {
    pub times: Vec<f64>,
    pub excitation: Vec<f64>,
    pub max_bond: Vec<Option<usize>>,
    pub norm_drift: Vec<Option<f64>>,
    /// Cumulative discarded weight.
    pub discarded: Vec<Option<f64>>,
    /// Largest `|E − E†|` seen by the Heisenberg engine.
    pub hermiticity: Option<f64>,
    pub warnings: Vec<String>,
}

impl TraceRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, e: f64, bond: Option<usize>, drift: Option<f64>, disc: Option<f64>) {
        self.times.push(t);
        self.excitation.push(e);
        self.max_bond.push(bond);
        self.norm_drift.push(drift);
        self.discarded.push(disc);
    }

    /// Excitation at the sample closest to `t`.
    pub fn excitation_at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.excitation[i])
    }

    /// Time and value of the largest bond extent.
    pub fn peak_bond(&self) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (t, b) in self.times.iter().zip(&self.max_bond) {
            if let Some(b) = *b {
                if best.is_none_or(|(_, m)| b > m) {
                    best = Some((*t, b));
                }
            }
        }
        best
    }
}

/// Step unitary on `system ⊗ present bin ⊗ feedback bin`, basis index
/// `s·p² + i_new·p + i_fb` with `s = 0` ground and `s = 1` excited.
pub fn build_step_unitary<T: Real>(params: &PhysicsParams, p: usize) -> Result<DenseTensor<T>> {
    if p < 2 {
        return Err(Error::contract(format!("bin dimension p = {p} must be at least 2")));
    }
    let d = 2 * p * p;
    let idx = |s: usize, n: usize, f: usize| s * p * p + n * p + f;
    let amp = T::lit((params.gamma * params.dt).sqrt());
    let fb_phase = Complex::new(T::lit((-params.phi).cos()), T::lit((-params.phi).sin()));
    // A = b†_new σ₋ − e^{−iφ} b†_fb σ₋ ; M = −√(ΓΔt)(A − A†)
    let mut a = vec![Complex::<T>::zero(); d * d];
    for n in 0..p {
        for f in 0..p {
            let col = idx(1, n, f);
            if n + 1 < p {
                a[idx(0, n + 1, f) * d + col] += Complex::new(T::lit(((n + 1) as f64).sqrt()), T::zero());
            }
            if f + 1 < p {
                a[idx(0, n, f + 1) * d + col] -= fb_phase * T::lit(((f + 1) as f64).sqrt());
            }
        }
    }
    let mut m = vec![Complex::<T>::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] = -(a[i * d + j] - a[j * d + i].conj()) * amp;
        }
    }
    unitary_from_generator(&DenseTensor::new(vec![d, d], m)?)
}

/// The step unitary in the fused layout used by [`evolve_step`]: basis
/// index `(i_fb·p + i_new)·2 + s`, i.e. the composite reservoir site
/// followed by the emitter.
#[derive(Clone, Debug)]
pub struct StepGate<T: Real> {
    pub p: usize,
    matrix: DenseTensor<T>,
}

impl<T: Real> StepGate<T> {
    pub fn new(params: &PhysicsParams, p: usize) -> Result<Self> {
        let u = build_step_unitary::<T>(params, p)?;
        Ok(Self::from_unitary(&u, p))
    }

    pub fn from_unitary(u: &DenseTensor<T>, p: usize) -> Self {
        let d = 2 * p * p;
        let spec = |s: usize, n: usize, f: usize| s * p * p + n * p + f;
        let fused = |s: usize, n: usize, f: usize| (f * p + n) * 2 + s;
        let mut m = vec![Complex::zero(); d * d];
        for s in 0..2 {
            for n in 0..p {
                for f in 0..p {
                    for s2 in 0..2 {
                        for n2 in 0..p {
                            for f2 in 0..p {
                                m[fused(s, n, f) * d + fused(s2, n2, f2)] =
                                    u.data()[spec(s, n, f) * d + spec(s2, n2, f2)];
                            }
                        }
                    }
                }
            }
        }
        Self {
            p,
            matrix: DenseTensor::new(vec![d, d], m).expect("square gate"),
        }
    }

    pub fn matrix(&self) -> &DenseTensor<T> {
        &self.matrix
    }
}

/// Result of one stroboscopic step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome<T> {
    /// `⟨E⟩` after the step.
    pub excitation: T,
    /// `⟨ψ|ψ⟩` after the step.
    pub norm_sqr: T,
    /// Weight discarded during this step.
    pub discarded: T,
}

fn bin_site<T: Real>(k: i64, p: usize) -> Site<T> {
    Site {
        kind: SiteKind::TimeBin(k),
        tensor: vacuum_bin(p),
    }
}

/// Vacuum bin threaded onto an existing bond of extent `chi`:
/// `A[a, i, b] = δ_ab δ_i0`, isometric from both sides.
fn vacuum_on_bond<T: Real>(k: i64, p: usize, chi: usize) -> Site<T> {
    let mut t = DenseTensor::zeros(vec![chi, p, chi]);
    for a in 0..chi {
        t.set(&[a, 0, a], Complex::new(T::one(), T::zero()));
    }
    Site {
        kind: SiteKind::TimeBin(k),
        tensor: t,
    }
}

/// Advances the chain by step `k` (see the module docs for the layout).
///
/// `loop_len` is the delay `l` in steps, or zero without feedback.
pub fn evolve_step<T: Real>(
    chain: &mut MpsChain<T>,
    k: usize,
    gate: &StepGate<T>,
    policy: TruncationPolicy,
    loop_len: usize,
) -> Result<StepOutcome<T>> {
    let p = gate.p;
    let fl = loop_len.max(1);
    let before = chain.discarded_weight();
    if loop_len == 0 {
        let env = chain.site(0).left_bond();
        chain.insert_site(0, vacuum_on_bond(-1, p, env));
    }
    if chain.site(fl).kind != SiteKind::System {
        return Err(Error::contract(format!(
            "step {k}: expected the emitter at position {fl}, found {:?}",
            chain.site(fl).kind
        )));
    }
    for i in 0..fl - 1 {
        chain.swap_sites(i, policy)?;
    }
    let fresh = SiteKind::TimeBin(k as i64);
    if fl + 1 >= chain.len() || chain.site(fl + 1).kind != fresh {
        let chi = chain.site(fl).right_bond();
        chain.insert_site(fl + 1, vacuum_on_bond(k as i64, p, chi));
    }
    chain.swap_sites(fl, policy)?;

    // fused gate on [fb, new, S] at fl-1, fl, fl+1
    let (a, b, chi1, chi2);
    let theta = {
        let sites = chain.sites_mut();
        let (tf, tn, ts) = (&sites[fl - 1].tensor, &sites[fl].tensor, &sites[fl + 1].tensor);
        a = tf.shape()[0];
        chi1 = tf.shape()[2];
        chi2 = tn.shape()[2];
        b = ts.shape()[2];
        let fn_ = T::matmul(tf.data(), tn.data(), a * p, chi1, p * chi2);
        T::matmul(&fn_, ts.data(), a * p * p, chi2, 2 * b)
    };
    let d = 2 * p * p;
    // theta is [a, d, b]; apply G on the middle index
    let mut moved = vec![Complex::zero(); d * a * b];
    for x in 0..a {
        for y in 0..d {
            for z in 0..b {
                moved[y * a * b + x * b + z] = theta[(x * d + y) * b + z];
            }
        }
    }
    let applied = T::matmul(gate.matrix().data(), &moved, d, d, a * b);
    let mut out = vec![Complex::zero(); a * d * b];
    for y in 0..d {
        for x in 0..a {
            for z in 0..b {
                out[(x * d + y) * b + z] = applied[y * a * b + x * b + z];
            }
        }
    }

    // composite | emitter, center on the composite
    let f = split_matrix(&out, a * p * p, 2 * b, policy)?;
    let kk = f.rank();
    let mut excitation = T::zero();
    let mut norm = T::zero();
    for (c, &sv) in f.s.iter().enumerate() {
        let w = sv * sv;
        norm += w;
        let row = &f.vh[c * 2 * b..(c + 1) * 2 * b];
        excitation += w * row[b..].iter().map(|z| z.norm_sqr()).sum::<T>();
    }
    let mut composite = f.u;
    for row in composite.chunks_mut(kk) {
        for (z, &sv) in row.iter_mut().zip(&f.s) {
            *z *= sv;
        }
    }
    let emitter = DenseTensor::new(vec![kk, 2, b], f.vh)?;
    chain.add_discarded(f.discarded_weight);

    // composite [a, p_fb, p_new, kk] -> feedback bin | fresh bin, center left
    let g = split_matrix(&composite, a * p, p * kk, policy)?;
    let k2 = g.rank();
    let mut fb = g.u;
    for row in fb.chunks_mut(k2) {
        for (z, &sv) in row.iter_mut().zip(&g.s) {
            *z *= sv;
        }
    }
    chain.add_discarded(g.discarded_weight);
    {
        let sites = chain.sites_mut();
        sites[fl - 1].tensor = DenseTensor::new(vec![a, p, k2], fb)?;
        sites[fl].tensor = DenseTensor::new(vec![k2, p, kk], g.vh)?;
        sites[fl + 1].tensor = emitter;
        for s in &sites[fl - 1..=fl + 1] {
            s.tensor.ensure_finite("step gate")?;
        }
    }
    chain.set_center(fl - 1);

    for i in (0..fl - 1).rev() {
        chain.swap_sites(i, policy)?;
    }
    chain.discard_left_site()?;
    if loop_len == 0 {
        chain.discard_left_site()?;
    }
    Ok(StepOutcome {
        excitation,
        norm_sqr: norm,
        discarded: chain.discarded_weight() - before,
    })
}

/// Everything the MPS engine needs for one run.
#[derive(Clone, Debug)]
pub struct MpsConfig {
    pub physics: PhysicsParams,
    pub initial: InitialSystem,
    /// Pulse envelope and photon number.
    pub pulse: Option<(PulseShape, usize)>,
    /// Bin dimension (photon cutoff + 1).
    pub p: usize,
    pub policy: TruncationPolicy,
    /// Per-step discarded weight that triggers a warning.
    pub alarm: f64,
}

/// Builds `[loop ancillas | S | pulse bins]` in right-canonical form with
/// the center on position 0.
pub fn initial_chain<T: Real>(cfg: &MpsConfig) -> Result<MpsChain<T>> {
    let p = cfg.p;
    let l = cfg.physics.delay_steps();
    let (cg, ce) = cfg.initial.amplitudes::<T>();
    let norm = (cg.norm_sqr() + ce.norm_sqr()).to_f64().unwrap_or(f64::NAN);
    if (norm - 1.0).abs() > T::CHECK_TOL {
        return Err(Error::config("initial", format!("emitter state norm {norm} is not 1")));
    }
    let mut sites: Vec<Site<T>> = (0..l).map(|j| bin_site(j as i64 - l as i64, p)).collect();
    sites.push(Site {
        kind: SiteKind::System,
        tensor: DenseTensor::new(vec![1, 2, 1], vec![cg, ce])?,
    });
    if let Some((shape, n)) = cfg.pulse {
        if n > 0 {
            let pulse = discretize_pulse::<T>(&shape, cfg.physics.dt, cfg.physics.n_steps())?;
            let tensors = n_photon_mps(&pulse, n, p)?;
            for (j, t) in tensors.into_iter().enumerate() {
                sites.push(Site {
                    kind: SiteKind::TimeBin((pulse.first_bin + j) as i64),
                    tensor: t,
                });
            }
        }
    }
    let last = sites.len() - 1;
    let mut chain = MpsChain::from_sites(sites, last)?;
    // the pulse fragment is not canonical; sweep it right-isometric
    chain.move_center(0)?;
    Ok(chain)
}

/// Runs the time-bin MPS engine and samples `⟨E⟩` after every step.
pub fn run_mps_simulation<T: Real>(cfg: &MpsConfig) -> Result<TraceRecord> {
    let phys = &cfg.physics;
    if let Some((_, n)) = cfg.pulse {
        if cfg.p < n + 1 {
            return Err(Error::config(
                "numerics.p",
                format!("bin dimension {} cannot hold {n} photons", cfg.p),
            ));
        }
    }
    let mut chain = initial_chain::<T>(cfg)?;
    let gate = StepGate::<T>::new(phys, cfg.p)?;
    let l = phys.delay_steps();
    let mut trace = TraceRecord {
        warnings: phys.warnings(),
        ..Default::default()
    };
    let s_pos = chain.position_of(SiteKind::System).expect("emitter present");
    let e0 = chain
        .local_expectation(s_pos, &crate::mps::excitation_operator())?
        .re;
    chain.move_center(0)?;
    let tf = |x: T| x.to_f64().unwrap_or(f64::NAN);
    trace.push(
        0.0,
        tf(e0),
        Some(chain.max_bond()),
        Some((tf(chain.norm_sqr()) - 1.0).abs()),
        Some(tf(chain.discarded_weight())),
    );
    for k in 0..phys.n_steps() {
        let t = (k + 1) as f64 * phys.dt;
        let out = evolve_step(&mut chain, k, &gate, cfg.policy, l).map_err(|e| e.at_step(k, t))?;
        let e = tf(out.excitation);
        if !e.is_finite() {
            return Err(Error::Numerical {
                context: "non-finite excitation".into(),
            }
            .at_step(k, t));
        }
        let dw = tf(out.discarded);
        if dw > cfg.alarm {
            trace
                .warnings
                .push(format!("step {k} (t = {t:.4} ps) discarded weight {dw:.3e} exceeds alarm {:.1e}", cfg.alarm));
        }
        trace.push(
            t,
            e,
            Some(chain.max_bond()),
            Some((tf(out.norm_sqr) - 1.0).abs()),
            Some(tf(chain.discarded_weight())),
        );
    }
    Ok(trace)
}

/// Local reduced density matrix of the emitter, wherever it sits.
pub fn emitter_density<T: Real>(chain: &mut MpsChain<T>) -> Result<Vec<Complex<T>>> {
    let pos = chain
        .position_of(SiteKind::System)
        .ok_or_else(|| Error::contract("chain has no emitter site"))?;
    chain.move_center(pos)?;
    Ok(reduced_density(&chain.site(pos).tensor))
}
