//! Dense state-vector reference used by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64 as C;
use wgfeedback::evolution::{build_step_unitary, MpsConfig};
use wgfeedback::pulse::discretize_pulse;

/// Amplitudes over a tensor product of sites with extents `dims`; the last
/// site varies fastest.
#[derive(Clone, Debug)]
pub struct DenseState {
    pub dims: Vec<usize>,
    pub amps: Vec<C>,
}

impl DenseState {
    /// `|0…0⟩` with the first site set to `first`.
    pub fn product(dims: Vec<usize>, first: &[C]) -> Self {
        let total: usize = dims.iter().product();
        let rest = total / dims[0];
        let mut amps = vec![C::new(0.0, 0.0); total];
        for (i, a) in first.iter().enumerate() {
            amps[i * rest] = *a;
        }
        Self { dims, amps }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len() - 1).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    /// Applies `op[out, in]` to the ordered sites `sites`; the operator
    /// basis index is row-major over those sites.
    pub fn apply(&mut self, sites: &[usize], op: &[C]) {
        let strides = self.strides();
        let local: Vec<usize> = sites.iter().map(|&s| self.dims[s]).collect();
        let d: usize = local.iter().product();
        assert_eq!(op.len(), d * d);
        let mut out = vec![C::new(0.0, 0.0); self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut col = 0;
            let mut base = idx;
            for (k, &s) in sites.iter().enumerate() {
                let digit = (idx / strides[s]) % self.dims[s];
                col = col * local[k] + digit;
                base -= digit * strides[s];
            }
            for row in 0..d {
                let g = op[row * d + col];
                if g.norm_sqr() == 0.0 {
                    continue;
                }
                let mut target = base;
                let mut r = row;
                for k in (0..sites.len()).rev() {
                    target += (r % local[k]) * strides[sites[k]];
                    r /= local[k];
                }
                out[target] += g * amp;
            }
        }
        self.amps = out;
    }

    /// Applies the creation operator `b†` on `site` (truncated at the
    /// site extent).
    pub fn create(&self, site: usize, weight: C) -> Vec<C> {
        let strides = self.strides();
        let p = self.dims[site];
        let mut out = vec![C::new(0.0, 0.0); self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            let n = (idx / strides[site]) % p;
            if n + 1 < p {
                out[idx + strides[site]] += weight * ((n + 1) as f64).sqrt() * amp;
            }
        }
        out
    }

    /// `Σ |ψ|²` over basis states where `site` is in `level`.
    pub fn population(&self, site: usize, level: usize) -> f64 {
        let strides = self.strides();
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i / strides[site]) % self.dims[site] == level)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Reduced density matrix of `site`.
    pub fn reduced(&self, site: usize) -> Vec<C> {
        let strides = self.strides();
        let d = self.dims[site];
        let mut rho = vec![C::new(0.0, 0.0); d * d];
        let st = strides[site];
        for i in (0..self.amps.len()).filter(|i| (i / st).is_multiple_of(d)) {
            for x in 0..d {
                for y in 0..d {
                    rho[x * d + y] += self.amps[i + x * st] * self.amps[i + y * st].conj();
                }
            }
        }
        rho
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Applies `(Σ_k a_k b_k†)ⁿ/√(n!)` on the listed sites, by repeated
/// application of the creation operator.
pub fn add_photons(mut st: DenseState, sites: &[usize], a: &[C], n: usize) -> DenseState {
    for _ in 0..n {
        let mut acc = vec![C::new(0.0, 0.0); st.amps.len()];
        for (&site, ak) in sites.iter().zip(a) {
            for (x, y) in acc.iter_mut().zip(st.create(site, *ak)) {
                *x += y;
            }
        }
        st.amps = acc;
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    for z in &mut st.amps {
        *z /= fact.sqrt();
    }
    st
}

/// `(Σ_k a_k b_k†)ⁿ/√(n!)|0…0⟩` on `dims.len()` bins.
pub fn brute_force_pulse(dims: Vec<usize>, a: &[C], n: usize) -> DenseState {
    let sites: Vec<usize> = (0..dims.len()).collect();
    let vacuum = DenseState::product(dims, &[C::new(1.0, 0.0)]);
    add_photons(vacuum, &sites, a, n)
}

/// Excitation after every step, computed on the dense vector. Sites are
/// `[S, bins -l..N-1]` with feedback and `[S, bins 0..N-1, fb ports 0..N-1]`
/// without.
pub fn dense_run(cfg: &MpsConfig) -> (Vec<f64>, DenseState) {
    let phys = &cfg.physics;
    let p = cfg.p;
    let n_steps = phys.n_steps();
    let l = phys.delay_steps();
    let extra = if phys.feedback { l } else { n_steps };
    let bin = |b: i64| -> usize {
        if phys.feedback {
            (1 + b + l as i64) as usize
        } else {
            1 + b as usize
        }
    };
    let mut dims = vec![2];
    dims.extend(std::iter::repeat_n(p, n_steps + extra));
    let (cg, ce) = cfg.initial.amplitudes::<f64>();
    let mut st = DenseState::product(dims, &[cg, ce]);
    if let Some((shape, n)) = cfg.pulse {
        let pulse = discretize_pulse::<f64>(&shape, phys.dt, n_steps).unwrap();
        let sites: Vec<usize> = (0..n_steps).map(|k| bin(k as i64)).collect();
        let a: Vec<C> = (0..n_steps).map(|k| pulse.coeff(k) * phys.dt.sqrt()).collect();
        st = add_photons(st, &sites, &a, n);
    }
    let u = build_step_unitary::<f64>(phys, p).unwrap();
    let mut trace = vec![st.population(0, 1)];
    for k in 0..n_steps {
        let fb = if phys.feedback {
            bin(k as i64 - l as i64)
        } else {
            1 + n_steps + k
        };
        st.apply(&[0, bin(k as i64), fb], u.data());
        trace.push(st.population(0, 1));
    }
    (trace, st)
}

