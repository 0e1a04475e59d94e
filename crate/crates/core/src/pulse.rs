//! Quantized pulse envelopes and the exact n-photon time-bin state.
//!
//! Times are in ps and refer to arrival at the emitter: bin `k` covers
//! `[k·dt, (k+1)·dt)` and first meets the emitter during step `k`.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::DenseTensor;

/// Default half-width of the Gaussian support in units of `σ`.
pub const GAUSSIAN_WINDOW_SIGMAS: f64 = 5.0;

/// Continuum envelope `f(t)` with `∫|f|² dt = 1` (in ps^(-1/2)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PulseShape {
    /// Flat top on `[t_start, t_start + duration)`.
    Rectangular { t_start: f64, duration: f64 },
    /// `f(t) ∝ exp(-(t-μ)²/(2σ²))`, cut to `μ ± half_window`.
    Gaussian {
        center: f64,
        width: f64,
        half_window: f64,
    },
}

impl PulseShape {
    /// Gaussian of width `σ` centered at `5σ`, so it rises from about zero
    /// at `t = 0`, with the default `±5σ` support.
    pub fn gaussian(width: f64) -> Self {
        PulseShape::Gaussian {
            center: GAUSSIAN_WINDOW_SIGMAS * width,
            width,
            half_window: GAUSSIAN_WINDOW_SIGMAS * width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PulseShape::Rectangular { t_start, duration } => {
                if !(duration > 0.0 && duration.is_finite() && t_start.is_finite()) {
                    return Err(Error::contract(format!(
                        "rectangular pulse needs a finite positive duration, got {duration}"
                    )));
                }
            }
            PulseShape::Gaussian {
                center,
                width,
                half_window,
            } => {
                if !(width > 0.0 && width.is_finite() && center.is_finite()) {
                    return Err(Error::contract(format!(
                        "Gaussian pulse needs a finite positive width, got {width}"
                    )));
                }
                if !(half_window > 0.0 && half_window.is_finite()) {
                    return Err(Error::contract("Gaussian support window must be finite and positive"));
                }
            }
        }
        Ok(())
    }

    /// Support `[start, end)` in ps.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            PulseShape::Rectangular { t_start, duration } => (t_start, t_start + duration),
            PulseShape::Gaussian {
                center,
                half_window,
                ..
            } => (center - half_window, center + half_window),
        }
    }

    /// Normalized continuum envelope; zero outside the support.
    pub fn amplitude(&self, t: f64) -> f64 {
        let (a, b) = self.support();
        if t < a || t >= b {
            return 0.0;
        }
        match *self {
            PulseShape::Rectangular { duration, .. } => 1.0 / duration.sqrt(),
            PulseShape::Gaussian { center, width, .. } => {
                let x = (t - center) / width;
                (std::f64::consts::PI * width * width).powf(-0.25) * (-0.5 * x * x).exp()
            }
        }
    }
}

/// Piecewise-constant samples of an envelope on the time-bin grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedPulse<T: Real> {
    /// `f_k` for bins `first_bin ..`, in ps^(-1/2).
    pub coeffs: Vec<Complex<T>>,
    pub dt: f64,
    pub first_bin: usize,
    /// `Σ|f_k|² dt` of the raw samples, before rescaling.
    pub raw_norm: f64,
}

impl<T: Real> DiscretizedPulse<T> {
    pub fn n_bins(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of grid bin `k` (zero outside the pulse).
    pub fn coeff(&self, k: usize) -> Complex<T> {
        k.checked_sub(self.first_bin)
            .and_then(|i| self.coeffs.get(i).copied())
            .unwrap_or_else(Complex::zero)
    }

    /// Amplitude of the bin containing `t`; zero outside the pulse.
    pub fn amplitude_at(&self, t: f64) -> Complex<T> {
        if t < 0.0 {
            return Complex::zero();
        }
        self.coeff((t / self.dt + 1e-9).floor() as usize)
    }

    pub fn norm(&self) -> T {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<T>() * T::lit(self.dt)
    }
}

/// Samples `shape` at the start of each of `n_bins` bins of width `dt` and
/// rescales so that `Σ|f_k|² dt = 1`.
pub fn discretize_pulse<T: Real>(
    shape: &PulseShape,
    dt: f64,
    n_bins: usize,
) -> Result<DiscretizedPulse<T>> {
    shape.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::contract(format!("bin width must be positive, got {dt}")));
    }
    let (start, end) = shape.support();
    let grid_end = n_bins as f64 * dt;
    if start < -1e-9 * dt || end > grid_end + 1e-9 * dt {
        return Err(Error::contract(format!(
            "grid [0, {grid_end}) ps does not cover the pulse support [{start}, {end})"
        )));
    }
    // bins whose start lies inside the support, robust to round-off in k·dt
    let eps = 1e-9;
    let first = ((start / dt) - eps).ceil().max(0.0) as usize;
    let last = ((end / dt) - eps).ceil() as usize; // exclusive
    let last = last.min(n_bins);
    let samples: Vec<f64> = (first..last)
        .map(|k| shape.amplitude(((k as f64) * dt).max(start)))
        .collect();
    let raw_norm: f64 = samples.iter().map(|f| f * f).sum::<f64>() * dt;
    if samples.is_empty() || raw_norm <= 0.0 {
        return Err(Error::contract(format!(
            "pulse support [{start}, {end}) contains no bin start of the grid with dt = {dt}"
        )));
    }
    let scale = 1.0 / raw_norm.sqrt();
    Ok(DiscretizedPulse {
        coeffs: samples
            .iter()
            .map(|&f| Complex::new(T::lit(f * scale), T::zero()))
            .collect(),
        dt,
        first_bin: first,
        raw_norm,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Site tensors of `(a_f†)ⁿ/√(n!)|0…0⟩` over the pulse bins.
///
/// The bond index counts the photons already placed to the left, so the
/// construction is exact with bond extent `n + 1`. Tensors have shape
/// `[left, p, right]` with unit outer bonds; they are not in canonical form.
pub fn n_photon_mps<T: Real>(
    pulse: &DiscretizedPulse<T>,
    n: usize,
    p: usize,
) -> Result<Vec<DenseTensor<T>>> {
    if p < n + 1 || p < 2 {
        return Err(Error::contract(format!(
            "bin dimension p = {p} cannot hold {n} photons"
        )));
    }
    let nb = pulse.n_bins();
    if nb == 0 {
        return Err(Error::contract("pulse has no bins"));
    }
    let sqrt_dt = T::lit(pulse.dt.sqrt());
    let mut out = Vec::with_capacity(nb);
    for (k, f) in pulse.coeffs.iter().enumerate() {
        let a = *f * sqrt_dt;
        let dl = if k == 0 { 1 } else { n + 1 };
        let dr = if k == nb - 1 { 1 } else { n + 1 };
        let mut t = DenseTensor::zeros(vec![dl, p, dr]);
        for left in 0..dl {
            for i in 0..p {
                let placed = left + i;
                if placed > n || (k == nb - 1 && placed != n) {
                    continue;
                }
                let right = if k == nb - 1 { 0 } else { placed };
                let amp = a.powu(i as u32) / T::lit(factorial(i).sqrt());
                t.set(&[left, i, right], amp);
            }
        }
        out.push(t);
    }
    if let Some(last) = out.last_mut() {
        last.scale(Complex::new(T::lit(factorial(n).sqrt()), T::zero()));
    }
    Ok(out)
}
