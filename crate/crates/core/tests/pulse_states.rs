//! n-photon pulse states against the brute-force `(a_f†)ⁿ` expansion.

mod common;

use common::{brute_force_pulse, DenseState};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use wgfeedback::mps::{MpsChain, Site, SiteKind};
use wgfeedback::pulse::{discretize_pulse, n_photon_mps, DiscretizedPulse, PulseShape};

fn dense_from_mps(pulse: &DiscretizedPulse<f64>, n: usize, p: usize) -> Vec<C> {
    let sites = n_photon_mps(pulse, n, p)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(k, tensor)| Site {
            kind: SiteKind::TimeBin(k as i64),
            tensor,
        })
        .collect();
    let chain = MpsChain::from_sites(sites, 0).unwrap();
    chain.to_state_vector().unwrap().into_data()
}

/// `⟨N⟩` and `⟨N²⟩` of the total photon number.
fn number_moments(st: &DenseState) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (idx, a) in st.amps.iter().enumerate() {
        let mut rest = idx;
        let mut total = 0usize;
        for &d in st.dims.iter().rev() {
            total += rest % d;
            rest /= d;
        }
        m1 += total as f64 * a.norm_sqr();
        m2 += (total * total) as f64 * a.norm_sqr();
    }
    (m1, m2)
}

fn check(pulse: &DiscretizedPulse<f64>, n: usize, p: usize) -> Result<(), TestCaseError> {
    let psi = dense_from_mps(pulse, n, p);
    let a: Vec<C> = pulse.coeffs.iter().map(|f| f * pulse.dt.sqrt()).collect();
    let reference = brute_force_pulse(vec![p; pulse.n_bins()], &a, n);
    prop_assert_eq!(psi.len(), reference.amps.len());
    for (x, y) in psi.iter().zip(&reference.amps) {
        prop_assert!((x - y).norm() < 1e-12, "{} vs {}", x, y);
    }
    let st = DenseState {
        dims: vec![p; pulse.n_bins()],
        amps: psi,
    };
    prop_assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
    let (m1, m2) = number_moments(&st);
    prop_assert!((m1 - n as f64).abs() < 1e-10);
    prop_assert!((m2 - m1 * m1).abs() < 1e-10, "variance {}", m2 - m1 * m1);
    Ok(())
}

#[test]
fn three_photons_in_four_bins() {
    let shape = PulseShape::Rectangular {
        t_start: 0.0,
        duration: 0.4,
    };
    let pulse = discretize_pulse::<f64>(&shape, 0.1, 4).unwrap();
    check(&pulse, 3, 4).unwrap();
}

#[test]
fn truncated_gaussian_on_six_bins() {
    let shape = PulseShape::Gaussian {
        center: 0.3,
        width: 0.1,
        half_window: 0.3,
    };
    let pulse = discretize_pulse::<f64>(&shape, 0.1, 6).unwrap();
    assert_eq!(pulse.n_bins(), 6);
    check(&pulse, 2, 3).unwrap();
    check(&pulse, 2, 4).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_brute_force_expansion(
        raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=6),
        n in 0usize..=3,
        spare in 0usize..=1,
        dt in 0.01f64..0.5,
    ) {
        let norm: f64 = raw.iter().map(|(re, im)| re * re + im * im).sum::<f64>() * dt;
        prop_assume!(norm > 1e-6);
        let coeffs: Vec<C> = raw.iter().map(|&(re, im)| C::new(re, im) / norm.sqrt()).collect();
        let pulse = DiscretizedPulse { coeffs, dt, first_bin: 0, raw_norm: 1.0 };
        check(&pulse, n, (n + 1).max(2) + spare)?;
    }
}
