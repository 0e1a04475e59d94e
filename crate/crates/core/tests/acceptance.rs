//! Acceptance run: one PASS/FAIL line per criterion at its stated
//! tolerance, followed by the sub-checks behind it.
//!
//! Criteria listed in `DOCUMENTED_FAILURES` are known to miss their target
//! with the configured numerics; the analysis is kept in the decisions
//! ledger. They still print FAIL, but only an unexpected failure makes the
//! run exit non-zero.

mod common;

use std::time::Instant;

use common::{brute_force_pulse, dense_run};
use num_complex::Complex64 as C;
use wgfeedback::evolution::{
    build_step_unitary, run_mps_simulation, InitialSystem, MpsConfig, PhysicsParams, TraceRecord,
};
use wgfeedback::harness::{extract_steady_state, parse_scenario, sweep, SweepAxis};
use wgfeedback::heisenberg::{integrate_dde, HeisenbergConfig, HERMITICITY_TOL};
use wgfeedback::pulse::{discretize_pulse, n_photon_mps, PulseShape};
use wgfeedback::tensor::{contract_pair, DenseTensor};
use wgfeedback::TruncationPolicy;

const DOCUMENTED_FAILURES: &[u8] = &[6, 8];

const GAMMA: f64 = 4.0;
const TAU: f64 = 2.0;
const T_END: f64 = 100.0;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn rect() -> PulseShape {
    PulseShape::Rectangular {
        t_start: 0.1,
        duration: 2.4,
    }
}

fn physics(dt: f64, t_max: f64, feedback: bool) -> PhysicsParams {
    PhysicsParams::new(GAMMA, TAU, TWO_PI, dt, t_max, feedback).unwrap()
}

fn mps(dt: f64, n: usize, t_max: f64, feedback: bool) -> TraceRecord {
    let cfg = MpsConfig {
        physics: physics(dt, t_max, feedback),
        initial: if n == 0 { InitialSystem::Excited } else { InitialSystem::Ground },
        pulse: (n > 0).then(|| (rect(), n)),
        p: (n + 1).max(2),
        policy: TruncationPolicy::default(),
        alarm: 1e-6,
    };
    run_mps_simulation::<f64>(&cfg).unwrap()
}

fn heisenberg(h: f64, n: usize, t_max: f64, feedback: bool) -> TraceRecord {
    let cfg = HeisenbergConfig {
        physics: physics(h, t_max, feedback),
        initial: if n == 0 { InitialSystem::Excited } else { InitialSystem::Ground },
        pulse: (n > 0).then(|| (rect(), n)),
    };
    integrate_dde::<f64>(&cfg).unwrap().0
}

fn steady(trace: &TraceRecord, n: usize) -> f64 {
    let end = if n == 0 { 0.0 } else { 2.5 };
    extract_steady_state(trace, TAU, end).unwrap().value
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b) / b
}

struct Outcome {
    id: u8,
    title: &'static str,
    checks: Vec<(bool, String)>,
    seconds: f64,
}

impl Outcome {
    fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.0)
    }
}

/// Runs that later criteria reuse.
#[derive(Default)]
struct Runs {
    mps: Vec<(String, TraceRecord)>,
    hb: Vec<(String, TraceRecord)>,
    steady_c2: f64,
}

fn check(ok: bool, msg: String) -> (bool, String) {
    (ok, msg)
}

fn criterion_1(_: &mut Runs) -> Vec<(bool, String)> {
    let worst = |t: &TraceRecord| {
        t.times
            .iter()
            .zip(&t.excitation)
            .map(|(t, e)| (e - (-2.0 * GAMMA * t).exp()).abs())
            .fold(0.0, f64::max)
    };
    let m = mps(0.001, 0, 2.0, false);
    let h = heisenberg(0.01, 0, 2.0, false);
    vec![
        check(worst(&m) < 1e-3, format!("mps dt=0.001: max |E - exp(-2Gt)| = {:.2e} (< 1e-3)", worst(&m))),
        check(worst(&h) < 1e-3, format!("heisenberg h=0.01: max |E - exp(-2Gt)| = {:.2e} (< 1e-3)", worst(&h))),
    ]
}

fn criterion_2(runs: &mut Runs) -> Vec<(bool, String)> {
    let m = mps(0.005, 0, T_END, true);
    let v = steady(&m, 0);
    runs.steady_c2 = v;
    let e100 = m.excitation_at(T_END).unwrap();
    let derived = 1.0 / ((1.0 + GAMMA * TAU) * (1.0 + GAMMA * TAU));
    runs.mps.push(("n=0 dt=0.005".into(), m));
    vec![
        check(
            rel(v, 0.0124).abs() < 0.05,
            format!("mps dt=0.005 steady state {v:.6} (E(100) = {e100:.6}) vs 0.0124: {:+.2}% (5%)", 100.0 * rel(v, 0.0124)),
        ),
        check(
            rel(v, derived).abs() < 0.02,
            format!("vs 1/(1+G tau)^2 = {derived:.6}: {:+.2}% (2%)", 100.0 * rel(v, derived)),
        ),
    ]
}

fn criterion_3(runs: &mut Runs) -> Vec<(bool, String)> {
    let m = mps(0.005, 1, T_END, true);
    let h = heisenberg(0.005, 1, T_END, true);
    let em = m.excitation_at(T_END).unwrap();
    let eh = h.excitation_at(T_END).unwrap();
    let diff = m
        .excitation
        .iter()
        .zip(&h.excitation)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    runs.mps.push(("n=1 dt=0.005".into(), m));
    runs.hb.push(("n=1 h=0.005".into(), h));
    vec![
        check(em < 1e-3, format!("mps E(100) = {em:.2e} (< 1e-3)")),
        check(eh < 1e-3, format!("heisenberg E(100) = {eh:.2e} (< 1e-3)")),
        check(diff < 1e-3, format!("max |mps - heisenberg| over the trace = {diff:.2e} (< 1e-3, dt = h = 0.005)")),
    ]
}

fn criterion_4(runs: &mut Runs) -> Vec<(bool, String)> {
    let m = mps(0.05, 3, T_END, true);
    let v = steady(&m, 3);
    let ratio = v / runs.steady_c2;
    runs.mps.push(("n=3 dt=0.05".into(), m));
    vec![
        check(
            rel(v, 0.0234).abs() < 0.10,
            format!("mps dt=0.05 steady state {v:.6} vs 0.0234: {:+.2}% (10%)", 100.0 * rel(v, 0.0234)),
        ),
        check(
            (1.7..=2.1).contains(&ratio),
            format!("ratio to the n=0 value {:.6}: {ratio:.3} (in [1.7, 2.1])", runs.steady_c2),
        ),
    ]
}

fn criterion_5(runs: &mut Runs) -> Vec<(bool, String)> {
    let m2 = mps(0.05, 2, T_END, true);
    let h2 = heisenberg(0.01, 2, T_END, true);
    let h3 = heisenberg(0.01, 3, T_END, true);
    let m3 = &runs.mps.iter().find(|r| r.0 == "n=3 dt=0.05").unwrap().1;
    let (vm2, vm3) = (steady(&m2, 2), steady(m3, 3));
    let (vh2, vh3) = (steady(&h2, 2), steady(&h3, 3));
    runs.mps.push(("n=2 dt=0.05".into(), m2));
    runs.hb.push(("n=2 h=0.01".into(), h2));
    runs.hb.push(("n=3 h=0.01".into(), h3));
    let within = |h: f64, m: f64| h > 0.0 && h.is_finite() && h / m <= 2.0 && m / h <= 2.0;
    vec![
        check(within(vh2, vm2), format!("n=2: heisenberg {vh2:.6} vs mps {vm2:.6}, ratio {:.3} (factor 2)", vh2 / vm2)),
        check(within(vh3, vm3), format!("n=3: heisenberg {vh3:.6} vs mps {vm3:.6}, ratio {:.3} (factor 2)", vh3 / vm3)),
        check(vh3 > vh2 && vm3 > vm2, "ordering n=3 above n=2 in both engines".into()),
    ]
}

fn criterion_6(runs: &mut Runs) -> Vec<(bool, String)> {
    let mut out = Vec::new();
    for (n, label) in [(1, "n=1 dt=0.005"), (2, "n=2 dt=0.05"), (3, "n=3 dt=0.05")] {
        let trace = &runs.mps.iter().find(|r| r.0 == label).unwrap().1;
        let (t, b) = trace.peak_bond().unwrap();
        let target = 0.1 + (n - 1) as f64 * TAU;
        out.push(check(
            (t - target).abs() <= TAU,
            format!("{label}: peak bond {b} at {t} ps, target {target} +/- {TAU} ps"),
        ));
        if n == 3 {
            out.push(check(b >= 200, format!("{label}: peak bond {b} (>= 200)")));
        }
    }
    out
}

const GAUSSIAN_SWEEP: &str = r#"{
  "method": "heisenberg", "gamma": 0.1, "tau": 13.75, "phi_over_2pi": 1, "t_max": 700,
  "initial": "ground", "numerics": {"h": 0.25},
  "pulse": {"shape": "gaussian", "photons": 3, "width": 7}
}"#;

fn gaussian_cells(h: f64, gamma_tau: Vec<f64>, photons: Vec<usize>) -> Vec<(f64, usize, f64)> {
    let mut cfg = parse_scenario(GAUSSIAN_SWEEP).unwrap().config;
    cfg.numerics.h = h;
    let rows = sweep(&cfg, &SweepAxis { gamma_tau, photons }, 1, None).unwrap();
    rows.iter()
        .map(|r| {
            let v = r.steady_state.unwrap_or_else(|| panic!("{:?}", r.error)).value;
            (r.gamma_tau, r.photons, v)
        })
        .collect()
}

fn criterion_7(_: &mut Runs) -> Vec<(bool, String)> {
    let grid: Vec<f64> = (0..=22).map(|i| 0.25 + 0.125 * i as f64).collect();
    let rows = gaussian_cells(0.25, grid, vec![0, 3]);
    let three: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == 3).map(|r| (r.0, r.2)).collect();
    let zero: Vec<f64> = rows.iter().filter(|r| r.1 == 0).map(|r| r.2).collect();
    let (gt_max, v_max) = three.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    vec![
        check(
            (gt_max - 1.375).abs() <= 0.25,
            format!("n=3 maximum at G tau = {gt_max} (1.375 +/- 0.25; G = 0.1/ps, sigma = 7 ps)"),
        ),
        check(
            rel(v_max, 0.097).abs() <= 0.20,
            format!("n=3 peak value {v_max:.6} vs 0.097: {:+.2}% (20%)", 100.0 * rel(v_max, 0.097)),
        ),
        check(
            zero.windows(2).all(|w| w[1] < w[0]),
            format!("n=0 reference monotone decreasing over {} points ({:.4} .. {:.4})", zero.len(), zero[0], zero[zero.len() - 1]),
        ),
    ]
}

fn criterion_8(runs: &mut Runs) -> Vec<(bool, String)> {
    let mut out = Vec::new();

    let slack = |steps: usize| 64.0 * f64::EPSILON * (steps as f64 + 1.0);
    let drift_ok = runs.mps.iter().all(|(_, t)| {
        (0..t.len()).all(|k| t.norm_drift[k].unwrap() <= t.discarded[k].unwrap() + slack(k))
    });
    out.push(check(
        drift_ok,
        format!("norm drift <= cumulative discarded weight (+ round-off) in {} mps runs", runs.mps.len()),
    ));

    let mut worst_u: f64 = 0.0;
    for dt in [0.001, 0.005, 0.025, 0.05] {
        for p in 2..=4 {
            let u = build_step_unitary::<f64>(&physics(dt, 1.0, dt < 0.002), p).unwrap();
            let uu = contract_pair(&u.conj(), &u, &[(0, 0)]).unwrap();
            worst_u = worst_u.max(uu.max_abs_diff(&DenseTensor::identity(2 * p * p)).unwrap());
        }
    }
    out.push(check(worst_u < 1e-12, format!("step unitaries: max |U^H U - 1| = {worst_u:.1e} (< 1e-12)")));

    let pulse = discretize_pulse::<f64>(&rect_on(6), 0.1, 6).unwrap();
    let sites = n_photon_mps(&pulse, 3, 4).unwrap();
    let mut acc = sites[0].clone();
    for s in &sites[1..] {
        let r = acc.rank();
        acc = contract_pair(&acc, s, &[(r - 1, 0)]).unwrap();
    }
    let a: Vec<C> = pulse.coeffs.iter().map(|f| f * pulse.dt.sqrt()).collect();
    let reference = brute_force_pulse(vec![4; 6], &a, 3);
    let pulse_err = acc
        .data()
        .iter()
        .zip(&reference.amps)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let (mut m1, mut m2) = (0.0, 0.0);
    for (idx, z) in acc.data().iter().enumerate() {
        let n: usize = (0..6).map(|k| (idx / 4usize.pow(k)) % 4).sum();
        m1 += n as f64 * z.norm_sqr();
        m2 += (n * n) as f64 * z.norm_sqr();
    }
    let var = (m2 - m1 * m1).abs();
    out.push(check(
        pulse_err < 1e-12 && var < 1e-10,
        format!("3-photon pulse on 6 bins: max deviation {pulse_err:.1e} (< 1e-12), variance {var:.1e} (< 1e-10)"),
    ));

    let oracle_cfg = MpsConfig {
        physics: PhysicsParams::new(GAMMA, 0.15, TWO_PI, 0.05, 0.25, true).unwrap(),
        initial: InitialSystem::Ground,
        pulse: Some((PulseShape::Rectangular { t_start: 0.0, duration: 0.15 }, 2)),
        p: 3,
        policy: TruncationPolicy::exact(),
        alarm: 1.0,
    };
    let tr = run_mps_simulation::<f64>(&oracle_cfg).unwrap();
    let (dense, _) = dense_run(&oracle_cfg);
    let oracle_err = tr
        .excitation
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(check(
        oracle_err < 1e-10,
        format!("mps vs dense state vector on 8 bins, cutoff 0: {oracle_err:.1e} (< 1e-10)"),
    ));

    let worst_h = runs.hb.iter().map(|(_, t)| t.hermiticity.unwrap()).fold(0.0, f64::max);
    out.push(check(
        worst_h <= HERMITICITY_TOL,
        format!("E Hermiticity over {} heisenberg runs: {worst_h:.1e} (<= 1e-9)", runs.hb.len()),
    ));

    for n in 0..=3 {
        let a = steady(&heisenberg(0.01, n, T_END, true), n);
        let b = steady(&heisenberg(0.005, n, T_END, true), n);
        out.push(check((a - b).abs() < 1e-4, format!("halving h: heisenberg n={n} {a:.6} -> {b:.6} (|diff| {:.1e} < 1e-4)", (a - b).abs())));
    }
    let peak = |h: f64| gaussian_cells(h, vec![1.375], vec![3])[0].2;
    let (a, b) = (peak(0.25), peak(0.125));
    out.push(check((a - b).abs() < 1e-4, format!("halving h: gaussian n=3 peak {a:.6} -> {b:.6} (|diff| {:.1e} < 1e-4)", (a - b).abs())));

    let a = runs.steady_c2;
    let b = steady(&mps(0.0025, 0, T_END, true), 0);
    out.push(check((a - b).abs() < 1e-4, format!("halving dt: mps n=0 {a:.6} -> {b:.6} (|diff| {:.1e} < 1e-4)", (a - b).abs())));
    let a = steady(&runs.mps.iter().find(|r| r.0 == "n=2 dt=0.05").unwrap().1, 2);
    let b = steady(&mps(0.025, 2, T_END, true), 2);
    out.push(check((a - b).abs() < 1e-4, format!("halving dt: mps n=2 {a:.6} -> {b:.6} (|diff| {:.1e} < 1e-4)", (a - b).abs())));
    out
}

fn rect_on(bins: usize) -> PulseShape {
    PulseShape::Rectangular {
        t_start: 0.0,
        duration: 0.1 * bins as f64,
    }
}

type Criterion = fn(&mut Runs) -> Vec<(bool, String)>;

fn main() {
    let criteria: [(u8, &'static str, Criterion); 8] = [
        (1, "exponential decay without feedback", criterion_1),
        (2, "bound state of the excited emitter", criterion_2),
        (3, "single photon is not trapped", criterion_3),
        (4, "three-photon trapping", criterion_4),
        (5, "heisenberg vs mps for n = 2, 3", criterion_5),
        (6, "bond-dimension fingerprints", criterion_6),
        (7, "gaussian sweep over G tau", criterion_7),
        (8, "property suites", criterion_8),
    ];
    let mut runs = Runs::default();
    let mut outcomes = Vec::new();
    for (id, title, f) in criteria {
        let start = Instant::now();
        let checks = f(&mut runs);
        let o = Outcome {
            id,
            title,
            checks,
            seconds: start.elapsed().as_secs_f64(),
        };
        report(&o);
        outcomes.push(o);
    }

    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.pass()).map(|o| o.id).collect();
    let unexpected: Vec<u8> = failed.iter().copied().filter(|id| !DOCUMENTED_FAILURES.contains(id)).collect();
    println!(
        "acceptance: {}/{} criteria pass; failing: {:?}; documented: {:?}; unexpected: {:?}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        failed,
        DOCUMENTED_FAILURES,
        unexpected
    );
    for id in DOCUMENTED_FAILURES {
        if !failed.contains(id) {
            println!("note: criterion {id} is listed as a documented failure but now passes");
        }
    }
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}

fn report(o: &Outcome) {
    let status = if o.pass() { "PASS" } else { "FAIL" };
    println!("criterion {} {status}: {} ({:.1} s)", o.id, o.title, o.seconds);
    for (ok, msg) in &o.checks {
        println!("    [{}] {msg}", if *ok { "ok" } else { "x" });
    }
}
