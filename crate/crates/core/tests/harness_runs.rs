//! Scenario runs through the file-writing harness.

use std::fs;

use wgfeedback::harness::{
    extract_steady_state, parse_scenario, read_trace_csv, run_scenario, simulate, sweep, Engine, SweepAxis,
};

fn scenario(extra: &str) -> String {
    format!(r#"{{"schema_version": 1, "gamma": 4, "phi_over_2pi": 1, {extra}}}"#)
}

#[test]
fn identical_configs_give_identical_files() {
    let text = scenario(
        r#""method": "both", "tau": 0.5, "t_max": 4, "initial": "ground",
           "pulse": {"shape": "rectangular", "photons": 2, "t_start": 0.1, "duration": 1.0},
           "numerics": {"dt": 0.05, "h": 0.025}"#,
    );
    let sc = parse_scenario(&text).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_scenario(&sc, a.path()).unwrap();
    run_scenario(&sc, b.path()).unwrap();
    for name in ["trace.csv", "trace_heisenberg.csv", "summary.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
    let joint = fs::read_to_string(&ra.trace_files[0]).unwrap();
    assert!(joint.starts_with("t_ps,excitation,max_bond,norm_drift,excitation_heisenberg,abs_diff\n"));
    let hb = fs::read_to_string(&ra.trace_files[1]).unwrap();
    let second = hb.lines().nth(1).unwrap();
    assert!(second.ends_with(",,"), "Heisenberg rows leave bond and drift empty: {second}");
    assert!(ra.summary.max_abs_diff.is_some());
}

#[test]
fn summary_is_recomputable_from_trace() {
    let text = scenario(r#""method": "mps", "tau": 2, "t_max": 20, "initial": "excited""#);
    let sc = parse_scenario(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let art = run_scenario(&sc, dir.path()).unwrap();
    let trace = read_trace_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    let again = extract_steady_state(&trace, 2.0, 0.0).unwrap();
    let reported = art.summary.result(Engine::Mps).unwrap().steady_state.unwrap();
    assert_eq!(again, reported);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["engine"], "mps");
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn vacuum_and_ground_state_stay_dark() {
    let text = scenario(r#""method": "mps", "tau": 1, "t_max": 12, "initial": "ground""#);
    let res = simulate(&parse_scenario(&text).unwrap()).unwrap();
    let trace = res.mps.unwrap();
    assert!(trace.excitation.iter().all(|&e| e == 0.0));
    let ss = res.summary.results[0].steady_state.unwrap();
    assert_eq!(ss.value, 0.0);
    assert!(ss.converged);
}

#[test]
fn free_decay_fit_recovers_twice_gamma() {
    let text = scenario(
        r#""method": "heisenberg", "feedback": false, "t_max": 3, "initial": "excited",
           "numerics": {"h": 0.01}"#,
    );
    let res = simulate(&parse_scenario(&text).unwrap()).unwrap();
    let rate = res.summary.results[0].decay_rate_fit.unwrap();
    assert!((rate + 8.0).abs() < 0.08, "fitted rate {rate}");
}

#[test]
fn single_point_sweep_equals_run() {
    let text = scenario(
        r#""method": "heisenberg", "tau": 0.5, "t_max": 20, "initial": "ground",
           "pulse": {"shape": "rectangular", "photons": 2, "t_start": 0.1, "duration": 1.0}"#,
    );
    let sc = parse_scenario(&text).unwrap();
    let run = simulate(&sc).unwrap();
    let rows = sweep(
        &sc.config,
        &SweepAxis {
            gamma_tau: vec![2.0],
            photons: vec![2],
        },
        1,
        None,
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].tau_ps, 0.5);
    assert_eq!(rows[0].steady_state, run.summary.results[0].steady_state);
}

#[test]
fn failed_cells_do_not_stop_the_sweep() {
    // n = 0 cells start excited; the rectangular pulse is dropped for them
    let text = scenario(
        r#""method": "heisenberg", "tau": 0.5, "t_max": 20, "initial": "ground",
           "pulse": {"shape": "rectangular", "photons": 1, "t_start": 0.1, "duration": 1.0}"#,
    );
    let sc = parse_scenario(&text).unwrap();
    let mut cfg = sc.config.clone();
    cfg.numerics.p = Some(1);
    let rows = sweep(
        &cfg,
        &SweepAxis {
            gamma_tau: vec![1.0, 2.0],
            photons: vec![0, 1],
        },
        2,
        None,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.error.is_none()), "p is re-derived per cell");
    let mut bad = sc.config.clone();
    bad.t_max = 3.0;
    let rows = sweep(
        &bad,
        &SweepAxis {
            gamma_tau: vec![1.0, 20.0],
            photons: vec![1],
        },
        2,
        None,
    )
    .unwrap();
    assert!(rows[0].steady_state.is_none() && rows[0].error.is_some(), "trace too short");
    assert!(rows[1].error.is_some());
}

#[test]
fn sweep_rows_follow_grid_order_for_any_worker_count() {
    let text = scenario(r#""method": "heisenberg", "tau": 0.5, "t_max": 15, "initial": "excited""#);
    let sc = parse_scenario(&text).unwrap();
    let axis = SweepAxis {
        gamma_tau: vec![0.5, 1.0, 1.5, 2.0],
        photons: vec![0],
    };
    let one = sweep(&sc.config, &axis, 1, None).unwrap();
    let four = sweep(&sc.config, &axis, 4, None).unwrap();
    assert_eq!(one, four);
    let values: Vec<f64> = one.iter().map(|r| r.steady_state.unwrap().value).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}
