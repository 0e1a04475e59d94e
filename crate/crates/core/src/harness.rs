//! Scenario files, engine dispatch, steady-state extraction, sweeps and
//! export.
//!
//! A scenario is a JSON document with a fixed schema. The feedback phase is
//! given as `phi_over_2pi` so that the resonance `φ = 2πm` is exact in the
//! file. Outputs are a CSV trace and a JSON summary; both are bit-identical
//! for identical configs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{run_mps_simulation, InitialSystem, MpsConfig, PhysicsParams, TraceRecord};
use crate::heisenberg::{integrate_dde, HeisenbergConfig};
use crate::pulse::{PulseShape, GAUSSIAN_WINDOW_SIGMAS};
use crate::tensor::TruncationPolicy;

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the sweep worker count.
pub const WORKERS_ENV: &str = "WGFEEDBACK_WORKERS";
pub const TRACE_HEADER: &str = "t_ps,excitation,max_bond,norm_drift";
/// Shortest steady-state averaging window in ps.
pub const MIN_WINDOW_PS: f64 = 10.0;
/// Relative residual below which a steady state counts as converged.
pub const CONVERGED_REL: f64 = 0.05;
/// Values below this are reported as converged to zero.
pub const ZERO_LEVEL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mps,
    Heisenberg,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mps,
    Heisenberg,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Mps => "mps",
            Engine::Heisenberg => "heisenberg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Ground,
    Excited,
    /// Complex amplitudes as `[re, im]`.
    Superposition { c_g: [f64; 2], c_e: [f64; 2] },
}

impl InitialSpec {
    fn to_system(self) -> InitialSystem {
        match self {
            InitialSpec::Ground => InitialSystem::Ground,
            InitialSpec::Excited => InitialSystem::Excited,
            InitialSpec::Superposition { c_g, c_e } => InitialSystem::Superposition {
                c_g: (c_g[0], c_g[1]),
                c_e: (c_e[0], c_e[1]),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum PulseSpec {
    Rectangular {
        photons: usize,
        t_start: f64,
        duration: f64,
    },
    Gaussian {
        photons: usize,
        width: f64,
        /// Defaults to `5σ`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
        /// Defaults to `5σ`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_window: Option<f64>,
    },
}

impl PulseSpec {
    pub fn photons(&self) -> usize {
        match *self {
            PulseSpec::Rectangular { photons, .. } | PulseSpec::Gaussian { photons, .. } => photons,
        }
    }

    fn with_photons(self, n: usize) -> Self {
        match self {
            PulseSpec::Rectangular { t_start, duration, .. } => PulseSpec::Rectangular {
                photons: n,
                t_start,
                duration,
            },
            PulseSpec::Gaussian {
                width,
                center,
                half_window,
                ..
            } => PulseSpec::Gaussian {
                photons: n,
                width,
                center,
                half_window,
            },
        }
    }

    fn fill_defaults(&mut self) {
        if let PulseSpec::Gaussian {
            width,
            center,
            half_window,
            ..
        } = self
        {
            center.get_or_insert(GAUSSIAN_WINDOW_SIGMAS * *width);
            half_window.get_or_insert(GAUSSIAN_WINDOW_SIGMAS * *width);
        }
    }

    fn shape(&self) -> PulseShape {
        match *self {
            PulseSpec::Rectangular { t_start, duration, .. } => PulseShape::Rectangular { t_start, duration },
            PulseSpec::Gaussian {
                width,
                center,
                half_window,
                ..
            } => PulseShape::Gaussian {
                center: center.unwrap_or(GAUSSIAN_WINDOW_SIGMAS * width),
                width,
                half_window: half_window.unwrap_or(GAUSSIAN_WINDOW_SIGMAS * width),
            },
        }
    }
}

fn default_dt() -> f64 {
    0.05
}
fn default_h() -> f64 {
    0.01
}
fn default_cutoff() -> f64 {
    1e-8
}
fn default_max_bond() -> usize {
    512
}
fn default_alarm() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_t_max() -> f64 {
    100.0
}
fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSpec {
    /// MPS time-bin width in ps.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Heisenberg RK4 step in ps.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_max_bond")]
    pub max_bond: usize,
    /// Bin dimension; defaults to photons + 1 (at least 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Per-step discarded weight that raises a warning.
    #[serde(default = "default_alarm")]
    pub alarm: f64,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            h: default_h(),
            cutoff: default_cutoff(),
            max_bond: default_max_bond(),
            p: None,
            alarm: default_alarm(),
        }
    }
}

fn default_trace() -> String {
    "trace.csv".into()
}
fn default_summary() -> String {
    "summary.json".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSpec {
    #[serde(default = "default_trace")]
    pub trace_path: String,
    #[serde(default = "default_summary")]
    pub summary_path: String,
}

impl Default for OutputsSpec {
    fn default() -> Self {
        Self {
            trace_path: default_trace(),
            summary_path: default_summary(),
        }
    }
}

/// The scenario file as written, with defaults filled after validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub method: Method,
    /// Decay rate Γ in ps⁻¹.
    pub gamma: f64,
    /// Round-trip delay τ in ps; required with feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub phi_over_2pi: f64,
    #[serde(default = "default_true")]
    pub feedback: bool,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
    #[serde(default)]
    pub numerics: NumericsSpec,
    #[serde(default)]
    pub outputs: OutputsSpec,
}

impl ScenarioConfig {
    pub fn photons(&self) -> usize {
        self.pulse.map_or(0, |p| p.photons())
    }

    /// SHA-256 of the canonical (defaults filled) serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    fn engines(&self) -> Vec<Engine> {
        match self.method {
            Method::Mps => vec![Engine::Mps],
            Method::Heisenberg => vec![Engine::Heisenberg],
            Method::Both => vec![Engine::Mps, Engine::Heisenberg],
        }
    }

    fn step(&self, engine: Engine) -> f64 {
        match engine {
            Engine::Mps => self.numerics.dt,
            Engine::Heisenberg => self.numerics.h,
        }
    }
}

/// A validated scenario with the engine inputs derived.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub mps: Option<MpsConfig>,
    pub heisenberg: Option<HeisenbergConfig>,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn from_config(mut config: ScenarioConfig) -> Result<Self> {
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", config.schema_version),
            ));
        }
        if !config.phi_over_2pi.is_finite() {
            return Err(Error::config("phi_over_2pi", "must be finite"));
        }
        if let Some(p) = config.pulse.as_mut() {
            p.fill_defaults();
        }
        let n = config.photons();
        let p = config.numerics.p.unwrap_or((n + 1).max(2));
        if p < n + 1 || p < 2 {
            return Err(Error::config(
                "numerics.p",
                format!("bin dimension {p} cannot hold {n} photons"),
            ));
        }
        config.numerics.p = Some(p);
        let policy = TruncationPolicy::new(config.numerics.max_bond, config.numerics.cutoff)
            .map_err(|e| Error::config("numerics", e.to_string()))?;
        if !(config.numerics.alarm >= 0.0) {
            return Err(Error::config("numerics.alarm", "must be >= 0"));
        }
        let tau = if config.feedback {
            config
                .tau
                .ok_or_else(|| Error::config("tau", "required when feedback is on"))?
        } else {
            config.tau.unwrap_or(0.0)
        };
        let phi = 2.0 * std::f64::consts::PI * config.phi_over_2pi;

        let mut warnings = Vec::new();
        let pulse = match config.pulse {
            Some(spec) => {
                let shape = spec.shape();
                shape
                    .validate()
                    .map_err(|e| Error::config("pulse", e.to_string()))?;
                let (a, b) = shape.support();
                if a < 0.0 || b > config.t_max {
                    return Err(Error::config(
                        "pulse",
                        format!("support [{a}, {b}) ps must lie inside [0, t_max = {}]", config.t_max),
                    ));
                }
                if spec.photons() > 0 && config.initial != InitialSpec::Ground {
                    warnings.push("pulse with photons on an emitter that does not start in the ground state".into());
                }
                Some((shape, spec.photons()))
            }
            None => None,
        };
        let initial = config.initial.to_system();

        let physics = |engine: Engine| -> Result<PhysicsParams> {
            let key = match engine {
                Engine::Mps => "numerics.dt",
                Engine::Heisenberg => "numerics.h",
            };
            PhysicsParams::new(config.gamma, tau, phi, config.step(engine), config.t_max, config.feedback).map_err(
                |e| match e {
                    Error::Config { key: k, message } => Error::config(k, format!("{message} ({key})")),
                    other => other,
                },
            )
        };
        let engines = config.engines();
        let mps = if engines.contains(&Engine::Mps) {
            Some(MpsConfig {
                physics: physics(Engine::Mps)?,
                initial,
                pulse,
                p,
                policy,
                alarm: config.numerics.alarm,
            })
        } else {
            None
        };
        let heisenberg = if engines.contains(&Engine::Heisenberg) {
            Some(HeisenbergConfig {
                physics: physics(Engine::Heisenberg)?,
                initial,
                pulse,
            })
        } else {
            None
        };
        for w in mps
            .iter()
            .map(|c| c.physics.warnings())
            .chain(heisenberg.iter().map(|c| c.physics.warnings()))
            .flatten()
        {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        Ok(Self {
            config,
            mps,
            heisenberg,
            warnings,
        })
    }

    /// End of the pulse support (0 without a pulse).
    pub fn pulse_end(&self) -> f64 {
        self.config.pulse.map_or(0.0, |p| p.shape().support().1)
    }

    pub fn tau(&self) -> f64 {
        if self.config.feedback {
            self.config.tau.unwrap_or(0.0)
        } else {
            0.0
        }
    }
}

/// Parses and validates a scenario; errors name the offending key.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let key = if path == "." { "<root>".to_string() } else { path };
        Error::config(key, format!("{inner}"))
    })?;
    Scenario::from_config(config)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Long-time excitation read off the tail of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub value: f64,
    /// Averaging window `(t_a, t_b)` in ps.
    pub window: (f64, f64),
    pub converged: bool,
    /// Largest deviation from `value` inside the window.
    pub residual: f64,
}

/// Mean of the final `max(τ, 10 ps)` of the trace. The trace must extend
/// `5τ` beyond `pulse_end`.
pub fn extract_steady_state(trace: &TraceRecord, tau: f64, pulse_end: f64) -> Result<SteadyStateReport> {
    let (Some(&t0), Some(&tb)) = (trace.times.first(), trace.times.last()) else {
        return Err(Error::contract("empty trace"));
    };
    let span = tau.max(MIN_WINDOW_PS);
    let settle = 5.0 * tau;
    if tb - pulse_end < settle - 1e-9 || tb - t0 < span - 1e-9 {
        return Err(Error::contract(format!(
            "trace ends at {tb} ps; need {settle} ps after the pulse end {pulse_end} ps and a {span} ps window"
        )));
    }
    let ta = tb - span;
    let tail: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.excitation)
        .filter(|(t, _)| **t >= ta - 1e-9)
        .map(|(_, e)| *e)
        .collect();
    let value = tail.iter().sum::<f64>() / tail.len() as f64;
    let residual = tail.iter().map(|e| (e - value).abs()).fold(0.0, f64::max);
    Ok(SteadyStateReport {
        value,
        window: (ta, tb),
        converged: residual < CONVERGED_REL * value.abs() || value.abs() < ZERO_LEVEL,
        residual,
    })
}

/// Least-squares slope of `ln E(t)` over the samples with `E ≥ 1e-6`
/// before the first drop below it.
pub fn fit_decay_rate(trace: &TraceRecord) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.excitation)
        .take_while(|(_, e)| **e >= 1e-6)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakBond {
    pub t_ps: f64,
    pub value: usize,
}

/// Per-engine figures in the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub engine: Engine,
    pub step_ps: f64,
    pub delay_steps: usize,
    pub trace_file: String,
    pub final_excitation: f64,
    pub steady_state: Option<SteadyStateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_bond: Option<PeakBond>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_norm_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discarded_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hermiticity_max: Option<f64>,
    /// Fitted `d ln E / dt` for free decay (no feedback, no pulse).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_rate_fit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub engine: String,
    pub version: String,
    pub config_hash: String,
    pub scenario: ScenarioConfig,
    pub steady_state_rule: String,
    pub results: Vec<EngineSummary>,
    /// Largest `|E_mps − E_heisenberg|` over the shared grid points
    /// (method `both`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_diff: Option<f64>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn result(&self, engine: Engine) -> Option<&EngineSummary> {
        self.results.iter().find(|r| r.engine == engine)
    }
}

/// Traces and summary of one scenario, before anything is written.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub mps: Option<TraceRecord>,
    pub heisenberg: Option<TraceRecord>,
    /// Heisenberg excitation at the MPS sample times, where the two grids
    /// share a point (method `both`).
    pub joint: Option<Vec<Option<f64>>>,
    pub summary: Summary,
}

/// Value of `(xs, ys)` at a grid point coinciding with `x`, if any.
fn sample_at(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let tol = 1e-9 * x.abs().max(1.0);
    let i = xs.partition_point(|&t| t < x - tol);
    xs.get(i).filter(|&&t| (t - x).abs() <= tol).map(|_| ys[i])
}

fn trace_file_name(base: &str, engine: Engine, method: Method) -> String {
    if method != Method::Both || engine == Engine::Mps {
        return base.to_string();
    }
    let path = Path::new(base);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    let name = format!("{stem}_heisenberg.{ext}");
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => dir.join(name).display().to_string(),
        None => name,
    }
}

fn engine_summary(sc: &Scenario, engine: Engine, trace: &TraceRecord, physics: &PhysicsParams) -> EngineSummary {
    let steady = extract_steady_state(trace, sc.tau(), sc.pulse_end());
    let free_decay = !sc.config.feedback && sc.config.photons() == 0;
    let is_mps = engine == Engine::Mps;
    EngineSummary {
        engine,
        step_ps: physics.dt,
        delay_steps: physics.delay_steps(),
        trace_file: trace_file_name(&sc.config.outputs.trace_path, engine, sc.config.method),
        final_excitation: trace.excitation.last().copied().unwrap_or(f64::NAN),
        steady_state: steady.as_ref().ok().copied(),
        steady_state_error: steady.err().map(|e| e.to_string()),
        peak_bond: trace.peak_bond().map(|(t_ps, value)| PeakBond { t_ps, value }),
        max_norm_drift: is_mps
            .then(|| trace.norm_drift.iter().flatten().copied().fold(0.0, f64::max)),
        discarded_weight: trace.discarded.last().copied().flatten(),
        hermiticity_max: trace.hermiticity,
        decay_rate_fit: if free_decay { fit_decay_rate(trace) } else { None },
    }
}

/// Runs the requested engines; nothing is written.
pub fn simulate(sc: &Scenario) -> Result<ScenarioResult> {
    let mps = sc
        .mps
        .as_ref()
        .map(|c| run_mps_simulation::<f64>(c).map_err(|e| engine_context("mps", e)))
        .transpose()?;
    let heisenberg = sc
        .heisenberg
        .as_ref()
        .map(|c| {
            integrate_dde::<f64>(c)
                .map(|(t, _)| t)
                .map_err(|e| engine_context("heisenberg", e))
        })
        .transpose()?;

    let mut results = Vec::new();
    let mut warnings = sc.warnings.clone();
    if let (Some(t), Some(c)) = (&mps, &sc.mps) {
        results.push(engine_summary(sc, Engine::Mps, t, &c.physics));
        extend_unique(&mut warnings, &t.warnings);
    }
    if let (Some(t), Some(c)) = (&heisenberg, &sc.heisenberg) {
        results.push(engine_summary(sc, Engine::Heisenberg, t, &c.physics));
        extend_unique(&mut warnings, &t.warnings);
    }
    let joint = match (&mps, &heisenberg) {
        (Some(m), Some(h)) => Some(
            m.times
                .iter()
                .map(|&t| sample_at(&h.times, &h.excitation, t))
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };
    let max_abs_diff = joint.as_ref().zip(mps.as_ref()).and_then(|(j, m)| {
        j.iter()
            .zip(&m.excitation)
            .filter_map(|(a, b)| a.map(|a| (a - b).abs()))
            .reduce(f64::max)
    });
    let summary = Summary {
        engine: match sc.config.method {
            Method::Mps => "mps",
            Method::Heisenberg => "heisenberg",
            Method::Both => "both",
        }
        .into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: sc.config.hash(),
        scenario: sc.config.clone(),
        steady_state_rule: format!(
            "mean over the final max(tau, {MIN_WINDOW_PS} ps); converged if max deviation < {}% of the value or value < {ZERO_LEVEL:e}",
            CONVERGED_REL * 100.0
        ),
        results,
        max_abs_diff,
        warnings,
    };
    Ok(ScenarioResult {
        mps,
        heisenberg,
        joint,
        summary,
    })
}

fn engine_context(engine: &str, e: Error) -> Error {
    Error::Numerical {
        context: format!("{engine} engine: {e}"),
    }
}

fn extend_unique(dst: &mut Vec<String>, src: &[String]) {
    for w in src {
        if !dst.contains(w) {
            dst.push(w.clone());
        }
    }
}

/// Shortest round-trip text of `x`, in exponent form when tiny or huge.
fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e7) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with the standard header; `extra` appends the Heisenberg column and
/// the per-time absolute difference (empty where the grids do not meet).
pub fn trace_csv(trace: &TraceRecord, extra: Option<&[Option<f64>]>) -> String {
    let mut out = String::from(TRACE_HEADER);
    if extra.is_some() {
        out.push_str(",excitation_heisenberg,abs_diff");
    }
    out.push('\n');
    for i in 0..trace.len() {
        let e = trace.excitation[i];
        let _ = write!(
            out,
            "{},{},{},{}",
            num(trace.times[i]),
            num(e),
            opt(trace.max_bond[i]),
            opt_num(trace.norm_drift[i])
        );
        if let Some(x) = extra {
            let _ = write!(out, ",{},{}", opt_num(x[i]), opt_num(x[i].map(|h| (e - h).abs())));
        }
        out.push('\n');
    }
    out
}

/// Reads back the `t_ps` and `excitation` columns of a trace file.
pub fn read_trace_csv(text: &str) -> Result<TraceRecord> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with(TRACE_HEADER) {
        return Err(Error::contract(format!("unexpected trace header `{header}`")));
    }
    let mut trace = TraceRecord::default();
    for (i, line) in lines.enumerate() {
        let mut f = line.split(',');
        let mut num = |what: &str| -> Result<String> {
            f.next()
                .map(str::to_string)
                .ok_or_else(|| Error::contract(format!("row {}: missing {what}", i + 1)))
        };
        let parse = |s: String| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::contract(format!("row {}: {e}", i + 1)))
        };
        let t = parse(num("t_ps")?)?;
        let e = parse(num("excitation")?)?;
        let bond = num("max_bond")?;
        let drift = num("norm_drift")?;
        trace.push(
            t,
            e,
            bond.parse().ok(),
            if drift.is_empty() { None } else { Some(parse(drift)?) },
            None,
        );
    }
    Ok(trace)
}

/// Paths written by [`run_scenario`].
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub summary: Summary,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs a scenario and writes its trace(s) and summary under `out_dir`.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<RunArtifacts> {
    let res = simulate(sc)?;
    let mut trace_files = Vec::new();
    for r in &res.summary.results {
        let trace = match r.engine {
            Engine::Mps => res.mps.as_ref(),
            Engine::Heisenberg => res.heisenberg.as_ref(),
        }
        .expect("engine ran");
        let extra = (r.engine == Engine::Mps).then_some(res.joint.as_deref()).flatten();
        let path = out_dir.join(&r.trace_file);
        write_file(&path, &trace_csv(trace, extra))?;
        trace_files.push(path);
    }
    let summary_file = out_dir.join(&sc.config.outputs.summary_path);
    let json = serde_json::to_string_pretty(&res.summary).expect("summary serializes");
    write_file(&summary_file, &(json + "\n"))?;
    Ok(RunArtifacts {
        trace_files,
        summary_file,
        summary: res.summary,
    })
}

/// Values of a sweep axis: `start:stop:step` (inclusive) or a comma list.
pub fn parse_axis_values(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::config("axis", m);
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, c] => {
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) || stop < start {
                return Err(bad(format!("range {spec} needs step > 0 and stop >= start")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [_] => spec
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect(),
        _ => Err(bad(format!("cannot parse `{spec}`"))),
    }
}

pub fn parse_photon_list(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::config("photons", format!("`{s}`: {e}")))
        })
        .collect()
}

/// Grid of a sweep: empty axes fall back to the base scenario's value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepAxis {
    pub gamma_tau: Vec<f64>,
    pub photons: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_tau: f64,
    pub tau_ps: f64,
    pub photons: usize,
    pub engine: Engine,
    pub step_ps: f64,
    pub t_max: f64,
    pub steady_state: Option<SteadyStateReport>,
    pub error: Option<String>,
}

/// Sweep worker count: the environment override or the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Step closest to `step` that divides `tau`.
fn snap_step(step: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return step;
    }
    tau / (tau / step).round().max(1.0)
}

/// Config of one sweep cell: `τ = Γτ/Γ` at fixed Γ; steps snapped to divide
/// `τ` (unchanged if they already do) and `t_max` rounded up to the grid.
/// `n = 0` means an initially excited emitter without pulse.
pub fn cell_config(base: &ScenarioConfig, gamma_tau: Option<f64>, photons: usize, engine: Engine) -> ScenarioConfig {
    let mut c = base.clone();
    c.method = match engine {
        Engine::Mps => Method::Mps,
        Engine::Heisenberg => Method::Heisenberg,
    };
    if let Some(gt) = gamma_tau {
        c.tau = Some(gt / c.gamma);
        c.feedback = true;
    }
    let tau = if c.feedback { c.tau.unwrap_or(0.0) } else { 0.0 };
    let step = snap_step(c.step(engine), tau);
    match engine {
        Engine::Mps => c.numerics.dt = step,
        Engine::Heisenberg => c.numerics.h = step,
    }
    c.t_max = (c.t_max / step - 1e-9).ceil() * step;
    if photons == 0 {
        c.initial = InitialSpec::Excited;
        c.pulse = None;
    } else {
        c.initial = InitialSpec::Ground;
        c.pulse = c.pulse.map(|p| p.with_photons(photons));
    }
    c.numerics.p = None;
    c
}

fn run_cell(c: &ScenarioConfig, engine: Engine, cell_dir: Option<&Path>, stem: &str) -> Result<SteadyStateReport> {
    if c.photons() == 0 && c.initial == InitialSpec::Ground {
        return Err(Error::config("pulse", "base scenario has no pulse to fill with photons"));
    }
    let sc = Scenario::from_config(c.clone())?;
    let res = simulate(&sc)?;
    let trace = match engine {
        Engine::Mps => res.mps,
        Engine::Heisenberg => res.heisenberg,
    }
    .expect("engine ran");
    if let Some(dir) = cell_dir {
        write_file(&dir.join(format!("{stem}.csv")), &trace_csv(&trace, None))?;
    }
    extract_steady_state(&trace, sc.tau(), sc.pulse_end())
}

/// Runs every `(Γτ, n, engine)` cell on a pool of `workers` threads.
/// Failed cells carry their error; rows come back in grid order.
pub fn sweep(base: &ScenarioConfig, axis: &SweepAxis, workers: usize, cell_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let gts: Vec<Option<f64>> = if axis.gamma_tau.is_empty() {
        vec![None]
    } else {
        axis.gamma_tau.iter().copied().map(Some).collect()
    };
    let ns = if axis.photons.is_empty() {
        vec![base.photons()]
    } else {
        axis.photons.clone()
    };
    let cells: Vec<(Option<f64>, usize, Engine)> = gts
        .iter()
        .flat_map(|&gt| {
            ns.iter()
                .flat_map(move |&n| base.engines().into_iter().map(move |e| (gt, n, e)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::contract(format!("cannot build worker pool: {e}")))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(gt, n, engine)| {
                let c = cell_config(base, gt, n, engine);
                let tau = c.tau.unwrap_or(0.0);
                let gamma_tau = gt.unwrap_or(base.gamma * tau);
                let stem = format!("cell_gt{gamma_tau:.4}_n{n}_{}", engine.name());
                let out = run_cell(&c, engine, cell_dir, &stem);
                SweepRow {
                    gamma_tau,
                    tau_ps: tau,
                    photons: n,
                    engine,
                    step_ps: c.step(engine),
                    t_max: c.t_max,
                    steady_state: out.as_ref().ok().copied(),
                    error: out.err().map(|e| e.to_string()),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma_tau,tau_ps,photons,engine,step_ps,t_max,steady_state,converged,residual,error\n");
    for r in rows {
        let ss = r.steady_state;
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], "'");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},\"{}\"",
            r.gamma_tau,
            r.tau_ps,
            r.photons,
            r.engine.name(),
            r.step_ps,
            r.t_max,
            opt_num(ss.map(|s| s.value)),
            opt(ss.map(|s| s.converged)),
            opt_num(ss.map(|s| s.residual)),
            err
        );
    }
    out
}

/// Writes `sweep.csv` under `out_dir` and returns its path.
pub fn write_sweep(rows: &[SweepRow], out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("sweep.csv");
    write_file(&path, &sweep_csv(rows))?;
    Ok(path)
}
