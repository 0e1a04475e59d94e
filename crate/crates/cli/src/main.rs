use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use wgfeedback::harness::{
    load_scenario, parse_axis_values, parse_photon_list, run_scenario, sweep, worker_count, write_sweep,
    SweepAxis, WORKERS_ENV,
};

/// Emitter in a semi-infinite waveguide with delayed coherent feedback.
#[derive(Parser, Debug)]
#[command(name = "sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace CSV and summary JSON.
    Run {
        config: PathBuf,
        /// Output directory for the files named in `outputs`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sweep Γτ (at fixed Γ) and photon number; writes sweep.csv.
    Sweep {
        config: PathBuf,
        /// `gamma_tau=start:stop:step` or `gamma_tau=a,b,c`.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated photon numbers; 0 means an excited emitter without pulse.
        #[arg(long)]
        photons: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the trace of every cell under OUT/cells.
        #[arg(long)]
        keep_traces: bool,
    },
    /// Parse and validate a scenario, then print it with defaults filled.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let sc = load_scenario(&config)?;
            for w in &sc.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&sc.config)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out } => {
            let sc = load_scenario(&config)?;
            let art = run_scenario(&sc, &out).with_context(|| format!("running {}", config.display()))?;
            for w in &art.summary.warnings {
                eprintln!("warning: {w}");
            }
            for r in &art.summary.results {
                match &r.steady_state {
                    Some(ss) => println!(
                        "{}: steady state {:.6} over [{}, {}] ps, converged = {}",
                        r.engine.name(),
                        ss.value,
                        ss.window.0,
                        ss.window.1,
                        ss.converged
                    ),
                    None => println!(
                        "{}: final excitation {:.6} ({})",
                        r.engine.name(),
                        r.final_excitation,
                        r.steady_state_error.as_deref().unwrap_or("no steady state")
                    ),
                }
            }
            if let Some(d) = art.summary.max_abs_diff {
                println!("max |mps - heisenberg| = {d:.3e}");
            }
            println!("summary: {}", art.summary_file.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            axis,
            photons,
            out,
            keep_traces,
        } => {
            let sc = load_scenario(&config)?;
            let mut grid = SweepAxis::default();
            if let Some(a) = axis {
                let Some((name, values)) = a.split_once('=') else {
                    bail!("axis must look like gamma_tau=0.25:3:0.125");
                };
                if name.trim() != "gamma_tau" {
                    bail!("unknown sweep axis `{name}`; only gamma_tau is supported");
                }
                grid.gamma_tau = parse_axis_values(values)?;
            }
            if let Some(p) = photons {
                grid.photons = parse_photon_list(&p)?;
            }
            let workers = worker_count();
            eprintln!("sweeping with {workers} workers (override with {WORKERS_ENV})");
            let cells = keep_traces.then(|| out.join("cells"));
            let rows = sweep(&sc.config, &grid, workers, cells.as_deref())?;
            let path = write_sweep(&rows, &out)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            for r in &rows {
                match (&r.steady_state, &r.error) {
                    (Some(ss), _) => println!(
                        "gamma_tau={:<6} n={:<3} {:<10} {:.6}{}",
                        r.gamma_tau,
                        r.photons,
                        r.engine.name(),
                        ss.value,
                        if ss.converged { "" } else { " (not converged)" }
                    ),
                    (None, Some(e)) => println!(
                        "gamma_tau={:<6} n={:<3} {:<10} failed: {e}",
                        r.gamma_tau,
                        r.photons,
                        r.engine.name()
                    ),
                    (None, None) => {}
                }
            }
            println!("table: {}", path.display());
            Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}
