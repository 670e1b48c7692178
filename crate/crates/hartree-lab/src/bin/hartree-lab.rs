//! Command-line driver for the simulation laboratory.
//!
//! Every subcommand takes a JSON experiment config (unknown keys rejected)
//! and writes its outputs under the config's `output_dir`. The worker count
//! can be overridden with the `HARTREE_LAB_WORKERS` environment variable.

use clap::{Parser, Subcommand};
use hartree_lab::ensemble::{self, ExperimentConfig, ExperimentKind, RunSummary};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hartree-lab", version, about = "Pseudospectral Hartree-equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory or an ensemble over random draws.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the frequency-split threshold ladder and compare drifts.
    SweepNzero {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tail statistics of the free randomized evolution.
    Tails {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the functional-inequality battery.
    CheckInequalities {
        #[arg(long)]
        config: PathBuf,
    },
    /// Derivative decomposition audit of the interaction action.
    MorawetzAudit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate a finished run directory into a flat CSV report.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(workers) = std::env::var("HARTREE_LAB_WORKERS") {
        match workers.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("ignoring invalid HARTREE_LAB_WORKERS={workers}");
            }
        }
    }
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> hartree_lab::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => execute(&config, &[ExperimentKind::Single, ExperimentKind::Ensemble]),
        Command::SweepNzero { config } => execute(&config, &[ExperimentKind::NzeroSweep]),
        Command::Tails { config } => execute(&config, &[ExperimentKind::TailStudy]),
        Command::CheckInequalities { config } => {
            execute(&config, &[ExperimentKind::InequalitySuite])
        }
        Command::MorawetzAudit { config } => execute(&config, &[ExperimentKind::MorawetzAudit]),
        Command::Report { dir } => {
            let csv = ensemble::aggregate_report(&dir)?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn execute(path: &PathBuf, allowed: &[ExperimentKind]) -> hartree_lab::Result<()> {
    let text = std::fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    if !allowed.contains(&cfg.kind) {
        return Err(hartree_lab::Error::Config(format!(
            "config kind {:?} does not match this subcommand",
            cfg.kind
        )));
    }
    let summary = ensemble::run_experiment(&cfg)?;
    describe(&summary);
    Ok(())
}

fn describe(summary: &RunSummary) {
    match summary {
        RunSummary::Ensemble(e) => {
            println!(
                "{} sample(s) complete; base |u0|_Hs = {:.6e}",
                e.samples.len(),
                e.base_hs_norm
            );
            for s in &e.samples {
                println!(
                    "  sample {:03}: |u0w|_Hs={:.4e} Mw(0)={:.4e} Ew(0)={:.4e} max|dMw|={:.4e} max|dEw|={:.4e}",
                    s.index, s.hs_norm, s.m_w_initial, s.e_w_initial, s.m_w_max_drift, s.e_w_max_drift
                );
            }
            for c in &e.omega_counts {
                println!("  threshold M={}: fraction {:.3}", c.level, c.fraction);
            }
        }
        RunSummary::Sweep(sw) => {
            for l in &sw.levels {
                println!(
                    "  N0={}: mean max|dMw|={:.6e} mean max|dEw|={:.6e} bound ratio {:.3}",
                    l.n_zero, l.mean_m_w_drift, l.mean_e_w_drift, l.max_mass_bound_ratio
                );
            }
            println!(
                "  drift ordering: mass {} energy {}",
                sw.m_w_drift_nonincreasing, sw.e_w_drift_nonincreasing
            );
        }
        RunSummary::Tails(t) => {
            println!(
                "  Y-norm tail: slope {:.4} (R^2 {:.4}); calibration slope {:.4} (R^2 {:.4})",
                t.y_tail.slope,
                t.y_tail.r_squared,
                t.rayleigh_calibration.slope,
                t.rayleigh_calibration.r_squared
            );
        }
        RunSummary::Audit(a) => {
            println!(
                "  identity error max {:.4e}; signs: defocusing {} momentum+gradient {}; v=0 forcing sup {:.3e}",
                a.max_identity_error,
                a.defocusing_sign_ok,
                a.momentum_gradient_sign_ok,
                a.vzero_forcing_sup
            );
        }
        RunSummary::Suite(s) => {
            println!("  inequality suite: all_pass = {}", s.all_pass);
        }
    }
}
