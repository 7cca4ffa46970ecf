//! `mixdp` command-line interface.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 a bound check
//! failed, 3 every seed diverged.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mixdp_core::accountant::{calibrate_steps, DpPoint};
use mixdp_harness::config::{parse_seed_list, ExperimentConfig};
use mixdp_harness::data;
use mixdp_harness::error::HarnessError;
use mixdp_harness::experiment::cmd_run;
use mixdp_harness::pdp_report::cmd_pdp_report;
use mixdp_harness::sweep::{cmd_sweep, Axis};
use mixdp_harness::verify::cmd_verify_bounds;
use serde_json::json;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "mixdp",
    version,
    about = "Differentially private training with public data: experiment driver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Largest step count T meeting an (ε, δ) target at noise σ.
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 20.0)]
        sigma: f64,
        /// Per-step sensitivity Δ.
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run every seed of a config and write traces, ledgers and a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seeds, e.g. `0,1,2` or `0..20`.
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long, default_value = "mixdp-out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check the convergence bounds on the config's problem.
    VerifyBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_list: Option<String>,
        /// Also write `bounds.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Sorted per-example ε profile from the ledgers of a run directory.
    PdpReport {
        /// Output directory of `run` (or one `seed-*` directory).
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Defaults to `--dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Repeat a run along `epsilon=...` or `n_public=...`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long, default_value = "mixdp-out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the synthetic datasets of a config as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &Path, seed_list: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = seed_list {
        cfg.seeds = parse_seed_list(s)?;
    }
    Ok(cfg)
}

fn calibrate(epsilon: f64, delta: f64, sigma: f64, sensitivity: f64, as_json: bool) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(
            HarnessError::Validation(format!("delta must lie in (0, 1); got {delta}")).into(),
        );
    }
    let target = DpPoint::new(epsilon, delta).map_err(HarnessError::from)?;
    let steps = calibrate_steps(target, sensitivity, sigma).map_err(HarnessError::from)?;
    if steps == 0 {
        return Err(HarnessError::Core(mixdp_core::Error::BudgetTooSmall).into());
    }
    let mu = (steps as f64).sqrt() * sensitivity / sigma;
    let rho = mu * mu / 2.0;
    if as_json {
        println!(
            "{}",
            json!({"epsilon": epsilon, "delta": delta, "sigma": sigma, "sensitivity": sensitivity,
                   "steps": steps, "mu": mu, "rho": rho})
        );
    } else {
        println!("T = {steps}\nmu = {mu:.6}\nrho = {rho:.6}");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate {
            epsilon,
            delta,
            sigma,
            sensitivity,
            json,
        } => calibrate(epsilon, delta, sigma, sensitivity, json),
        Command::Run {
            config,
            seed_list,
            out,
            json,
        } => {
            let cfg = load(&config, seed_list.as_deref())?;
            let report = cmd_run(cfg, Some(&out))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let a = &report.aggregate;
                println!(
                    "{}: {} ok, {} diverged, {} failed; excess empirical risk {:.4e} ± {:.2e}; report in {}",
                    report.algorithm.name(),
                    a.ok_seeds,
                    a.diverged_seeds,
                    a.failed_seeds,
                    a.excess_empirical_risk.mean,
                    a.excess_empirical_risk.std,
                    out.join("report.json").display()
                );
            }
            Ok(())
        }
        Command::VerifyBounds {
            config,
            seed_list,
            out,
            json,
        } => {
            let cfg = load(&config, seed_list.as_deref())?;
            let report = cmd_verify_bounds(&cfg)?;
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                std::fs::write(
                    out.join("bounds.json"),
                    serde_json::to_string_pretty(&report)?,
                )?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            match report.failures() {
                0 => Ok(()),
                n => Err(HarnessError::BoundFailure(n).into()),
            }
        }
        Command::PdpReport {
            dir,
            delta,
            out,
            json,
        } => {
            let out = out.unwrap_or_else(|| dir.clone());
            let report = cmd_pdp_report(&dir, delta, &out)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                for s in &report.seeds {
                    println!(
                        "seed {}: {} examples, epsilon min {:.4} median {:.4} max {:.4} (worst case {:.4})",
                        s.seed,
                        s.summary.examples,
                        s.summary.epsilon.min,
                        s.summary.epsilon.median,
                        s.summary.epsilon.max,
                        s.summary.worst_case_epsilon
                    );
                }
            }
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            seed_list,
            out,
            json,
        } => {
            let cfg = load(&config, seed_list.as_deref())?;
            let axis: Axis = axis.parse()?;
            let rows = cmd_sweep(&cfg, &axis, Some(&out))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!(
                    "{:>10} {:>12} {:>10} {:>10}  status",
                    "value", "mean", "std", "PB"
                );
                for r in &rows {
                    println!(
                        "{:>10} {:>12.4e} {:>10.2e} {:>10.4}  {}",
                        r.value, r.mean, r.std, r.performance_boost, r.status
                    );
                }
            }
            Ok(())
        }
        Command::GenData { config, out } => {
            let cfg = load(&config, None)?;
            for f in data::generate(&cfg, &out)? {
                println!("{}", out.join(f).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("MIXDP_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<HarnessError>()
                .map_or(1, HarnessError::exit_code);
            ExitCode::from(code)
        }
    }
}
