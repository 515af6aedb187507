use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use reclab::runner::{cmd_converge, cmd_pa, cmd_theta};
use reclab::selfcheck::run_selfcheck;

#[derive(Debug, Parser)]
#[command(name = "reclab", version, about = "Return-time statistics at periodic points of random subshifts")]
struct Cli {
    /// Experiment config (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; RECLAB_OUT takes precedence
    #[arg(long, global = true, value_name = "DIR", default_value = "reclab-out")]
    out: PathBuf,
    /// Master seed, overriding the config
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,
    /// Compute budget in engine state updates, overriding the config
    #[arg(long = "budget-states", global = true, value_name = "U64")]
    budget_states: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pólya-Aeppli mass function and moments
    Pa {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        p: f64,
        /// Largest r tabulated; adaptive truncation when absent
        #[arg(long)]
        r_max: Option<usize>,
    },
    /// Cluster parameter of a periodic point with the cylinder-ratio cross-check
    Theta {
        /// Periodic point generator, overriding the config (e.g. "01" or "0,1,2")
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
    },
    /// Quenched and annealed convergence experiment
    Converge,
    /// Small-scale invariant suites
    Selfcheck,
}

fn output_dir(flag: PathBuf) -> PathBuf {
    std::env::var_os("RECLAB_OUT").map(PathBuf::from).unwrap_or(flag)
}

/// Exits with a usage error when `--config` is missing.
fn require_config(config: Option<PathBuf>, command: &str) -> PathBuf {
    config.unwrap_or_else(|| {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, format!("`{command}` needs --config PATH"))
            .exit()
    })
}

fn run(cli: Cli) -> Result<bool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    let out = output_dir(cli.out);
    match cli.command {
        Command::Pa { t, p, r_max } => {
            let (report, _) = cmd_pa(t, p, r_max, &out)?;
            println!("t = {}, p = {}", report.t, report.p);
            println!("mean = {:.17e}", report.mean);
            println!("variance = {:.17e}", report.variance);
            for (k, q) in &report.binomial_moments {
                println!("Q_{k} = {q:.17e}");
            }
            println!("tail mass beyond r = {}: {:.3e}", report.pmf.r_max(), report.pmf.tail_mass);
            println!("wrote {}", out.join("pmf.csv").display());
        }
        Command::Theta { point, n_max } => {
            let config = require_config(cli.config, "theta");
            let (report, _) = cmd_theta(&config, point.as_deref(), n_max, &out)?;
            println!("x = {}, m = {}", report.point, report.period);
            println!("theta = {:.17e}", report.theta);
            if let Some(&(n, r, e)) = report.ratios.last() {
                println!("ratio at n = {n}: {r:.17e} (|ratio - theta| = {e:.3e})");
            }
            if let Some(rate) = report.decay_rate {
                println!("fitted decay factor {rate:.6}");
            }
        }
        Command::Converge => {
            let config = require_config(cli.config, "converge");
            let outcome = cmd_converge(&config, &out, cli.seed, cli.budget_states)?;
            println!("theta = {:.17e}", outcome.theta);
            println!("{:>4} {:>12} {:>12} {:>12} {:>10}", "n", "engine", "tv", "mean_err", "N_n");
            for r in &outcome.annealed.rows {
                println!("{:>4} {:>12} {:>12.6} {:>12.6} {:>10}", r.n, r.engine, r.tv, r.mean_abs_error, r.horizon);
            }
            println!("wrote {} files to {}", outcome.manifest.outputs.len(), out.display());
        }
        Command::Selfcheck => {
            let results = run_selfcheck();
            for c in &results {
                println!("{} {:<36} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = results.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
