use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ipareg::{compare_fixed_gain, resolve, run_scenario, write_reports, BUNDLED};

/// Closed-loop throughput regulation driven by sample-path derivatives.
#[derive(Parser)]
#[command(name = "ipareg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario and write one CSV per run.
    Run {
        /// Path to a TOML scenario or the name of a bundled one.
        scenario: String,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of cycles.
        #[arg(long)]
        cycles: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the adaptive gain with fixed gains on the first lane and start.
    CompareGains {
        scenario: String,
        /// Comma-separated fixed gains.
        #[arg(long, value_delimiter = ',', required = true)]
        gains: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios.
    ListScenarios,
    /// Parse and validate a scenario without running it.
    Validate { scenario: String },
}

fn load(name: &str, seed: Option<u64>, cycles: Option<usize>) -> Result<ipareg::Scenario> {
    let mut s = resolve(name)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(n) = cycles {
        if n == 0 {
            bail!("--cycles must be at least 1");
        }
        s.n_cycles = n;
    }
    Ok(s)
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            cycles,
            out,
        } => {
            let s = load(&scenario, seed, cycles)?;
            let reports = run_scenario(&s)?;
            let files = write_reports(&reports, &out)
                .with_context(|| format!("writing results for `{}`", s.name))?;
            for r in &reports {
                let means: Vec<String> = r
                    .segment_means
                    .iter()
                    .map(|m| format!("[{}..{}] {:.4}", m.from, m.to, m.mean))
                    .collect();
                let means = if means.is_empty() {
                    String::new()
                } else {
                    format!(" means {}", means.join(" "))
                };
                println!(
                    "{} ({}): converged at {} band {:.4}{means}",
                    r.scenario,
                    r.id,
                    fmt_opt(r.convergence_cycle),
                    r.band,
                );
            }
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::CompareGains {
            scenario,
            gains,
            seed,
        } => {
            let s = load(&scenario, seed, None)?;
            let cmp = compare_fixed_gain(&s, &gains)?;
            println!("controller,from,to,r,settle_cycles,amplitude,mean,mean_gain");
            for c in &cmp.controllers {
                for seg in &c.segments {
                    println!(
                        "{},{},{},{},{},{},{},{}",
                        c.label,
                        seg.from,
                        seg.to,
                        seg.r,
                        fmt_opt(seg.settle_cycles),
                        seg.amplitude,
                        seg.mean,
                        seg.mean_gain.map_or_else(String::new, |g| g.to_string())
                    );
                }
            }
        }
        Command::ListScenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
        }
        Command::Validate { scenario } => {
            let s = resolve(&scenario)?;
            println!(
                "{}: ok ({} plant, {} cycles, {} lane(s))",
                s.name,
                s.plant.kind(),
                s.n_cycles,
                s.lanes.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
