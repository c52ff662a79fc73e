//! Thin command-line front end over the library harness.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use overload_sim::harness::{self, SweepOverrides};
use overload_sim::kernel::Scheme;
use overload_sim::scenario::Scenario;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "overload-sim", version, about = "Web-server overload-control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write per-run CSVs, aggregate tables, and
    /// figures into the output directory.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the scenario's load-factor list.
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
        /// Run a single scheme (e.g. "8Q-LIFO-Pri").
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Calibrate server capacity for a scenario and print it.
    Calibrate { scenario: PathBuf },
    /// Rebuild aggregate tables and figures from an output directory.
    Report { dir: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            out,
            seeds,
            rho,
            scheme,
        } => {
            let scheme = match scheme {
                Some(name) => Some(
                    Scheme::parse(&name)
                        .with_context(|| format!("unknown scheme {name:?}"))?,
                ),
                None => None,
            };
            if let Some(rho) = &rho {
                if rho.is_empty() || rho.iter().any(|&r| !(r > 0.0)) {
                    bail!("--rho must list positive load factors");
                }
            }
            let overrides = SweepOverrides { seeds, rho, scheme };
            let rows = harness::run_scenario(&scenario, &out, &overrides)
                .with_context(|| format!("simulating {}", scenario.display()))?;
            println!("wrote {} runs to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Calibrate { scenario } => {
            let parsed = Scenario::load(&scenario)
                .with_context(|| format!("loading {}", scenario.display()))?;
            let calibration = harness::calibrate_capacity(&parsed)
                .with_context(|| format!("calibrating {}", scenario.display()))?;
            let mean_len = parsed
                .model()
                .context("building workload model")?
                .mean_session_length()
                .context("computing mean session length")?;
            println!("capacity: {:.4} requests/second", calibration.capacity);
            println!("ceiling:  {:.4} requests/second (work-conserving bound)", calibration.ceiling);
            println!(
                "rho=1.0 corresponds to {:.4} sessions/second ({:.4} requests/session)",
                calibration.capacity / mean_len,
                mean_len
            );
            Ok(())
        }
        Command::Report { dir } => {
            harness::report_dir(&dir).with_context(|| format!("reporting {}", dir.display()))?;
            println!("aggregates rebuilt in {}", dir.display());
            Ok(())
        }
    }
}
