use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csmc_cli::commands::DEFAULT_ANALYSES;
use csmc_cli::{cmd_compare, cmd_deviation, cmd_run, Analysis, CliError};
use csmc_core::modulation::Method;

#[derive(Parser)]
#[command(name = "csmc", version, about = "Complex sliding mode control of a three-phase inverter: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace, waveform, KPI and spectrum files.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        analyses: Vec<Analysis>,
    },
    /// Run several methods on the same scenario and tabulate their KPIs.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Vec<Method>,
        #[arg(long, value_delimiter = ',')]
        d0: Vec<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Tabulate the modulus and phase deviation of the CSA average.
    Deviation {
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: csmc_core::Error| e.to_string())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, output, analyses } => {
            let analyses = if analyses.is_empty() { DEFAULT_ANALYSES.to_vec() } else { analyses };
            let report = cmd_run(&scenario, &output, &analyses)?;
            println!("{}", report.line());
        }
        Command::Compare { scenario, methods, d0, output } => {
            let rows = cmd_compare(&scenario, &methods, &d0, &output)?;
            println!("{:<6} {:>6} {:>9} {:>9} {:>9}  sliding", "method", "d0", "RMSE", "MAE", "max|sig|");
            for r in rows {
                let d0 = r.d0.map(|d| format!("{d:.2}")).unwrap_or_else(|| "-".into());
                let flag = if r.sliding_lost { "SLIDING_LOST" } else { "ok" };
                println!("{:<6} {d0:>6} {:>9.4} {:>9.4} {:>9.4}  {flag}", r.method.tag(), r.rmse, r.mae, r.max_sigma);
            }
        }
        Command::Deviation { output } => {
            let x = cmd_deviation(&output)?;
            println!("e_mod max {:.4} at d = {:.3}", x.modulus_max, x.modulus_argmax);
            println!("e_ph  max {:+.3} deg at d = {:.3}", x.phase_max, x.phase_argmax);
            println!("e_ph  min {:+.3} deg at d = {:.3}", x.phase_min, x.phase_argmin);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.exit_code() {
                2 => "CONFIG_ERROR",
                _ => "error",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
