use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hele_shaw_cli::commands::{
    cmd_cascade, cmd_decay, cmd_evolve, cmd_moments, cmd_perturb, cmd_report, cmd_suction_sweep,
};
use hele_shaw_cli::config::{Overrides, RunConfig};
use hele_shaw_cli::error::{exit, CliError};

/// Spectral conformal-map simulator for Hele-Shaw flow without surface tension.
#[derive(Parser, Debug)]
#[command(name = "hele-shaw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    rtol: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    /// +1 for injection, -1 for suction.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_sign)]
    sign: Option<i32>,
    /// Require only local univalence of the initial map.
    #[arg(long, global = true)]
    locally_univalent: bool,
    /// Jitter seed for the quadrature moment check.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one map and write its trajectory.
    Evolve,
    /// Blow-up times and remaining area for perturbed disks under suction.
    SuctionSweep,
    /// Deviation between a base flow and a perturbed one.
    Perturb,
    /// Successive differences of flows from truncations of one map.
    Cascade,
    /// Moment table with conservation deltas.
    Moments,
    /// Rescaled-boundary decay table and fitted exponent.
    Decay,
    /// Merge earlier output tables.
    Report {
        /// CSV files written by the other commands.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Column to compare across inputs.
        #[arg(long)]
        column: Option<String>,
    },
}

fn parse_sign(s: &str) -> Result<i32, String> {
    match s {
        "1" | "+1" | "injection" => Ok(1),
        "-1" | "suction" => Ok(-1),
        other => Err(format!("expected +1 or -1, got `{other}`")),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        rtol: cli.rtol,
        t_end: cli.t_end,
        sign: cli.sign,
        locally_univalent: cli.locally_univalent,
        seed: cli.seed,
    })?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let status = match &cli.command {
        Command::Report { inputs, column } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            cmd_report(inputs, column.as_deref(), &out)?
        }
        cmd => {
            let cfg = load(cli)?;
            match cmd {
                Command::Evolve => cmd_evolve(&cfg)?,
                Command::SuctionSweep => cmd_suction_sweep(&cfg)?,
                Command::Perturb => cmd_perturb(&cfg)?,
                Command::Cascade => cmd_cascade(&cfg)?,
                Command::Moments => cmd_moments(&cfg)?,
                Command::Decay => cmd_decay(&cfg)?,
                Command::Report { .. } => unreachable!(),
            }
        }
    };
    Ok(status.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_INPUT } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
