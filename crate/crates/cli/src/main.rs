//! `affine`: affine L^p energy, gauge geometry, zero finding and Galerkin
//! solves from the command line.
//!
//! Every run writes its results and a `manifest.json` into the output
//! directory. Exit status is 0 on success, 1 when a certificate fails or the
//! computation errors, and 2 on usage errors.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use commands::Finished;
use config::UsageError;

#[derive(Parser)]
#[command(name = "affine", version, about = "Affine L^p energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Affine energy of one coefficient vector.
    Energy(commands::EnergyFlags),
    /// Search for triangle-inequality and convexity witnesses.
    Geometry(commands::GeometryFlags),
    /// Zero of a registered vector field inside a gauge ball.
    Fixedpoint(commands::FixedPointFlags),
    /// Poincaré-type constants and gauge-equivalence ratios.
    Constants(commands::ConstantsFlags),
    /// Critical point of the Galerkin functional, for one m or a sweep.
    Solve(commands::SolveFlags),
    /// Aggregate run directories into one long CSV.
    Report(commands::ReportFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Energy(_) => "energy",
            Command::Geometry(_) => "geometry",
            Command::Fixedpoint(_) => "fixedpoint",
            Command::Constants(_) => "constants",
            Command::Solve(_) => "solve",
            Command::Report(_) => "report",
        }
    }

    fn run(&self) -> anyhow::Result<Finished> {
        match self {
            Command::Energy(f) => commands::energy(f),
            Command::Geometry(f) => commands::geometry(f),
            Command::Fixedpoint(f) => commands::fixedpoint(f),
            Command::Constants(f) => commands::constants(f),
            Command::Solve(f) => commands::solve(f),
            Command::Report(f) => commands::report(f),
        }
    }
}

/// Parameter errors raised by the library are usage errors too.
fn is_usage(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<UsageError>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<affine_core::Error>(),
        Some(
            affine_core::Error::InvalidParameter { .. }
                | affine_core::Error::LengthMismatch { .. }
                | affine_core::Error::QuadratureTooCoarse { .. }
        )
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match cli.command.run() {
        Ok(mut done) => {
            let code = if done.ok { 0 } else { 1 };
            if let Err(e) = done.run.write_manifest(name, &done.config, code) {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
            if done.ok {
                println!("{name}: results in {}", done.out.display());
            } else {
                eprintln!("{name}: certificate failure, results in {}", done.out.display());
            }
            ExitCode::from(code as u8)
        }
        Err(e) if is_usage(&e) => {
            eprintln!("error: {e:#}\n");
            if let Some(sub) = Cli::command().find_subcommand(name) {
                eprint!("{}", sub.clone().bin_name(format!("affine {name}")).render_help());
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
