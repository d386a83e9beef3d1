//! `survcausal` command-line tool: fit the hazard model, run posterior
//! g-computation, and summarize, diagnose or export the results.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use commands::{DiagArgs, GcompArgs, HazardExportArgs, SummarizeArgs};
use config::FitArgs;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "survcausal", version, about = "Bayesian piecewise-exponential survival models and g-computation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior of the hazard model; writes draws.csv and meta.json.
    Fit(FitArgs),
    /// Marginal survival curves and ATE draws from a fit.
    Gcomp(GcompArgs),
    /// Posterior summary table of a draws or gcomp file.
    Summarize(SummarizeArgs),
    /// Potential scale reduction factors across chains.
    Diag(DiagArgs),
    /// Posterior and maximum likelihood baseline hazards for plotting.
    HazardExport(HazardExportArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => commands::cmd_fit(&args.resolve()?).map(|_| ()),
        Command::Gcomp(args) => commands::cmd_gcomp(&args).map(|_| ()),
        Command::Summarize(args) => commands::cmd_summarize(&args).map(|_| ()),
        Command::Diag(args) => commands::cmd_diag(&args).map(|_| ()),
        Command::HazardExport(args) => commands::cmd_hazard_export(&args),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
