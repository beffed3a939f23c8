//! Command-line front end: JSON bundles in, deterministic JSON reports out.

pub mod bundle;
pub mod commands;
pub mod schema;

pub use bundle::{load_bundle, Config, Kind, LoadError, ProblemBundle};
pub use commands::{run_command, CheckResult, Cli, CliError, Command, EntityRef, Options, RunReport};

/// Loads every file the invocation names and runs its command.
pub fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    let bundle = load_bundle(&cli.input_paths())?;
    run_command(&bundle, &cli.command, &cli.options)
}
