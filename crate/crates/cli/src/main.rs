use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use ot_cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.exit_code() == 0 { 0 } else { 64 });
        }
    };
    match ot_core::parallel::install(|| ot_cli::execute(&cli)) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("reports serialise");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            eprintln!("{}: {:.3?}", report.command, report.elapsed);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
