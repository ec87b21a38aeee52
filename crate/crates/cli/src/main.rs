use std::process::ExitCode;

use clap::Parser;
use infoscreen::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = infoscreen::run(cli, &mut std::io::stdout().lock());
    ExitCode::from(status.code())
}
