use std::io;
use std::process::ExitCode;

use clap::Parser;
use mjgame_cli::{run, Cli, RunConfig};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (kind, args) = cli.command.split();
    let cfg = RunConfig::from(args);
    let code = match run(kind, &cfg, &mut io::stdout().lock()) {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit().code()
        }
    };
    ExitCode::from(code as u8)
}
