use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bias_bench::cli::{self, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let args = Cli::parse();
    let env_out = std::env::var_os(cli::OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    match cli::run(args, env_out) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            for path in &outcome.written {
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.single_line());
            ExitCode::FAILURE
        }
    }
}
