//! The `factgrid` command line.
//!
//! ```text
//! factgrid synth     --out run --seed 1
//! factgrid train     --data run/data.txt --model fact --out run
//! factgrid eval      --data run/data.txt --checkpoint run/checkpoint.txt --out run
//! factgrid retrieve  --data run/data.txt --checkpoint run/checkpoint.txt --adjective adj03 --noun noun07
//! factgrid gradcheck
//! ```
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 verification failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command};
pub use error::{exit, CliError, CliResult};

pub const THREADS_ENV: &str = "FACTGRID_THREADS";

/// Sizes the global worker pool from `FACTGRID_THREADS` (default: all cores).
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli, console: &mut dyn Write) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(a, console),
        Command::Train(a) => commands::train(a, console),
        Command::Eval(a) => commands::eval(a, console),
        Command::Retrieve(a) => commands::retrieve_cmd(a, console),
        Command::Gradcheck(a) => commands::gradcheck(a, console),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I, console: &mut dyn Write, errors: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = if code == exit::OK {
                write!(console, "{e}")
            } else {
                write!(errors, "{e}")
            };
            return code;
        }
    };
    match execute(cli, console) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(errors, "error: {e}");
            e.exit_code()
        }
    }
}
