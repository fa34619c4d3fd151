//! Command-line driver: ingestion, training, classification, evaluation and
//! the experiment protocols, all configured through flat `key=value` settings.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use mixclust::model::Hyperparams;

pub mod args;
pub mod classify;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod settings;
pub mod store;
pub mod train;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};
use settings::Settings;

pub const DEFAULT_SEED: u64 = 0;

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut settings = cli.settings();
    if let Some(path) = &cli.global.config {
        settings.apply_file(path)?;
    }
    match &cli.command {
        Command::Ingest(_) => ingest::run(&mut settings),
        Command::Train(_) => train::run(&mut settings),
        Command::Classify(_) => classify::run(&mut settings),
        Command::Eval(_) => eval::run(&mut settings),
        Command::Experiment(a) => experiment::run(&a.name, &mut settings),
    }
}

/// `lambda_alpha`/`lambda_beta` with defaults 1.0 and 1.1.
pub(crate) fn hyperparams(s: &mut Settings) -> Option<Hyperparams> {
    let d = Hyperparams::default();
    let la = s.get_or("lambda_alpha", d.lambda_alpha);
    let lb = s.get_or("lambda_beta", d.lambda_beta);
    match Hyperparams::new(la, lb) {
        Ok(h) => Some(h),
        Err(e) => {
            s.error(e.to_string());
            None
        }
    }
}

pub(crate) fn out_dir(s: &mut Settings) -> Option<PathBuf> {
    s.get::<PathBuf>("out")
}
