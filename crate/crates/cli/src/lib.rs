//! Command-line front end: argument parsing, configuration and output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches};

pub use commands::run_command;
pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
pub use io::load_series;

fn cli() -> clap::Command {
    let mut app = clap::Command::new("barma")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Bayesian beta autoregressive moving average models")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Command::ALL {
        let mut sub = clap::Command::new(cmd.name())
            .about(cmd.about())
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("key=value configuration file (a manifest.txt works)"),
            )
            .arg(
                Arg::new("threads")
                    .long("threads")
                    .value_name("N")
                    .env("BARMA_THREADS")
                    .value_parser(clap::value_parser!(usize))
                    .help("Worker threads; results do not depend on it"),
            );
        for key in config::KEYS {
            let help = if key.default.is_empty() {
                key.help.to_string()
            } else {
                format!("{} [default: {}]", key.help, key.default)
            };
            sub = sub.arg(Arg::new(key.name).long(key.flag).value_name("VALUE").action(ArgAction::Set).help(help));
        }
        app = app.subcommand(sub);
    }
    app
}

fn resolve(command: Command, m: &ArgMatches) -> CliResult<RunConfig> {
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => config::read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let flags = config::KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    RunConfig::resolve(command, &file, &flags)
}

fn execute(command: Command, m: &ArgMatches) -> CliResult<Vec<String>> {
    let cfg = resolve(command, m)?;
    match m.get_one::<usize>("threads") {
        Some(&n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("threads: {e}")))?;
            pool.install(|| run_command(&cfg))
        }
        _ => run_command(&cfg),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for invalid input or configuration, 2 for numerical
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        return 1;
    };
    let outcome = Command::parse(name).and_then(|c| execute(c, sub));
    match outcome {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_has_a_flag() {
        cli().debug_assert();
        let m = cli().try_get_matches_from(["barma", "fit", "--input", "x.csv", "--nu-shape", "2"]).unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let cfg = resolve(Command::Fit, sub).unwrap();
        assert_eq!(cfg.priors.nu_shape, 2.0);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["barma", "fit", "--no-such-flag", "1"]), 1);
        assert_eq!(run(["barma", "fit"]), 1);
    }
}
