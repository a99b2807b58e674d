//! Command-line pipeline over the `pe-dbn` library.
//!
//! ```text
//! pe-dbn generate  --out data --seed 7
//! pe-dbn train     --data data --out run --seed 7
//! pe-dbn backtest  --data data --out run --seed 7
//! pe-dbn bootstrap --data data --out run --seed 7
//! ```
//!
//! Every subcommand accepts `--config PATH` and one flag per configuration key
//! (see [`config::KEYS`]).

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;
pub mod universe;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "pe-dbn",
    version,
    about = "Fundamental PE estimation and PE-band trading backtests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic universe of price and earnings files.
    Generate(CommonArgs),
    /// Fit one model per instrument on its training window.
    Train(CommonArgs),
    /// Run every threshold cell and buy-and-hold on each test window.
    Backtest(CommonArgs),
    /// Bootstrap portfolio-level profit differences from backtest reports.
    Bootstrap(CommonArgs),
    /// Print a documented config file with every key at its default.
    ConfigTemplate,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// One optional flag per configuration key.
#[derive(Debug, Clone, Default)]
pub struct Overrides(pub BTreeMap<String, String>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = BTreeMap::new();
        for k in config::KEYS {
            if let Some(v) = m.get_one::<String>(k.key) {
                out.insert(k.key.to_string(), v.clone());
            }
        }
        Ok(Overrides(out))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        self.0.extend(Self::from_arg_matches(m)?.0);
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(mut cmd: clap::Command) -> clap::Command {
        for k in config::KEYS {
            let mut arg = clap::Arg::new(k.key)
                .long(k.flag)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(format!("{} [default: {}]", k.help, k.default));
            if k.flag == "seed" || k.flag == "out" || k.flag == "data" {
                arg = arg.display_order(0);
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                config::parse_file(&text, path)?
            }
            None => BTreeMap::new(),
        };
        RunConfig::resolve(file, self.overrides.0.clone())
    }
}

/// Parses `args` and runs the chosen subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> u8
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
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => commands::generate::run(&a.resolve()?),
        Command::Train(a) => commands::train::run(&a.resolve()?),
        Command::Backtest(a) => commands::backtest::run(&a.resolve()?),
        Command::Bootstrap(a) => commands::bootstrap::run(&a.resolve()?),
        Command::ConfigTemplate => {
            print!("{}", config::template());
            Ok(())
        }
    }
}
