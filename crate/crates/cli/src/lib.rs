//! Batch front end for the comb memory simulator.
//!
//! Each subcommand computes everything in memory first and only then writes
//! its files, so a failed run leaves the output directory untouched.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{NRange, RunConfig, StageArg};
use crate::error::CliError;
use crate::output::Artifacts;

#[derive(Debug, Parser)]
#[command(name = "combmem", version, about = "Raman memory for a squeezed pulse train")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Schmidt singular values and mode functions.
    Eigen,
    /// Writing efficiency over train lengths and optical depths.
    Efficiency,
    /// Homodyne noise spectrum before or after the memory.
    Spectrum,
    /// Squeezing left in each supermode after storage.
    Squeezing,
    /// Cross-checks of the kernels, the direct integrator and the spectra.
    Verify,
}

/// Command-line values that replace the matching config keys.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON configuration file; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Ideal phase shifters compensating the drive phase between pulses.
    #[arg(long, global = true, value_name = "BOOL")]
    pub shifters: Option<bool>,
    /// Spectrum before (in) or after (out) the memory.
    #[arg(long, global = true, value_enum)]
    pub stage: Option<StageArg>,
    /// Schmidt modes kept in the output spectrum.
    #[arg(long, global = true, value_name = "K")]
    pub retained: Option<usize>,
    /// Input squeezing per supermode in dB, e.g. -4.2,-3.2,-2.1.
    #[arg(long, global = true, value_name = "CSVLIST", value_delimiter = ',', allow_hyphen_values = true)]
    pub input_db: Option<Vec<f64>>,
    /// Train lengths as A:B:STEP, inclusive.
    #[arg(long, global = true, value_name = "A:B:STEP")]
    pub n_range: Option<NRange>,
    /// Optical depths, e.g. 10,30,50.
    #[arg(long, global = true, value_name = "L1,L2,...", value_delimiter = ',')]
    pub lengths: Option<Vec<f64>>,
}

impl Overrides {
    /// Loads the config file (or the defaults) and applies the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.shifters {
            cfg.phase_shifters = v;
        }
        if let Some(v) = self.stage {
            cfg.stage = v;
        }
        if let Some(v) = self.retained {
            cfg.retained = v;
        }
        if let Some(v) = &self.input_db {
            cfg.input_db = Some(v.clone());
        }
        if let Some(v) = self.n_range {
            cfg.n_range = v;
        }
        if let Some(v) = &self.lengths {
            cfg.lengths = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Computes the files of `command`. `verify` returns its report even when
/// checks fail, alongside the names of the failures.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<(Artifacts, Vec<&'static str>), CliError> {
    Ok(match command {
        Command::Eigen => (commands::eigen(cfg)?, Vec::new()),
        Command::Efficiency => (commands::efficiency(cfg)?, Vec::new()),
        Command::Spectrum => (commands::spectrum(cfg)?, Vec::new()),
        Command::Squeezing => (commands::squeezing(cfg)?, Vec::new()),
        Command::Verify => {
            let report = verify::verify(cfg);
            (verify::artifacts(&report)?, report.failed())
        }
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("combmem: {e}");
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    let (artifacts, failed) = execute(cli.command, &cfg)?;
    for path in artifacts.commit(&cfg.out_dir)? {
        println!("wrote {}", path.display());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed.into_iter().map(String::from).collect()))
    }
}
