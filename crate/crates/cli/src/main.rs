//! `dkp`: analyze coefficient fields, flatten them by changes of variable and
//! run the boundary value checks.

mod commands;
mod config;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkp_core::fixtures::registry;
use dkp_core::{Error, Result};

use config::{Command, RunConfig, Variant};

#[derive(Parser)]
#[command(name = "dkp", version, about = "Carleson diagnostics and flattening maps for elliptic coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Ellipticity, gradient bounds and Carleson constants.
    Analyze(Flags),
    /// Run the change-of-variable pipeline.
    Transform(Flags),
    /// Boundary value checks on the solver rectangle.
    Verify(Flags),
    /// Built-in fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    List,
}

/// Each flag overrides the field of the same name in `--config`.
#[derive(Args)]
struct Flags {
    /// Fixture names or field files.
    inputs: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "x_count")]
    x_count: Option<usize>,
    #[arg(long = "T")]
    top: Option<f64>,
    #[arg(long = "t_min")]
    t_min: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long = "skip_mollify")]
    skip_mollify: bool,
    #[arg(long = "n_max")]
    n_max: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "T_s")]
    solver_height: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    apertures: Option<Vec<f64>>,
    #[arg(long = "out_dir")]
    out_dir: Option<PathBuf>,
}

impl Flags {
    fn into_config(self, command: Command) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        c.command = command;
        if !self.inputs.is_empty() {
            c.inputs = self.inputs;
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { c.$field = v; })*
            };
        }
        take!(n, x_count, top, t_min, m, n_max, variant, delta, solver_height, q, apertures, out_dir);
        if self.eps0.is_some() {
            c.eps0 = self.eps0;
        }
        c.skip_mollify |= self.skip_mollify;
        c.validate()?;
        Ok(c)
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DKP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidInput {
            key: "DKP_THREADS".into(),
            reason: format!("expected a positive integer, got `{raw}`"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidInput {
            key: "DKP_THREADS".into(),
            reason: e.to_string(),
        })
}

fn list_fixtures() -> Result<()> {
    let mut out = std::io::stdout().lock();
    for f in registry() {
        writeln!(out, "{:<12} {}", f.name, f.summary)?;
        for k in f.known {
            writeln!(out, "{:<12}   {} ({})", "", k.property, k.provenance)?;
        }
    }
    Ok(())
}

/// Exit code for a run whose checks completed but missed a threshold.
const THRESHOLD_MISSED: u8 = 4;

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Sub::Analyze(flags) => commands::analyze(&flags.into_config(Command::Analyze)?).map(|_| true),
        Sub::Transform(flags) => commands::transform(&flags.into_config(Command::Transform)?).map(|_| true),
        Sub::Verify(flags) => verify::verify(&flags.into_config(Command::Verify)?),
        Sub::Fixtures { action: FixturesAction::List } => match list_fixtures() {
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(true),
            other => other.map(|_| true),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(THRESHOLD_MISSED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
