use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convint_core::scheme::Mode;
use convint_core::Error;

mod export;
mod run;
mod verify;

#[derive(Parser)]
#[command(name = "convint", version, about = "Convex-integration stages for the 2D Boussinesq system on the torus")]
struct Cli {
    /// Omit timings from reports so reruns on unchanged data are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a configuration and create the run directory.
    Init {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to `out_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the initial tuple and `--stages` stages on top of it.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        stages: usize,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Check a finished run, or run the decay probes with `--probe`.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        probe: Option<verify::Probe>,
    },
    /// Write fields or tables of a run to `exports/`.
    Export {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        what: export::What,
        /// Stage index; defaults to the last one built.
        #[arg(long)]
        stage: Option<usize>,
        /// Time of the field snapshot; the nearest dump is used.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Outcome of a command that completed without an error.
pub enum Outcome {
    Pass,
    ChecksFailed,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        return 3;
    }
    match e.root() {
        Error::StrictGate(_) | Error::Checksum(_) | Error::Format(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let det = cli.deterministic;
    let result = match cli.cmd {
        Cmd::Init { config, out } => run::cmd_init(&config, out.as_deref()).map(|_| Outcome::Pass),
        Cmd::Run { config, out, stages, mode } => run::cmd_run(config.as_deref(), out.as_deref(), stages, mode),
        Cmd::Verify { config, out, probe } => verify::cmd_verify(config.as_deref(), out.as_deref(), probe, det),
        Cmd::Export { config, out, what, stage, t, format } => {
            export::cmd_export(config.as_deref(), out.as_deref(), what, stage, t, format).map(|_| Outcome::Pass)
        }
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
