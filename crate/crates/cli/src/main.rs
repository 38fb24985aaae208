//! `oamris <experiment> [--config FILE] [--out DIR] [--seed N] [--threads N]`
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 solver stagnation,
//! 3 I/O failure, 4 self-test failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::Parser;
use oamris::config::Config;
use oamris::experiments::{run_experiment, Experiment, Outcome};
use oamris::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_STAGNATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "oamris",
    version,
    about = "RIS-assisted OAM secrecy-rate experiments"
)]
struct Cli {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(Experiment::ALL.map(|e| e.name()))
        .map(|s| s.parse::<Experiment>().expect("listed experiment")))]
    experiment: Experiment,

    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for CSV files.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Overrides `scheme.seed` and `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Stagnation(_) => EXIT_STAGNATION,
        _ => EXIT_CONFIG,
    }
}

fn load(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scheme.seed = seed;
        cfg.mc.seed = seed;
    }
    Ok(cfg)
}

fn write(out: &Path, outcome: &Outcome) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(io)?;
    for a in &outcome.artifacts {
        let path = out.join(&a.file_name);
        std::fs::write(&path, &a.csv).map_err(io)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter {
                field: "--threads".into(),
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let outcome = run_experiment(&cfg, cli.experiment)?;
    write(&cli.out, &outcome)?;
    for c in &outcome.checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if outcome.checks.iter().any(|c| !c.pass) {
        return Ok(EXIT_SELFTEST);
    }
    if outcome.stagnated {
        eprintln!("warning: a phase line search stagnated; results were written");
        return Ok(EXIT_STAGNATION);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
