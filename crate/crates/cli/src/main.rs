use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holodyn_cli::{run, CliError, ExperimentConfig, Kind};

#[derive(Parser)]
#[command(name = "holodyn", version, about = "Equidistribution experiments for rational maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic points of each period in `n_range`.
    Periodic(Common),
    /// Preimage discrepancy series and rate fits.
    RatePreimage(Common),
    /// Periodic-point discrepancy series and rate fits.
    RatePeriodic(Common),
    /// Tube-mass battery against the δ^{-1} bound.
    Tube(Common),
    /// Good translations, admissible cells and branch statistics.
    Manhattan(Common),
    /// Certified repelling points cross-checked against the periodic solver.
    Certify(Common),
    /// Counts of periodic, non-repelling and exceptional points.
    Counts(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat key=value).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Kind, Common) {
        match self {
            Command::Periodic(c) => (Kind::Periodic, c),
            Command::RatePreimage(c) => (Kind::RatePreimage, c),
            Command::RatePeriodic(c) => (Kind::RatePeriodic, c),
            Command::Tube(c) => (Kind::Tube, c),
            Command::Manhattan(c) => (Kind::Manhattan, c),
            Command::Certify(c) => (Kind::Certify, c),
            Command::Counts(c) => (Kind::Counts, c),
        }
    }
}

fn load(kind: Kind, args: &Common) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = ExperimentConfig::parse(&text, Some(kind))?;
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(p) = args.precision {
        cfg.set("precision", &p.to_string())?;
    }
    if let Some(out) = &args.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (kind, args) = Cli::parse().command.split();
    let outcome = load(kind, &args).and_then(|cfg| run(&cfg).map(|m| (cfg, m)));
    match outcome {
        Ok((cfg, manifest)) => {
            log::info!(
                "{} run {} complete: {} outputs in {}",
                kind,
                &manifest.config_hash[..12],
                manifest.outputs.len(),
                cfg.out_dir().display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
