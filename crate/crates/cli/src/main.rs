//! `sinr-lab`: runs configured experiments and replays them from manifests.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 1 for anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sinr_core::experiments::{load_config, replay, run_experiment, ExperimentKind, Manifest, RunSummary};
use sinr_core::Error;

#[derive(Parser)]
#[command(name = "sinr-lab", version, about = "Large-deviation experiments for SINR networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed_root`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample networks and write them as text.
    Generate(RunArgs),
    /// Empirical measures and their deviation from the references.
    Measures(RunArgs),
    /// Scaled cumulant generating function estimates.
    Scgf(RunArgs),
    /// Importance-sampled decay rate of a ball or halfspace event.
    LdpDecay(RunArgs),
    /// Normalised log-likelihood statistic.
    Aep(RunArgs),
    /// Exact edge-set counts on tiny instances.
    Mcmillan(RunArgs),
    /// Convergence of the scaled kernel along the lambda grid.
    LimitCheck(RunArgs),
    /// Rerun an experiment from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<RunSummary, Error> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = load_config(&text)?;
    if let Some(s) = args.seed {
        cfg.seed_root = s;
    }
    let out = match (&args.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(Error::Config("no output directory: pass --out or set output_dir".into())),
    };
    run_experiment(&cfg, kind, &out, &text)
}

fn replay_from(manifest: &Path, out: &Path) -> Result<RunSummary, Error> {
    replay(&Manifest::load(manifest)?, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => run(ExperimentKind::Generate, a),
        Command::Measures(a) => run(ExperimentKind::Measures, a),
        Command::Scgf(a) => run(ExperimentKind::Scgf, a),
        Command::LdpDecay(a) => run(ExperimentKind::LdpDecay, a),
        Command::Aep(a) => run(ExperimentKind::Aep, a),
        Command::Mcmillan(a) => run(ExperimentKind::Mcmillan, a),
        Command::LimitCheck(a) => run(ExperimentKind::LimitCheck, a),
        Command::Replay { manifest, out } => replay_from(manifest, out),
    };
    match result {
        Ok(s) => {
            println!("{} complete: {}", s.manifest.experiment.name(), s.out_dir.display());
            for row in &s.report.estimates {
                println!(
                    "  lambda = {:>10.4}  value = {:>14.6e}  stderr = {:>10.3e}  target = {:>12.6e}",
                    row.lambda, row.value, row.stderr, row.target
                );
            }
            if let Some(slope) = s.report.slope {
                println!("  slope = {slope:.6}");
            }
            if let Some(c) = s.report.converged {
                println!("  converged = {c}");
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
