//! Command-line harness for the `sofo` experiments.
//!
//! Every verb takes the same arguments: an optional JSON config (defaulting
//! to a built-in example for that verb), an output directory, and overrides
//! for the seed, the replication count, and the worker-thread count. Results
//! are CSV files plus a `manifest.json` whose hashes make reruns checkable.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sofo::config::{default_spec, ExperimentKind, ExperimentSpec};
use sofo::experiments::run_experiment;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sofo",
    version,
    about = "Online feedback optimization experiments: tracking, step-size sweeps, \
             feeder comparisons, constants reports, contraction checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON). Omitted: the built-in default for this verb.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Master seed; replaces the config's seed list.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Monte-Carlo replications; replaces the config's count.
    #[arg(long, value_name = "M")]
    replications: Option<usize>,
    /// Worker threads (default: all cores). Affects speed, never results.
    #[arg(long, value_name = "T")]
    threads: Option<usize>,
    /// Print the effective config as JSON and exit without running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop against a moving optimizer and record the
    /// trajectory.
    Tracking(CommonArgs),
    /// Sweep the step size under common random numbers and fit the error
    /// growth law.
    MseSweep(CommonArgs),
    /// Compare compliance-recovering and full-compliance control on the
    /// distribution feeder.
    OpfCompare(CommonArgs),
    /// Estimate the tracking-bound constants for an instance.
    Constants(CommonArgs),
    /// Probe the one-step mean-square contraction with fresh draws.
    Contraction(CommonArgs),
}

impl Command {
    fn split(&self) -> (ExperimentKind, &CommonArgs) {
        match self {
            Command::Tracking(a) => (ExperimentKind::Tracking, a),
            Command::MseSweep(a) => (ExperimentKind::MseSweep, a),
            Command::OpfCompare(a) => (ExperimentKind::OpfCompare, a),
            Command::Constants(a) => (ExperimentKind::ConstantsReport, a),
            Command::Contraction(a) => (ExperimentKind::ContractionTest, a),
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();

    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => default_spec(kind),
    };
    if spec.kind != kind {
        bail!(
            "config describes a {} experiment but the {} verb was invoked",
            spec.kind.as_str(),
            kind.as_str()
        );
    }
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(m) = args.replications {
        spec.replications = m;
    }
    if args.print_config {
        spec.validate()?;
        println!("{}", spec.to_canonical_json()?);
        return Ok(());
    }

    let summary = run_experiment(&spec, &args.out, args.threads)?;
    for line in &summary.lines {
        println!("{line}");
    }
    for dir in &summary.out_dirs {
        println!("wrote {}", dir.display());
    }
    Ok(())
}
