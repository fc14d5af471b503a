//! Command-line front end for the tree and disk potential-theory
//! library: exact kernels, Riesz decompositions, truncated-domain Green
//! bounds, boundary-moment batteries, and Monte-Carlo cross-checks.
//!
//! Every run resolves its settings from flags over an optional key-value
//! configuration file over defaults, prints one `[PASS]`/`[FAIL]` line
//! per check, and writes `report.json` plus `tables/*.csv` stamped with
//! the SHA-256 of the effective configuration. Identical configurations
//! produce byte-identical artifacts. Exit status: 0 all checks passed,
//! 1 some check failed, 2 the configuration was invalid.

mod config;
mod report;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Eff, FileConfig};
use report::Artifacts;

#[derive(Parser)]
#[command(
    name = "riesz-lab",
    version,
    about = "Exact potential theory on homogeneous trees and the unit disk"
)]
struct Cli {
    /// Key-value configuration file; command-line flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for report.json and tables/ (default: out)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact kernel values and their mean-value identities on a ball
    Kernels(KernelsArgs),
    /// Charge extraction and the split into harmonic part minus potential
    Riesz(RieszArgs),
    /// Exact sandwich bounds for the truncated-domain Green function
    GreenBound(GreenBoundArgs),
    /// Distance moments of an extracted charge, with a dual kernel route
    Moment(MomentArgs),
    /// The full certified battery for one statement
    Verify(VerifyArgs),
    /// Monte-Carlo estimates next to their exact oracles
    Simulate(SimulateArgs),
    /// Closed-form batteries on the unit disk
    Disk(DiskArgs),
    /// Every battery the configured structure supports
    Report,
}

#[derive(Args)]
struct KernelsArgs {
    /// Forward branching number of the tree
    #[arg(long)]
    q: Option<String>,
    /// Radius of the tabulated ball
    #[arg(long)]
    radius: Option<String>,
    /// Boundary ends, comma separated; the first carries the Martin kernel
    #[arg(long)]
    ends: Option<String>,
    /// Print the Green kernel at two vertex addresses
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    green: Option<Vec<String>>,
    /// Print the first-passage kernel at two vertex addresses
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    passage: Option<Vec<String>>,
    /// Fail unless the queried value equals this rational
    #[arg(long)]
    expect: Option<String>,
}

#[derive(Args)]
struct RieszArgs {
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    /// Model function: green-pole, exp-growth, or majorant-example
    #[arg(long)]
    function: Option<String>,
}

#[derive(Args)]
struct GreenBoundArgs {
    #[arg(long)]
    q: Option<String>,
    /// Boundary ends spanning the truncation set, comma separated
    #[arg(long)]
    ends: Option<String>,
    /// Truncation thresholds, comma-separated rationals in (0, 1)
    #[arg(long)]
    t: Option<String>,
    /// Levels checked beyond the truncation frontier
    #[arg(long)]
    extra_depth: Option<String>,
}

#[derive(Args)]
struct MomentArgs {
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    /// Model function whose charge is measured
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    ends: Option<String>,
    /// Optional grade weight, e.g. power:1:1/2
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Statement to verify: green, majorant, divergence, or upsilon
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    ends: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    extra_depth: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Battery: all, cylinder, visits, truncated, weighted, wos-measure, wos-green
    #[arg(long)]
    battery: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// Sample paths per replica
    #[arg(long)]
    paths: Option<String>,
    /// Conductance network CSV for the weighted battery
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Args)]
struct DiskArgs {
    /// Battery: all, formulas, arc-mass, blaschke, boundary-integral
    #[arg(long)]
    battery: Option<String>,
    /// Random tangent circles in the arc-mass battery
    #[arg(long)]
    samples: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    let mut eff = Eff::new(&file);
    // The output location never takes part in the configuration hash:
    // moving artifacts must not change their bytes.
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut arts = Artifacts::new(out_dir);
    let sub = match &cli.command {
        Command::Kernels(_) => "kernels",
        Command::Riesz(_) => "riesz",
        Command::GreenBound(_) => "green-bound",
        Command::Moment(_) => "moment",
        Command::Verify(_) => "verify",
        Command::Simulate(_) => "simulate",
        Command::Disk(_) => "disk",
        Command::Report => "report",
    };
    match &cli.command {
        Command::Kernels(a) => runners::run_kernels(
            &mut arts,
            &mut eff,
            a.q.as_deref(),
            a.radius.as_deref(),
            a.ends.as_deref(),
            a.green.as_deref(),
            a.passage.as_deref(),
            a.expect.as_deref(),
        )?,
        Command::Riesz(a) => runners::run_riesz(
            &mut arts,
            &mut eff,
            a.q.as_deref(),
            a.radius.as_deref(),
            a.function.as_deref(),
        )?,
        Command::GreenBound(a) => runners::run_green_bound(
            &mut arts,
            &mut eff,
            a.q.as_deref(),
            a.ends.as_deref(),
            a.t.as_deref(),
            a.extra_depth.as_deref(),
        )?,
        Command::Moment(a) => runners::run_moment(
            &mut arts,
            &mut eff,
            a.q.as_deref(),
            a.radius.as_deref(),
            a.function.as_deref(),
            a.ends.as_deref(),
            a.phi.as_deref(),
        )?,
        Command::Verify(a) => runners::run_verify(
            &mut arts,
            &mut eff,
            a.theorem.as_deref(),
            a.q.as_deref(),
            a.ends.as_deref(),
            a.t.as_deref(),
            a.radius.as_deref(),
            a.extra_depth.as_deref(),
        )?,
        Command::Simulate(a) => runners::run_simulate(
            &mut arts,
            &mut eff,
            a.battery.as_deref(),
            a.q.as_deref(),
            a.t.as_deref(),
            a.seed.as_deref(),
            a.replicas.as_deref(),
            a.paths.as_deref(),
            a.weights.as_deref(),
        )?,
        Command::Disk(a) => {
            runners::run_disk(&mut arts, &mut eff, a.battery.as_deref(), a.samples.as_deref())?
        }
        Command::Report => runners::run_report(&mut arts, &mut eff)?,
    }
    Ok(arts.finish(sub, &eff.settings)?)
}
