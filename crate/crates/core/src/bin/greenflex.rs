use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use greenflex::config::{Overrides, ScenarioKind};
use greenflex::scenario::{execute, Exit, Invocation};

#[derive(Parser)]
#[command(
    name = "greenflex",
    version,
    about = "Incentive experiments for bitrate flexibility"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ratio across a grid of offer distributions, offered to everyone.
    SweepIncentives(RunArgs),
    /// Ratio as a function of how many users receive offers.
    SweepUsers(RunArgs),
    /// Offer only group A, only group B, or both.
    GroupTargeting(RunArgs),
    /// Everyone gets the law's mean versus individual draws.
    MeanVsIndividual(RunArgs),
    /// Altruistic threshold of one user across beta.
    Altruism(RunArgs),
    /// Baseline versus educated threshold laws.
    Educate(RunArgs),
    /// Threshold and slope recovery error against history length.
    Learn(RunArgs),
    /// Write a sampled population as CSV.
    GeneratePopulation(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory [default: out/<scenario>].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monte-Carlo replicates.
    #[arg(long, value_name = "N")]
    replicates: Option<usize>,
    /// Override a config value by dotted path, e.g. population.n_users=500.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(self) -> (ScenarioKind, RunArgs) {
        match self {
            Command::SweepIncentives(a) => (ScenarioKind::SweepIncentives, a),
            Command::SweepUsers(a) => (ScenarioKind::SweepUsers, a),
            Command::GroupTargeting(a) => (ScenarioKind::GroupTargeting, a),
            Command::MeanVsIndividual(a) => (ScenarioKind::MeanVsIndividual, a),
            Command::Altruism(a) => (ScenarioKind::Altruism, a),
            Command::Educate(a) => (ScenarioKind::Educate, a),
            Command::Learn(a) => (ScenarioKind::Learn, a),
            Command::GeneratePopulation(a) => (ScenarioKind::GeneratePopulation, a),
        }
    }
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let inv = Invocation {
        config: args.config,
        out,
        overrides: Overrides {
            seed: args.seed,
            n_replicates: args.replicates,
            set: args.set,
        },
    };
    let code = execute(kind, &inv, &mut std::io::stderr());
    if code == Exit::Success {
        println!("{}: wrote {}", kind.name(), inv.out.display());
    }
    ExitCode::from(code as u8)
}
