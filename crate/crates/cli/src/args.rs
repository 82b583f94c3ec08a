use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Parser, Subcommand, ValueEnum};
use fanet_core::{Algo, LearnerConfig};
use std::path::PathBuf;

const ALGO_NAMES: [&str; 3] = ["best-response", "log-linear", "q-learning"];

fn algo_parser() -> impl TypedValueParser<Value = Algo> {
    PossibleValuesParser::new(ALGO_NAMES).map(|s| s.parse::<Algo>().expect("listed names parse"))
}

fn learner_help() -> String {
    let mut out = String::from("Learner settings, changed with --set learner.KEY=VALUE:\n");
    for (k, v) in LearnerConfig::default().describe() {
        if k != "algo" {
            out.push_str(&format!("  learner.{k:<14} [default: {v}]\n"));
        }
    }
    out.push_str(
        "\nAny scenario key can be overridden with a dotted path, e.g. --set seed=3,\n\
         --set weights.w_ovh=0.05 or --set uavs.0.comm_range_m=2500.\n\
         A scenario path that does not exist and is named fire.scn resolves to the bundled\n\
         scenario; FANET_SCENARIO_DIR, when set, is searched before that.",
    );
    out
}

#[derive(Debug, Parser)]
#[command(name = "sim", version, about = "Coalition-formation game simulator for UAV swarms", after_help = learner_help())]
pub struct Cli {
    /// Override a scenario key or a learner setting (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    /// Replace outputs in a directory that already holds a manifest [default: off]
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and print a one-line summary
    Validate {
        /// Scenario file (JSON)
        scenario: PathBuf,
    },
    /// Run one simulation and write metrics, events, trace and manifest
    Run {
        /// Scenario file (JSON)
        scenario: PathBuf,
        /// Learning dynamics
        #[arg(long, default_value = "best-response", value_parser = algo_parser())]
        algo: Algo,
        /// RNG seed [default: the scenario's seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
    },
    /// Run one algorithm over consecutive seeds starting at the scenario's seed
    Sweep {
        /// Scenario file (JSON)
        scenario: PathBuf,
        /// Learning dynamics
        #[arg(long, default_value = "best-response", value_parser = algo_parser())]
        algo: Algo,
        /// Number of seeds
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
        seeds: u32,
        /// Output directory
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Run several algorithms over the same seeds and plot their convergence
    Compare {
        /// Scenario file (JSON)
        scenario: PathBuf,
        /// Comma-separated learning dynamics
        #[arg(long, value_delimiter = ',', default_value = "best-response,q-learning", value_parser = algo_parser())]
        algos: Vec<Algo>,
        /// Number of seeds
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
        seeds: u32,
        /// Output directory
        #[arg(long, default_value = "out/compare")]
        out: PathBuf,
    },
    /// Render an SVG from a trace.json, metrics.csv or curves.csv
    Plot {
        /// trace.json, metrics.csv or curves.csv
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotKind::Objective)]
        kind: PlotKind,
        /// Output SVG file
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Objective against iteration, one line per algorithm
    Convergence,
    /// Final positions, coverage disks, coalition hulls and leaders
    Layout,
    /// Coverage, overhead and objective against step
    Objective,
}
