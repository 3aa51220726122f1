mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structsynth::synthesis::Ablation;

use config::PipelineConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "structsynth", version, about = "Structure-guided synthetic tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover the dependency graph and write graph.json.
    Discover(Common),
    /// Generate synthetic rows from a graph file.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Graph JSON; defaults to the config's graph, then <out>/graph.json.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Score a synthetic CSV against the real train/test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Synthetic CSV; defaults to <out>/synthetic.csv.
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Use unscaled distances for the privacy score.
        #[arg(long)]
        raw_distance: bool,
    },
    /// Run discover, synthesize and evaluate in sequence.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// full, no_topological_order, no_structure or bayesian_sampler.
    #[arg(long)]
    ablation: Option<Ablation>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        let seed = self.seed.unwrap_or(cfg.seed);
        cfg.set_seed(seed);
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(a) = self.ablation {
            cfg.synthesis.ablation = a;
        }
        if let Some(m) = &self.mock_script {
            cfg.set_mock_script(m.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Discover(c) => commands::discover(&c.resolve()?).map(drop),
        Command::Synthesize { common, graph } => {
            commands::synthesize_cmd(&common.resolve()?, graph.as_deref()).map(drop)
        }
        Command::Evaluate {
            common,
            synth,
            raw_distance,
        } => {
            let mut cfg = common.resolve()?;
            cfg.evaluation.raw_distance |= raw_distance;
            commands::evaluate_cmd(&cfg, synth.as_deref()).map(drop)
        }
        Command::Pipeline(c) => commands::pipeline(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
