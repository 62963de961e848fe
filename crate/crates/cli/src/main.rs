use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mirage_core::config::{Fusion, LmProvider, PathMode, PipelineConfig};
use mirage_core::pipeline::{Pipeline, Stage};

#[derive(Parser)]
#[command(
    name = "mirage",
    version,
    about = "Startup success prediction over an investment graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to <out>/data.
    GenData(Opts),
    /// Split targets and score every candidate path extension.
    LabelGains(Opts),
    TrainSelector(Opts),
    /// Compare the trained selector with random scoring on test groups.
    EvalSelector(Opts),
    /// Retrieve evidence and run the specialist agents for every target.
    RunAgents(Opts),
    TrainGate(Opts),
    /// Fuse verdicts for test targets.
    Predict(Opts),
    /// Write metrics.csv and monthly.csv.
    Evaluate(Opts),
    /// Every stage in order.
    All(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum PathsArg {
    All,
    Random,
    Selector,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Single,
    Fixed,
    Gate,
}

#[derive(Args, Clone)]
struct Opts {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the deterministic rule-based model instead of the HTTP one.
    #[arg(long)]
    mock_llm: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved plan without reading or writing anything.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    no_graph: bool,
    #[arg(long, value_enum)]
    paths: Option<PathsArg>,
    #[arg(long)]
    no_peers: bool,
    #[arg(long)]
    no_investor: bool,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    /// NAME=PATH of a metrics.csv to compare against; repeatable.
    #[arg(long = "baseline", value_name = "NAME=PATH")]
    baselines: Vec<String>,
}

impl Opts {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.mock_llm {
            c.gateway.provider = LmProvider::Mock;
        }
        let a = &mut c.ablation;
        a.no_graph |= self.no_graph;
        a.no_peers |= self.no_peers;
        a.no_investor |= self.no_investor;
        if let Some(p) = self.paths {
            a.paths = match p {
                PathsArg::All => PathMode::All,
                PathsArg::Random => PathMode::Random,
                PathsArg::Selector => PathMode::Selector,
            };
        }
        if let Some(f) = self.fusion {
            a.fusion = match f {
                FusionArg::Single => Fusion::Single,
                FusionArg::Fixed => Fusion::Fixed,
                FusionArg::Gate => Fusion::Gate,
            };
        }
        for b in &self.baselines {
            let Some((name, path)) = b.split_once('=') else {
                bail!("--baseline expects NAME=PATH, got {b:?}");
            };
            c.baselines.push((name.to_string(), PathBuf::from(path)));
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stage, opts) = match cli.command {
        Command::GenData(o) => (Some(Stage::GenData), o),
        Command::LabelGains(o) => (Some(Stage::LabelGains), o),
        Command::TrainSelector(o) => (Some(Stage::TrainSelector), o),
        Command::EvalSelector(o) => (Some(Stage::EvalSelector), o),
        Command::RunAgents(o) => (Some(Stage::RunAgents), o),
        Command::TrainGate(o) => (Some(Stage::TrainGate), o),
        Command::Predict(o) => (Some(Stage::Predict), o),
        Command::Evaluate(o) => (Some(Stage::Evaluate), o),
        Command::All(o) => (None, o),
    };
    let pipeline = Pipeline::new(opts.resolve()?)?;
    let stages: Vec<Stage> = match stage {
        Some(s) => vec![s],
        None => Stage::ALL
            .into_iter()
            .filter(|s| *s != Stage::GenData || pipeline.config().data_dir.is_none())
            .collect(),
    };
    if opts.dry_run {
        for s in stages {
            print!("{}", pipeline.plan(s));
        }
        print!("{}", pipeline.config().to_toml()?);
        return Ok(());
    }
    for s in stages {
        let report = pipeline.run(s).with_context(|| format!("{s} failed"))?;
        println!("[{s}]");
        print!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
