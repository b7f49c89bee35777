use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvc_core::experiment::{run, RunConfig, RunOptions, Scenario};

/// Venture fund experiments: utility sweeps, fund simulations, paired
/// comparisons and automation evaluations.
#[derive(Parser, Debug)]
#[command(name = "dvcsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// GP utility across fund multiples for each parameter variant.
    UtilitySweep(Common),
    /// Monte Carlo lifecycle of the standard fund.
    SimulateStandard(Common),
    /// Distributed firm trials, or a scripted event replay.
    SimulateDistributed(Common),
    /// Paired standard vs distributed comparison.
    Compare(Common),
    /// Automation rules against generated or scripted deal flow.
    MatchEval(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; every section is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(common: &Common, scenario: Scenario) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    cfg.scenario = scenario;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(d) = &common.out_dir {
        cfg.output_dir = d.clone();
    }
    if common.svg {
        cfg.output.svg = true;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DVC_LOG", "warn")).init();
    let cli = Cli::parse();
    let (common, scenario) = match &cli.command {
        Command::UtilitySweep(c) => (c, Scenario::UtilitySweep),
        Command::SimulateStandard(c) => (c, Scenario::StandardSim),
        Command::SimulateDistributed(c) => (c, Scenario::DistributedSim),
        Command::Compare(c) => (c, Scenario::Compare),
        Command::MatchEval(c) => (c, Scenario::MatchEval),
    };
    let cfg = match load(common, scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, RunOptions { threads: common.threads }) {
        Ok(m) => {
            log::info!("finished in {:.3}s", m.wall_seconds);
            println!("{}", cfg.output_dir.join("manifest.json").display());
            for f in &m.outputs {
                println!("  {}  {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
