use std::fs;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scout_core::dataset::{build_dataset, DatasetSpec};
use scout_core::envgen::{generate, EnvKind, EnvSpec, Scenario};
use scout_core::harness::{run_experiment, write_report, ExperimentSpec};
use scout_core::planner::{run_episode, sample_true_world, PlannerConfig, PlannerKind};
use scout_core::pruning::predictor::{serve_oracle, DEFAULT_TIMEOUT_MS};
use scout_core::pruning::{OracleConfig, PredictorConfig};

#[derive(Parser)]
#[command(name = "scout", version, about = "Ground robot and scouting drone planning on uncertain graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment and team.
    Gen {
        #[arg(long)]
        kind: EnvKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        ugv: usize,
        #[arg(long, default_value_t = 1)]
        uav: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop episode against a sampled true world.
    Run {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        planner: PlannerKind,
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
        #[arg(long, default_value_t = 1)]
        topk: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Oracle samples per edge for sap-iap.
        #[arg(long, default_value_t = 1000)]
        mc: usize,
        /// Predictor command for sap-liap, split on whitespace.
        #[arg(long)]
        predictor: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
        predictor_timeout_ms: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a labeled value-change dataset (NDJSON, gzip if the path ends in .gz).
    Dataset {
        #[arg(long, default_value_t = 2000)]
        graphs: usize,
        #[arg(long, default_value_t = 3)]
        robots: usize,
        #[arg(long, default_value_t = 1000)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated environment kinds, cycled over graphs.
        #[arg(long, value_delimiter = ',', default_value = "bridges,islands,dense")]
        kinds: Vec<EnvKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid from a TOML or JSON spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer predictor requests on stdin with the Monte Carlo oracle.
    ServeOracle {
        #[arg(long, default_value_t = 1000)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Gen { kind, seed, ugv, uav, out } => {
            let scenario = generate(&EnvSpec::new(kind, seed, ugv, uav))?;
            fs::write(&out, scenario.to_json()?).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Run { env, planner, rollouts, topk, seed, mc, predictor, predictor_timeout_ms, out } => {
            let text = fs::read_to_string(&env).with_context(|| format!("reading {}", env.display()))?;
            let scenario = Scenario::from_json(&text)?;
            let team = if planner.uses_drones() { scenario.team.clone() } else { scenario.team.without_drones() };
            let predictor = predictor.map(|c| PredictorConfig {
                command: c.split_whitespace().map(String::from).collect(),
                timeout_ms: predictor_timeout_ms,
            });
            let oracle = OracleConfig { samples: mc, ..OracleConfig::default() };
            let config = PlannerConfig {
                rollouts_per_step: rollouts,
                pruning: planner.pruning(topk, &oracle, predictor.as_ref())?,
                seed,
                ..PlannerConfig::default()
            };
            let world = sample_true_world(&scenario.graph, &scenario.team, seed)?;
            let result = run_episode(&scenario.graph, &team, &config, &world)?;
            let doc = serde_json::json!({ "planner": planner, "config": config, "world": world, "result": result });
            fs::write(&out, serde_json::to_string_pretty(&doc)?)?;
            println!(
                "{planner}: distance {:.2} m in {} steps{}",
                result.total_ugv_distance,
                result.num_decision_steps,
                if result.completed { "" } else { " (step cap reached)" }
            );
        }
        Command::Dataset { graphs, robots, mc, seed, kinds, out } => {
            let spec = DatasetSpec {
                num_graphs: graphs,
                kinds,
                robots_per_graph: robots,
                oracle: OracleConfig { samples: mc, ..OracleConfig::default() },
                seed,
                out,
            };
            let summary = build_dataset(&spec)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Bench { spec, out } => {
            let spec = ExperimentSpec::load(&spec)?;
            let report = run_experiment(&spec)?;
            write_report(&out, &report)?;
            print!("{}", scout_core::harness::markdown_table(&report.rows));
        }
        Command::ServeOracle { mc, seed } => {
            if mc == 0 {
                bail!("--mc must be positive");
            }
            let cfg = OracleConfig { samples: mc, seed, ..OracleConfig::default() };
            serve_oracle(io::stdin().lock(), BufWriter::new(io::stdout().lock()), &cfg)?;
        }
    }
    Ok(())
}
