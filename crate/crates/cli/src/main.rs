use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use dqc_core::harness::{self, ExperimentConfig, Policy};
use dqc_core::learn::QNetwork;
use dqc_core::oracle;
use dqc_core::par::ExecMode;
use dqc_core::{CircuitDag, CouplingGraph, EnvConfig, Result};

#[derive(Parser)]
#[command(name = "dqcc", version, about = "Distributed quantum circuit compiler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write metrics.csv, model.json and config.toml.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Overrides the episode count of the configuration.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out a trained model without learning and print a JSON summary.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "greedy")]
        policy: PolicyArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-episode records to this CSV file.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Exact minimum slot count for a tiny instance with certain generation.
    Oracle {
        /// `guadalupe`, `line:<n>` or `file:<topology.json>`.
        #[arg(long)]
        topology: String,
        #[arg(long)]
        circuit: PathBuf,
        /// JSON array with the node of every circuit qubit.
        #[arg(long)]
        placement: PathBuf,
        #[arg(long, default_value_t = 2_000_000)]
        budget: usize,
    },
    /// Initial placement by compiling the circuit and then its reverse.
    Map {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Greedy,
    Random,
}

fn load(config: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    harness::load_config(config, preset)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, preset, out, seed, episodes, quiet } => {
            let mut cfg = load(config.as_deref(), preset.as_deref())?;
            cfg.seed = seed;
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            cfg.out_dir = Some(out.clone());
            let total = cfg.episodes;
            let every = (total / 20).max(1);
            let outcome = harness::train_to_dir(&cfg, &out, |r| {
                if !quiet && (r.episode + 1) % every == 0 {
                    eprintln!(
                        "episode {}/{}: stops {} success {} reward {:.1} eps {:.3}",
                        r.episode + 1,
                        total,
                        r.stops_used,
                        r.success,
                        r.cum_reward,
                        r.epsilon
                    );
                }
            })?;
            let tail = &outcome.records[outcome.records.len().saturating_sub(100)..];
            let summary = harness::EvalSummary::from_records(tail);
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Eval { model, config, preset, episodes, policy, seed, records, sequential } => {
            let mut cfg = load(config.as_deref(), preset.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (net, _) = QNetwork::load(&model)?;
            let policy = match policy {
                PolicyArg::Greedy => Policy::Greedy,
                PolicyArg::Random => Policy::Random,
            };
            let mode = if sequential { ExecMode::Sequential } else { ExecMode::Parallel };
            let (summary, rows) = harness::evaluate(&net, &cfg, episodes, policy, mode)?;
            if let Some(path) = records {
                harness::emit_metrics(&rows, &path)?;
            }
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Oracle { topology, circuit, placement, budget } => {
            let graph = Arc::new(CouplingGraph::from_spec(&topology)?);
            let circuit = CircuitDag::from_file(&circuit)?;
            let placement: Vec<usize> = serde_json::from_str(&std::fs::read_to_string(&placement)?)?;
            let config = EnvConfig { p_gen: 1.0, g_max: circuit.num_gates().max(1), ..EnvConfig::default() };
            let env = dqc_core::Env::new(graph.clone(), config)?;
            let found = oracle::min_stops(graph, &circuit, &placement, config, budget)?;
            let json = match found {
                Some(sol) => {
                    let kinds: Vec<_> = sol.actions.iter().map(|&a| env.table().kind(a)).collect();
                    serde_json::json!({ "stops": sol.stops, "actions": sol.actions, "kinds": kinds, "explored": sol.explored })
                }
                None => serde_json::json!({ "stops": null, "actions": [] }),
            };
            println!("{json}");
        }
        Command::Map { circuit, model, config, preset, seed } => {
            let cfg = load(config.as_deref(), preset.as_deref())?;
            let env = cfg.build_env()?;
            let (net, _) = QNetwork::load(&model)?;
            let circuit = CircuitDag::from_file(&circuit)?;
            let map = harness::initial_map(&env, &net, &circuit, seed)?;
            if !map.complete {
                eprintln!("warning: a compilation hit the deadline; placement is best effort");
            }
            println!("{}", serde_json::to_string(&map)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
