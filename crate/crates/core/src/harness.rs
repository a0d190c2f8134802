//! Experiment orchestration: configuration, presets, training and
//! evaluation loops, metrics files and the reverse-circuit initial mapping.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::circuit::{random_circuit, CircuitDag};
use crate::env::{Env, EnvConfig, EnvState, Status};
use crate::error::{Error, Result};
use crate::learn::{select_action, train_step, Adam, AgentConfig, Algo, QNetwork, ReplayBuffer};
use crate::par::{map_indexed, ExecMode};
use crate::rng::{derive_seed, stream, Rng, Stream};
use crate::topology::{unify, CouplingGraph, NodeId, QuantumLink};

/// QPUs by builder spec (`guadalupe`, `line:<n>`, `file:<path>`) and the
/// quantum links `[qpu_a, node_a, qpu_b, node_b]` between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub qpus: Vec<String>,
    #[serde(default)]
    pub links: Vec<[usize; 4]>,
}

impl TopologySpec {
    pub fn build(&self) -> Result<CouplingGraph> {
        let parts = self.qpus.iter().map(|s| CouplingGraph::from_spec(s)).collect::<Result<Vec<_>>>()?;
        let links: Vec<QuantumLink> = self.links.iter().map(|&l| l.into()).collect();
        Ok(unify(&parts, &links)?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CircuitSpec {
    /// A fresh random circuit per episode.
    Random { qubits: usize, gates: usize },
    /// The same circuit every episode.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Fill `wall_ms` with measured time; off by default so that metric
    /// files are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_clock: bool,
    pub topology: TopologySpec,
    pub circuit: CircuitSpec,
    /// Fixed initial node of every circuit qubit; random per episode when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Vec<NodeId>>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        let graph = self.topology.build().map_err(as_validation)?;
        let (qubits, gates) = match &self.circuit {
            CircuitSpec::Random { qubits, gates } => (*qubits, *gates),
            CircuitSpec::File { path } => {
                if !path.exists() {
                    return Err(Error::Validation(format!("circuit file {} does not exist", path.display())));
                }
                let c = CircuitDag::from_file(path)?;
                (c.num_qubits(), c.num_gates())
            }
        };
        if qubits == 0 || qubits > graph.num_nodes() {
            return Err(Error::Validation(format!("{qubits} qubits on {} nodes", graph.num_nodes())));
        }
        if gates > self.env.g_max {
            return Err(Error::Validation(format!("{gates} gates exceed g_max {}", self.env.g_max)));
        }
        if let Some(p) = &self.placement {
            let mut seen = vec![false; graph.num_nodes()];
            if p.len() != qubits || p.iter().any(|&v| v >= seen.len() || std::mem::replace(&mut seen[v], true)) {
                return Err(Error::Validation("placement must put every qubit on its own node".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn build_env(&self) -> Result<Env> {
        Env::new(Arc::new(self.topology.build()?), self.env)
    }

    pub fn arch(&self, env: &Env) -> Vec<usize> {
        vec![env.feature_len(), self.agent.hidden[0], self.agent.hidden[1], env.num_actions()]
    }
}

fn as_validation(e: Error) -> Error {
    match e {
        Error::Io(_) => e,
        other => Error::Validation(other.to_string()),
    }
}

pub const PRESETS: &[&str] = &[
    "guadalupe2_p095",
    "guadalupe2_dqn_p095",
    "guadalupe2_p070",
    "guadalupe2_p050",
    "guadalupe2_g40",
    "guadalupe2_g50",
    "desk_small",
    "desk_stoch",
];

/// Two Guadalupe QPUs joined between node 15 of the first and node 0 of the
/// second, 18 circuit qubits.
fn guadalupe2(gates: usize, p_gen: f64, algo: Algo, hidden: [usize; 2]) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        episodes: 10_000,
        out_dir: None,
        record_wall_clock: false,
        topology: TopologySpec { qpus: vec!["guadalupe".into(), "guadalupe".into()], links: vec![[0, 15, 1, 0]] },
        circuit: CircuitSpec::Random { qubits: 18, gates },
        placement: None,
        env: EnvConfig { p_gen, g_max: gates, ..EnvConfig::default() },
        agent: AgentConfig { algo, hidden, ..AgentConfig::default() },
    }
}

/// Two 4-node lines joined end to start, 6 qubits, 10 gates.
fn desk(p_gen: f64) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        episodes: 3000,
        out_dir: None,
        record_wall_clock: false,
        topology: TopologySpec { qpus: vec!["line:4".into(), "line:4".into()], links: vec![[0, 3, 1, 0]] },
        circuit: CircuitSpec::Random { qubits: 6, gates: 10 },
        placement: None,
        env: EnvConfig { p_gen, g_max: 10, ..EnvConfig::default() },
        agent: AgentConfig {
            lr: 1e-4,
            batch: 256,
            buffer: 20_000,
            tau: 0.01,
            train_every: 5,
            train_iters: 1,
            hidden: [64, 64],
            ..AgentConfig::default()
        },
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    Some(match name {
        "guadalupe2_p095" => guadalupe2(30, 0.95, Algo::Ddqn, [140, 150]),
        "guadalupe2_dqn_p095" => guadalupe2(30, 0.95, Algo::Dqn, [140, 150]),
        "guadalupe2_p070" => guadalupe2(30, 0.7, Algo::Ddqn, [240, 200]),
        "guadalupe2_p050" => guadalupe2(30, 0.5, Algo::Ddqn, [240, 200]),
        "guadalupe2_g40" => guadalupe2(40, 0.95, Algo::Ddqn, [140, 150]),
        "guadalupe2_g50" => guadalupe2(50, 0.95, Algo::Ddqn, [140, 150]),
        "desk_small" => desk(1.0),
        "desk_stoch" => desk(0.7),
        _ => return None,
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Resolves a configuration: the preset (if any) overlaid with the keys of
/// the TOML text (if any). At least one must be given.
pub fn resolve_config(toml_text: Option<&str>, preset_name: Option<&str>) -> Result<ExperimentConfig> {
    let config = match (toml_text, preset_name) {
        (None, None) => return Err(Error::Validation("need a config file or a preset".into())),
        (Some(text), None) => ExperimentConfig::from_toml(text).map_err(as_validation)?,
        (text, Some(name)) => {
            let base = preset(name).ok_or_else(|| Error::Validation(format!("unknown preset {name:?}")))?;
            let mut value = toml::Value::try_from(&base)?;
            if let Some(text) = text {
                let over: toml::Value = toml::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
                merge(&mut value, over);
            }
            value.try_into().map_err(|e: toml::de::Error| Error::Validation(e.to_string()))?
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: Option<&Path>, preset_name: Option<&str>) -> Result<ExperimentConfig> {
    let text = path.map(fs::read_to_string).transpose()?;
    resolve_config(text.as_deref(), preset_name)
}

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub gates_total: usize,
    pub gates_completed: usize,
    /// Slots elapsed.
    pub stops_used: usize,
    pub success: bool,
    pub cum_reward: f64,
    pub epsilon: f64,
    pub wall_ms: u64,
}

impl EpisodeRecord {
    pub fn check(&self, deadline: usize) -> Result<()> {
        let ok = if self.success {
            self.gates_completed == self.gates_total && self.stops_used <= deadline
        } else {
            self.stops_used == deadline
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("episode record {} breaks its invariants", self.episode)))
        }
    }
}

pub const CSV_HEADER: &str = "episode,seed,gates_total,gates_completed,stops_used,success,cum_reward,epsilon,wall_ms";

pub fn write_metrics<W: std::io::Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_metrics(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    write_metrics(records, fs::File::create(path)?)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Validation(format!("unexpected metrics header {:?}", header.join(","))));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Greedy,
    Random,
}

/// Runs one episode to its end and returns the final state and the summed
/// reward. `net` is ignored for the random policy.
pub fn rollout(
    env: &Env,
    net: &QNetwork,
    circuit: &CircuitDag,
    placement: Option<&[NodeId]>,
    seed: u64,
    policy: Policy,
) -> Result<(EnvState, f64)> {
    let (mut state, first) = env.reset(circuit, placement, seed)?;
    let mut total = first.reward;
    let mut rng = stream(seed, Stream::Exploration);
    let eps = match policy {
        Policy::Greedy => 0.0,
        Policy::Random => 1.0,
    };
    let mut s = vec![0.0; env.state_len()];
    while state.status() == Status::Running {
        env.encode_into(&state, &mut s)?;
        let a = select_action(net, &s, eps, &mut rng)?;
        total += env.step(&mut state, a)?.reward;
    }
    Ok((state, total))
}

fn episode_circuit(spec: &CircuitSpec, fixed: Option<&CircuitDag>, rng: &mut Rng) -> Result<CircuitDag> {
    match spec {
        CircuitSpec::Random { qubits, gates } => random_circuit(*qubits, *gates, rng),
        CircuitSpec::File { .. } => Ok(fixed.expect("file circuit loaded up front").clone()),
    }
}

fn load_fixed(spec: &CircuitSpec) -> Result<Option<CircuitDag>> {
    match spec {
        CircuitSpec::File { path } => Ok(Some(CircuitDag::from_file(path)?)),
        CircuitSpec::Random { .. } => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub model: QNetwork,
}

/// Trains an agent, calling `observe` after every episode.
pub fn train_with(config: &ExperimentConfig, mut observe: impl FnMut(&EpisodeRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    let env = config.build_env()?;
    let cfg = &config.agent;
    let seed = config.seed;
    let mut online = QNetwork::new(&config.arch(&env), &mut stream(seed, Stream::Init))?;
    let mut target = online.clone();
    let mut adam = Adam::new(&online, cfg.lr);
    let mut buffer = ReplayBuffer::new(cfg.buffer, env.state_len());
    let mut circuit_rng = stream(seed, Stream::Circuit);
    let mut explore_rng = stream(seed, Stream::Exploration);
    let mut replay_rng = stream(seed, Stream::Replay);
    let fixed = load_fixed(&config.circuit)?;

    let mut records = Vec::with_capacity(config.episodes);
    let mut s = vec![0.0; env.state_len()];
    let mut s2 = vec![0.0; env.state_len()];
    let mut actions = 0usize;
    for episode in 0..config.episodes {
        let start = Instant::now();
        let eps = cfg.epsilon(episode);
        let circuit = episode_circuit(&config.circuit, fixed.as_ref(), &mut circuit_rng)?;
        let (mut state, first) =
            env.reset(&circuit, config.placement.as_deref(), derive_seed(seed, Stream::Episode, episode as u64))?;
        let mut total = first.reward;
        env.encode_into(&state, &mut s)?;
        while state.status() == Status::Running {
            let a = select_action(&online, &s, eps, &mut explore_rng)?;
            let step = env.step(&mut state, a)?;
            total += step.reward;
            let done = state.status() != Status::Running;
            env.encode_into(&state, &mut s2)?;
            buffer.push(&s, a, step.reward, &s2, done)?;
            std::mem::swap(&mut s, &mut s2);
            actions += 1;
            if actions.is_multiple_of(cfg.train_every) {
                for _ in 0..cfg.train_iters {
                    train_step(&mut online, &mut target, &mut adam, &buffer, cfg, &mut replay_rng)?;
                }
            }
        }
        let c = state.counters();
        let record = EpisodeRecord {
            episode,
            seed,
            gates_total: circuit.num_gates(),
            gates_completed: c.gates_completed(),
            stops_used: state.slot(),
            success: state.status() == Status::Success,
            cum_reward: total,
            epsilon: eps,
            wall_ms: if config.record_wall_clock { start.elapsed().as_millis() as u64 } else { 0 },
        };
        record.check(config.env.deadline)?;
        observe(&record);
        records.push(record);
    }
    Ok(TrainOutcome { records, model: online })
}

pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    train_with(config, |_| {})
}

/// Trains and writes `metrics.csv`, `model.json` and the resolved
/// `config.toml` into `out_dir`.
pub fn train_to_dir(
    config: &ExperimentConfig,
    out_dir: &Path,
    observe: impl FnMut(&EpisodeRecord),
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), config.to_toml()?)?;
    let outcome = train_with(config, observe)?;
    emit_metrics(&outcome.records, &out_dir.join("metrics.csv"))?;
    outcome.model.save(&out_dir.join("model.json"), config.seed)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_stops: f64,
    pub mean_reward: f64,
}

impl EvalSummary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let n = records.len().max(1) as f64;
        EvalSummary {
            episodes: records.len(),
            success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
            mean_stops: records.iter().map(|r| r.stops_used as f64).sum::<f64>() / n,
            mean_reward: records.iter().map(|r| r.cum_reward).sum::<f64>() / n,
        }
    }
}

/// Checks that a network fits the environment's input and action sizes.
pub fn check_arch(net: &QNetwork, env: &Env) -> Result<()> {
    if net.input_len() != env.feature_len() || net.num_actions() != env.num_actions() {
        return Err(Error::Validation(format!(
            "model arch {:?} does not match {} features and {} actions",
            net.sizes(),
            env.feature_len(),
            env.num_actions()
        )));
    }
    Ok(())
}

/// Rollouts without training. Episode `i` draws its circuit and placement
/// from seeds derived from `(config.seed, i)`, so episodes are independent
/// and may run in parallel.
pub fn evaluate(
    net: &QNetwork,
    config: &ExperimentConfig,
    episodes: usize,
    policy: Policy,
    mode: ExecMode,
) -> Result<(EvalSummary, Vec<EpisodeRecord>)> {
    config.validate()?;
    let env = config.build_env()?;
    check_arch(net, &env)?;
    let fixed = load_fixed(&config.circuit)?;
    let records = map_indexed(episodes, mode, |i| -> Result<EpisodeRecord> {
        let ep_seed = derive_seed(config.seed, Stream::Eval, i as u64);
        let circuit = episode_circuit(&config.circuit, fixed.as_ref(), &mut stream(ep_seed, Stream::Circuit))?;
        let (state, total) = rollout(&env, net, &circuit, config.placement.as_deref(), ep_seed, policy)?;
        Ok(EpisodeRecord {
            episode: i,
            seed: config.seed,
            gates_total: circuit.num_gates(),
            gates_completed: state.counters().gates_completed(),
            stops_used: state.slot(),
            success: state.status() == Status::Success,
            cum_reward: total,
            epsilon: if policy == Policy::Random { 1.0 } else { 0.0 },
            wall_ms: 0,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((EvalSummary::from_records(&records), records))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialMap {
    pub placement: Vec<NodeId>,
    /// False when one of the two compilations hit the deadline; the
    /// placement is then the best effort reached.
    pub complete: bool,
}

/// Compiles the circuit greedily from a random placement, then compiles
/// its reverse starting where the first run ended; the final placement of
/// the reverse run is the mapping.
pub fn initial_map(env: &Env, net: &QNetwork, circuit: &CircuitDag, seed: u64) -> Result<InitialMap> {
    check_arch(net, env)?;
    let (first, _) = rollout(env, net, circuit, None, seed, Policy::Greedy)?;
    let mid = first.qubit_nodes().to_vec();
    let (second, _) =
        rollout(env, net, &circuit.reverse(), Some(&mid), derive_seed(seed, Stream::Episode, 1), Policy::Greedy)?;
    Ok(InitialMap {
        placement: second.qubit_nodes().to_vec(),
        complete: first.status() == Status::Success && second.status() == Status::Success,
    })
}
