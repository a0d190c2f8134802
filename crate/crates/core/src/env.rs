//! The distributed compilation environment.
//!
//! One primitive action is taken at a time; `Stop` closes the current time
//! slot. Occupied nodes carry a cooldown counting the `Stop`s that must pass
//! before they are usable again:
//!
//! | primitive  | cooldown |
//! |------------|----------|
//! | swap       | 3        |
//! | score      | 1        |
//! | tele-gate  | κ + 1    |
//! | tele-qubit | κ + 1    |
//! | generate   | λ        |
//!
//! After every action the environment scores every frontier gate whose
//! operands sit on a coupling edge, and teleports every frontier gate whose
//! operands neighbour the two halves of a live EPR pair.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitDag, GateId, QubitId};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};
use crate::shaping::{r_dist, ShapingGraph};
use crate::topology::{CouplingGraph, NodeId};

pub type PairId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupant {
    Empty,
    Circuit(QubitId),
    EprHalf(PairId),
}

/// One entry of the flattened action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "edge", rename_all = "snake_case")]
pub enum ActionKind {
    Stop,
    /// Swap across coupling edge `i`.
    Swap(usize),
    /// Teleport the circuit qubit on coupling edge `i` through the EPR half
    /// on its other end.
    TeleQubit(usize),
    /// Start entanglement generation on quantum link `i`.
    Generate(usize),
}

/// `Stop`, then one swap per coupling edge, one tele-qubit per coupling
/// edge, and one generate per quantum link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTable {
    entries: Vec<ActionKind>,
    num_p: usize,
}

impl ActionTable {
    pub fn new(graph: &CouplingGraph) -> Self {
        let num_p = graph.edges_p().len();
        let num_n = graph.edges_n().len();
        let mut entries = Vec::with_capacity(1 + 2 * num_p + num_n);
        entries.push(ActionKind::Stop);
        entries.extend((0..num_p).map(ActionKind::Swap));
        entries.extend((0..num_p).map(ActionKind::TeleQubit));
        entries.extend((0..num_n).map(ActionKind::Generate));
        ActionTable { entries, num_p }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kind(&self, index: usize) -> Option<ActionKind> {
        self.entries.get(index).copied()
    }

    pub fn entries(&self) -> &[ActionKind] {
        &self.entries
    }

    pub fn index_of(&self, kind: ActionKind) -> usize {
        match kind {
            ActionKind::Stop => 0,
            ActionKind::Swap(e) => 1 + e,
            ActionKind::TeleQubit(e) => 1 + self.num_p + e,
            ActionKind::Generate(l) => 1 + 2 * self.num_p + l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Paid for every executed gate, local or teleported.
    pub score: f64,
    /// Paid once when the circuit completes.
    pub success: f64,
    /// Magnitude of the penalty at the deadline; applied as `-fail`.
    pub fail: f64,
    /// Added on every `Stop`; negative.
    pub stop: f64,
    /// Scale of the distance shaping term.
    pub xi: f64,
    /// Shaping weight of a quantum link.
    pub w_qlink: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { score: 500.0, success: 3000.0, fail: 3000.0, stop: -20.0, xi: 18.0, w_qlink: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub p_gen: f64,
    /// Classical communication slots of a teleportation.
    pub kappa: u32,
    /// Slots of one entanglement generation attempt.
    pub lambda_gen: u32,
    /// Slot budget N.
    pub deadline: usize,
    pub rewards: RewardConfig,
    /// Gate capacity of the DAG encoding.
    pub g_max: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { p_gen: 0.95, kappa: 5, lambda_gen: 5, deadline: 1500, rewards: RewardConfig::default(), g_max: 30 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_gen) {
            return Err(Error::Validation(format!("p_gen {} outside [0, 1]", self.p_gen)));
        }
        if self.kappa < 1 || self.lambda_gen < 1 || self.deadline < 1 {
            return Err(Error::Validation("kappa, lambda_gen and deadline must be >= 1".into()));
        }
        if self.rewards.w_qlink <= 0.0 {
            return Err(Error::Validation("w_qlink must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Success,
    Failure,
}

/// Running totals of one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub stops: usize,
    pub swaps: usize,
    pub tele_qubits: usize,
    pub tele_gates: usize,
    pub local_scores: usize,
    pub generate_attempts: usize,
    pub generate_successes: usize,
    pub generate_failures: usize,
}

impl Counters {
    pub fn gates_completed(&self) -> usize {
        self.local_scores + self.tele_gates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub status: Status,
    pub scored_gates: Vec<GateId>,
    pub info: Counters,
}

/// One executed primitive of the compiled circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub slot: usize,
    pub op: LogOp,
    pub nodes: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gate: Option<GateId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pair: Option<PairId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogOp {
    Swap,
    Score,
    TeleGate,
    TeleQubit,
    Generate,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pair {
    a: NodeId,
    b: NodeId,
    /// Shared S_loc code slot of the two halves.
    code: usize,
}

/// Full MDP state of one episode.
#[derive(Debug, Clone)]
pub struct EnvState {
    placement: Vec<Occupant>,
    qubit_node: Vec<NodeId>,
    pairs: BTreeMap<PairId, Pair>,
    next_pair: PairId,
    pending: Vec<u32>,
    cooldown: Vec<u32>,
    dag: CircuitDag,
    slot: usize,
    status: Status,
    counters: Counters,
    rng: Rng,
    log: Option<Vec<LogRecord>>,
}

impl EnvState {
    pub fn occupant(&self, v: NodeId) -> Occupant {
        self.placement[v]
    }

    pub fn placement(&self) -> &[Occupant] {
        &self.placement
    }

    /// Node of every circuit qubit.
    pub fn qubit_nodes(&self) -> &[NodeId] {
        &self.qubit_node
    }

    pub fn cooldown(&self, v: NodeId) -> u32 {
        self.cooldown[v]
    }

    pub fn cooldowns(&self) -> &[u32] {
        &self.cooldown
    }

    pub fn pending(&self) -> &[u32] {
        &self.pending
    }

    pub fn dag(&self) -> &CircuitDag {
        &self.dag
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Node pairs of the live EPR pairs, by pair id.
    pub fn live_pairs(&self) -> Vec<(PairId, NodeId, NodeId)> {
        self.pairs.iter().map(|(&id, p)| (id, p.a, p.b)).collect()
    }

    pub fn num_live_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn partner_node(&self, v: NodeId) -> Option<NodeId> {
        match self.placement[v] {
            Occupant::EprHalf(p) => {
                let pair = &self.pairs[&p];
                Some(if pair.a == v { pair.b } else { pair.a })
            }
            _ => None,
        }
    }

    /// Turns on the execution log.
    pub fn enable_log(&mut self) {
        if self.log.is_none() {
            self.log = Some(Vec::new());
        }
    }

    pub fn log(&self) -> &[LogRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// Execution log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in self.log() {
            out.push_str(&serde_json::to_string(rec).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    /// Digest identifying the state up to pair ids, codes and the RNG.
    pub fn canonical(&self) -> CanonicalState {
        let nq = self.qubit_node.len();
        let mut v = Vec::with_capacity(2 * self.placement.len() + self.pending.len() + self.dag.num_gates());
        for node in 0..self.placement.len() {
            let code = match self.placement[node] {
                Occupant::Empty => 0,
                Occupant::Circuit(q) => 1 + q,
                Occupant::EprHalf(_) => 1 + nq + self.partner_node(node).expect("half has a partner"),
            };
            v.push(code as u16);
            v.push(self.cooldown[node] as u16);
        }
        v.extend(self.pending.iter().map(|&p| p as u16));
        let mut bits = 0u16;
        for (i, &d) in self.dag.done_mask().iter().enumerate() {
            if d {
                bits |= 1 << (i % 16);
            }
            if i % 16 == 15 {
                v.push(bits);
                bits = 0;
            }
        }
        v.push(bits);
        CanonicalState(v.into_boxed_slice())
    }

    fn record(&mut self, op: LogOp, nodes: Vec<NodeId>, gate: Option<GateId>, pair: Option<PairId>) {
        if let Some(log) = &mut self.log {
            log.push(LogRecord { slot: self.slot, op, nodes, gate, pair });
        }
    }

    fn remove_pair(&mut self, id: PairId) -> Pair {
        let pair = self.pairs.remove(&id).expect("pair is live");
        self.placement[pair.a] = Occupant::Empty;
        self.placement[pair.b] = Occupant::Empty;
        pair
    }

    fn create_pair(&mut self, a: NodeId, b: NodeId) -> PairId {
        let used: HashSet<usize> = self.pairs.values().map(|p| p.code).collect();
        let code = (0..).find(|c| !used.contains(c)).expect("free code");
        let id = self.next_pair;
        self.next_pair += 1;
        self.pairs.insert(id, Pair { a, b, code });
        self.placement[a] = Occupant::EprHalf(id);
        self.placement[b] = Occupant::EprHalf(id);
        id
    }
}

/// Hashable snapshot of placement, cooldowns, pending generations, live
/// pairs (through partner nodes) and the done set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalState(Box<[u16]>);

/// Static part of the environment: topology, action table and parameters.
#[derive(Debug, Clone)]
pub struct Env {
    graph: Arc<CouplingGraph>,
    table: ActionTable,
    config: EnvConfig,
}

impl Env {
    pub fn new(graph: Arc<CouplingGraph>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let table = ActionTable::new(&graph);
        Ok(Env { graph, table, config })
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn table(&self) -> &ActionTable {
        &self.table
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        self.table.len()
    }

    /// Length of `[S_loc, S_dag]`, the network input.
    pub fn feature_len(&self) -> usize {
        self.graph.num_nodes() + 3 * self.config.g_max
    }

    /// Length of the full state vector `[S_loc, S_dag, S_msk]`.
    pub fn state_len(&self) -> usize {
        self.feature_len() + self.table.len()
    }

    /// Starts an episode. Without a placement, circuit qubits are spread
    /// uniformly over all nodes using the placement stream of `seed`.
    pub fn reset(
        &self,
        circuit: &CircuitDag,
        placement: Option<&[NodeId]>,
        seed: u64,
    ) -> Result<(EnvState, StepResult)> {
        let n = self.graph.num_nodes();
        let nq = circuit.num_qubits();
        if nq > n {
            return Err(Error::Capacity(format!("{nq} circuit qubits on {n} nodes")));
        }
        if circuit.num_gates() > self.config.g_max {
            return Err(Error::Capacity(format!("{} gates exceed g_max {}", circuit.num_gates(), self.config.g_max)));
        }
        let qubit_node: Vec<NodeId> = match placement {
            Some(p) => {
                if p.len() != nq {
                    return Err(Error::invalid(format!("placement has {} entries for {nq} qubits", p.len())));
                }
                let mut seen = vec![false; n];
                for &v in p {
                    if v >= n || std::mem::replace(&mut seen[v], true) {
                        return Err(Error::invalid(format!("placement is not injective at node {v}")));
                    }
                }
                p.to_vec()
            }
            None => random_placement(n, nq, &mut stream(seed, Stream::Placement)),
        };
        let mut occupants = vec![Occupant::Empty; n];
        for (q, &v) in qubit_node.iter().enumerate() {
            occupants[v] = Occupant::Circuit(q);
        }
        let mut state = EnvState {
            placement: occupants,
            qubit_node,
            pairs: BTreeMap::new(),
            next_pair: 0,
            pending: vec![0; self.graph.edges_n().len()],
            cooldown: vec![0; n],
            dag: circuit.restart(),
            slot: 0,
            status: Status::Running,
            counters: Counters::default(),
            rng: stream(seed, Stream::Generation),
            log: None,
        };
        let mut reward = 0.0;
        let mut scored = Vec::new();
        self.auto_execute(&mut state, &mut reward, &mut scored);
        self.settle(&mut state, &mut reward);
        let result = StepResult { reward, status: state.status, scored_gates: scored, info: state.counters };
        Ok((state, result))
    }

    /// Feasibility of every action.
    pub fn mask(&self, s: &EnvState) -> Vec<bool> {
        let frontier = self.frontier_pairs(s);
        (0..self.table.len()).map(|i| self.feasible_with(s, i, &frontier)).collect()
    }

    pub fn is_feasible(&self, s: &EnvState, action: usize) -> bool {
        action < self.table.len() && self.feasible_with(s, action, &self.frontier_pairs(s))
    }

    pub fn feasible_actions(&self, s: &EnvState) -> Vec<usize> {
        let frontier = self.frontier_pairs(s);
        (0..self.table.len()).filter(|&i| self.feasible_with(s, i, &frontier)).collect()
    }

    fn frontier_pairs(&self, s: &EnvState) -> Vec<(QubitId, QubitId)> {
        s.dag.frontier_iter().map(|g| (g.control, g.target)).collect()
    }

    fn feasible_with(&self, s: &EnvState, action: usize, frontier: &[(QubitId, QubitId)]) -> bool {
        let free = |v: NodeId| s.cooldown[v] == 0;
        match self.table.entries[action] {
            ActionKind::Stop => true,
            ActionKind::Swap(e) => {
                let (u, v) = self.graph.edges_p()[e];
                if !free(u) || !free(v) {
                    return false;
                }
                match (s.placement[u], s.placement[v]) {
                    (Occupant::Empty, Occupant::Empty) => false,
                    (Occupant::Circuit(a), Occupant::Circuit(b)) => {
                        !frontier.iter().any(|&(c, t)| (c, t) == (a, b) || (c, t) == (b, a))
                    }
                    _ => true,
                }
            }
            ActionKind::TeleQubit(e) => self.tele_qubit_nodes(s, e).is_some(),
            ActionKind::Generate(l) => {
                let (a, b) = self.graph.edges_n()[l];
                free(a) && free(b) && s.placement[a] == Occupant::Empty && s.placement[b] == Occupant::Empty
            }
        }
    }

    /// `(qubit node, local half node, remote half node)` of a feasible
    /// tele-qubit on coupling edge `e`.
    fn tele_qubit_nodes(&self, s: &EnvState, e: usize) -> Option<(NodeId, NodeId, NodeId)> {
        let (x, y) = self.graph.edges_p()[e];
        let (u, v) = match (s.placement[x], s.placement[y]) {
            (Occupant::Circuit(_), Occupant::EprHalf(_)) => (x, y),
            (Occupant::EprHalf(_), Occupant::Circuit(_)) => (y, x),
            _ => return None,
        };
        let w = s.partner_node(v)?;
        (s.cooldown[u] == 0 && s.cooldown[v] == 0 && s.cooldown[w] == 0).then_some((u, v, w))
    }

    /// Applies a feasible action, runs automatic execution and returns the
    /// reward.
    pub fn step(&self, s: &mut EnvState, action: usize) -> Result<StepResult> {
        if s.status != Status::Running {
            return Err(Error::State("episode already finished".into()));
        }
        let Some(kind) = self.table.kind(action) else {
            return Err(Error::contract(format!("action {action} out of range")));
        };
        if !self.is_feasible(s, action) {
            return Err(Error::contract(format!("action {action} ({kind:?}) is masked")));
        }
        let mut reward = 0.0;
        match kind {
            ActionKind::Stop => {
                self.apply_stop(s);
                reward += self.config.rewards.stop;
            }
            ActionKind::Swap(e) => {
                let before = self.d_frontier(s)?;
                let (u, v) = self.graph.edges_p()[e];
                self.apply_swap(s, u, v);
                let after = self.d_frontier(s)?;
                reward += r_dist(before, after, self.config.rewards.xi);
            }
            ActionKind::TeleQubit(e) => {
                let before = self.d_frontier(s)?;
                let (u, v, w) = self.tele_qubit_nodes(s, e).expect("mask checked");
                self.apply_tele_qubit(s, u, v, w);
                let after = self.d_frontier(s)?;
                reward += r_dist(before, after, self.config.rewards.xi);
            }
            ActionKind::Generate(l) => {
                let (a, b) = self.graph.edges_n()[l];
                s.pending[l] = self.config.lambda_gen;
                s.cooldown[a] = self.config.lambda_gen;
                s.cooldown[b] = self.config.lambda_gen;
                s.counters.generate_attempts += 1;
                s.record(LogOp::Generate, vec![a, b], None, None);
            }
        }
        let mut scored = Vec::new();
        self.auto_execute(s, &mut reward, &mut scored);
        self.settle(s, &mut reward);
        Ok(StepResult { reward, status: s.status, scored_gates: scored, info: s.counters })
    }

    fn apply_stop(&self, s: &mut EnvState) {
        s.record(LogOp::Stop, Vec::new(), None, None);
        s.slot += 1;
        s.counters.stops += 1;
        for c in s.cooldown.iter_mut() {
            *c = c.saturating_sub(1);
        }
        for l in 0..s.pending.len() {
            if s.pending[l] == 0 {
                continue;
            }
            s.pending[l] -= 1;
            if s.pending[l] == 0 {
                let (a, b) = self.graph.edges_n()[l];
                let p = self.config.p_gen;
                if p >= 1.0 || s.rng.gen_bool(p) {
                    s.create_pair(a, b);
                    s.counters.generate_successes += 1;
                } else {
                    s.counters.generate_failures += 1;
                }
            }
        }
    }

    fn apply_swap(&self, s: &mut EnvState, u: NodeId, v: NodeId) {
        s.placement.swap(u, v);
        for node in [u, v] {
            match s.placement[node] {
                Occupant::Circuit(q) => s.qubit_node[q] = node,
                Occupant::EprHalf(p) => {
                    let pair = s.pairs.get_mut(&p).expect("pair is live");
                    let old = if node == u { v } else { u };
                    if pair.a == old {
                        pair.a = node;
                    } else {
                        pair.b = node;
                    }
                }
                Occupant::Empty => {}
            }
        }
        s.cooldown[u] = 3;
        s.cooldown[v] = 3;
        s.counters.swaps += 1;
        s.record(LogOp::Swap, vec![u, v], None, None);
    }

    fn apply_tele_qubit(&self, s: &mut EnvState, u: NodeId, v: NodeId, w: NodeId) {
        let Occupant::Circuit(q) = s.placement[u] else { unreachable!("mask checked") };
        let Occupant::EprHalf(p) = s.placement[v] else { unreachable!("mask checked") };
        s.remove_pair(p);
        s.placement[u] = Occupant::Empty;
        s.placement[w] = Occupant::Circuit(q);
        s.qubit_node[q] = w;
        let c = self.config.kappa + 1;
        for node in [u, v, w] {
            s.cooldown[node] = c;
        }
        s.counters.tele_qubits += 1;
        s.record(LogOp::TeleQubit, vec![u, v, w], None, Some(p));
    }

    /// Scores and teleports gates until nothing more can run this slot.
    fn auto_execute(&self, s: &mut EnvState, reward: &mut f64, scored: &mut Vec<GateId>) {
        loop {
            let mut progressed = false;
            let frontier: Vec<_> = s.dag.frontier_iter().collect();
            for g in frontier {
                let x = s.qubit_node[g.control];
                let y = s.qubit_node[g.target];
                if s.cooldown[x] != 0 || s.cooldown[y] != 0 {
                    continue;
                }
                if self.graph.adjacent_p(x, y) {
                    s.dag.complete(g.id).expect("frontier gate");
                    s.cooldown[x] = 1;
                    s.cooldown[y] = 1;
                    s.counters.local_scores += 1;
                    s.record(LogOp::Score, vec![x, y], Some(g.id), None);
                } else if let Some((a, b)) = self.tele_gate_halves(s, x, y) {
                    let Occupant::EprHalf(p) = s.placement[a] else { unreachable!() };
                    s.dag.complete(g.id).expect("frontier gate");
                    s.remove_pair(p);
                    let c = self.config.kappa + 1;
                    for node in [x, a, b, y] {
                        s.cooldown[node] = c;
                    }
                    s.counters.tele_gates += 1;
                    s.record(LogOp::TeleGate, vec![x, a, b, y], Some(g.id), Some(p));
                } else {
                    continue;
                }
                *reward += self.config.rewards.score;
                scored.push(g.id);
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }

    /// A live pair with one idle half next to `x` and the other idle half
    /// next to `y`; the lowest half node next to `x` wins.
    fn tele_gate_halves(&self, s: &EnvState, x: NodeId, y: NodeId) -> Option<(NodeId, NodeId)> {
        self.graph.neighbors_p(x).iter().find_map(|&a| {
            let b = s.partner_node(a)?;
            (s.cooldown[a] == 0 && s.cooldown[b] == 0 && self.graph.adjacent_p(b, y)).then_some((a, b))
        })
    }

    fn settle(&self, s: &mut EnvState, reward: &mut f64) {
        if s.dag.is_finished() {
            s.status = Status::Success;
            *reward += self.config.rewards.success;
        } else if s.slot >= self.config.deadline {
            s.status = Status::Failure;
            *reward -= self.config.rewards.fail;
        }
    }

    /// Frontier distance on the shaping graph of the current state.
    pub fn d_frontier(&self, s: &EnvState) -> Result<f64> {
        let pairs: Vec<_> = s.pairs.values().map(|p| (p.a, p.b)).collect();
        let gates: Vec<_> = s
            .dag
            .frontier_iter()
            .map(|g| {
                let nq = s.qubit_node.len();
                if g.control >= nq || g.target >= nq {
                    return Err(Error::State(format!("gate {} has an unplaced operand", g.id)));
                }
                Ok((s.qubit_node[g.control], s.qubit_node[g.target]))
            })
            .collect::<Result<_>>()?;
        ShapingGraph::new(&self.graph, &pairs, self.config.rewards.w_qlink)
            .frontier_distance(&gates)
            .ok_or_else(|| Error::State("frontier operands are disconnected".into()))
    }

    /// `[S_loc, S_dag, S_msk]`.
    pub fn encode(&self, s: &EnvState) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_len()];
        self.encode_into(s, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, s: &EnvState, out: &mut [f64]) -> Result<()> {
        let n = self.graph.num_nodes();
        let g_max = self.config.g_max;
        if s.dag.remaining() > g_max {
            return Err(Error::Capacity(format!("{} remaining gates exceed g_max {g_max}", s.dag.remaining())));
        }
        if out.len() != self.state_len() {
            return Err(Error::invalid("state buffer has the wrong length"));
        }
        out.fill(0.0);
        let nq = s.qubit_node.len();
        for (v, slot) in out[..n].iter_mut().enumerate() {
            *slot = match s.placement[v] {
                Occupant::Empty => 0.0,
                Occupant::Circuit(q) => (1 + q) as f64,
                Occupant::EprHalf(p) => (nq + 1 + s.pairs[&p].code) as f64,
            };
        }
        let layers = s.dag.layers();
        let mut order: Vec<(usize, GateId)> =
            layers.iter().enumerate().filter_map(|(id, l)| l.map(|l| (l, id))).collect();
        order.sort_unstable();
        let dag_part = &mut out[n..n + 3 * g_max];
        for (k, &(layer, id)) in order.iter().enumerate() {
            let g = s.dag.gates()[id];
            dag_part[3 * k] = (1 + g.control) as f64;
            dag_part[3 * k + 1] = (1 + g.target) as f64;
            dag_part[3 * k + 2] = layer as f64;
        }
        let frontier = self.frontier_pairs(s);
        for (i, slot) in out[n + 3 * g_max..].iter_mut().enumerate() {
            *slot = if self.feasible_with(s, i, &frontier) { 1.0 } else { 0.0 };
        }
        Ok(())
    }
}

/// Injective placement of `nq` qubits over `n` nodes, uniform over all such
/// placements.
pub fn random_placement(n: usize, nq: usize, rng: &mut Rng) -> Vec<NodeId> {
    rand::seq::index::sample(rng, n, nq).into_vec()
}
