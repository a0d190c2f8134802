#![allow(dead_code)]

use std::sync::Arc;

use dqc_core::env::{random_placement, Occupant};
use dqc_core::rng::Rng;
use dqc_core::{random_circuit, unify, CircuitDag, CouplingGraph, Env, EnvState, QuantumLink, Status};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Connected single-QPU graph: a random spanning tree plus a few chords.
pub fn random_qpu(n: usize, rng: &mut Rng) -> CouplingGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..n / 3 {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let e = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
            edges.push(e);
        }
    }
    CouplingGraph::new(vec![0; n], edges, vec![]).unwrap()
}

/// `qpus` random QPUs of `2..=max_size` nodes chained by one link each.
pub fn random_topology(qpus: usize, max_size: usize, rng: &mut Rng) -> CouplingGraph {
    let parts: Vec<CouplingGraph> = (0..qpus).map(|_| random_qpu(rng.gen_range(2..=max_size), rng)).collect();
    let links: Vec<QuantumLink> = (1..qpus)
        .map(|i| QuantumLink {
            qpu_a: i - 1,
            node_a: rng.gen_range(0..parts[i - 1].num_nodes()),
            qpu_b: i,
            node_b: rng.gen_range(0..parts[i].num_nodes()),
        })
        .collect();
    unify(&parts, &links).unwrap().0
}

pub struct Instance {
    pub graph: Arc<CouplingGraph>,
    pub circuit: CircuitDag,
    pub placement: Vec<usize>,
}

/// Random topology with at most `max_nodes` nodes, a circuit on at most
/// `max_nodes - 2` qubits and a random placement.
pub fn random_instance(max_nodes: usize, max_gates: usize, rng: &mut Rng) -> Instance {
    loop {
        let qpus = rng.gen_range(1..=3);
        let graph = random_topology(qpus, (max_nodes / qpus).max(2), rng);
        let n = graph.num_nodes();
        if n > max_nodes || n < 2 {
            continue;
        }
        let nq = rng.gen_range(2..=n.saturating_sub(2).max(2));
        let gates = rng.gen_range(1..=max_gates);
        let circuit = random_circuit(nq, gates, rng).unwrap();
        let placement = random_placement(n, nq, rng);
        return Instance { graph: Arc::new(graph), circuit, placement };
    }
}

pub fn pick_feasible(env: &Env, state: &EnvState, rng: &mut Rng) -> usize {
    *env.feasible_actions(state).choose(rng).unwrap()
}

/// Structural invariants that must hold after every step.
pub fn check_invariants(env: &Env, s: &EnvState) {
    let n = env.graph().num_nodes();
    let mut seen = vec![false; s.qubit_nodes().len()];
    for v in 0..n {
        match s.occupant(v) {
            Occupant::Circuit(q) => {
                assert!(!seen[q], "qubit {q} placed twice");
                seen[q] = true;
                assert_eq!(s.qubit_nodes()[q], v);
            }
            Occupant::EprHalf(_) => {
                let w = s.partner_node(v).unwrap();
                assert_ne!(w, v);
                assert_eq!(s.partner_node(w), Some(v));
            }
            Occupant::Empty => {}
        }
    }
    assert!(seen.iter().all(|&b| b), "a qubit lost its node");
    let c = s.counters();
    assert_eq!(c.generate_successes - c.tele_qubits - c.tele_gates, s.num_live_pairs());
    assert_eq!(
        c.generate_attempts,
        c.generate_successes + c.generate_failures + s.pending().iter().filter(|&&p| p > 0).count()
    );
    assert_eq!(c.stops, s.slot());
    assert_eq!(c.gates_completed() + s.dag().remaining(), s.dag().num_gates());
    match s.status() {
        Status::Success => assert!(s.dag().is_finished()),
        Status::Failure => assert_eq!(s.slot(), env.config().deadline),
        Status::Running => assert!(s.slot() < env.config().deadline && !s.dag().is_finished()),
    }
}

/// Uniformly random feasible actions until the episode ends or `max_slots`
/// slots have elapsed.
pub fn random_rollout(env: &Env, inst: &Instance, seed: u64, rng: &mut Rng, max_slots: usize) -> EnvState {
    let (mut s, _) = env.reset(&inst.circuit, Some(&inst.placement), seed).unwrap();
    while s.status() == Status::Running && s.slot() < max_slots {
        let a = pick_feasible(env, &s, rng);
        env.step(&mut s, a).unwrap();
    }
    s
}
