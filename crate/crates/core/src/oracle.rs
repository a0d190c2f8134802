//! Exact minimum slot count on tiny deterministic instances.
//!
//! The search is layered by the number of `Stop`s: every layer first closes
//! over zero-cost primitive actions, then advances all its states by one
//! `Stop`. States are deduplicated across layers on [`CanonicalState`], so
//! the first layer holding a finished circuit is optimal. Generation must
//! succeed with certainty for this to be exact.

use std::collections::HashMap;
use std::sync::Arc;

use crate::circuit::CircuitDag;
use crate::env::{CanonicalState, Env, EnvConfig, EnvState, Status};
use crate::error::{Error, Result};
use crate::topology::{CouplingGraph, NodeId};

/// Instance size accepted by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_gates: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_nodes: 8, max_gates: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    pub stops: usize,
    /// Action indices that reach the finished circuit with `stops` stops.
    pub actions: Vec<usize>,
    /// Distinct states visited.
    pub explored: usize,
}

/// Minimum number of stops from `placement` to a finished circuit, with a
/// witness action sequence. `Ok(None)` when `budget` states were explored
/// without an answer or the deadline cannot be met.
pub fn min_stops(
    graph: Arc<CouplingGraph>,
    circuit: &CircuitDag,
    placement: &[NodeId],
    config: EnvConfig,
    budget: usize,
) -> Result<Option<OracleSolution>> {
    min_stops_with_limits(graph, circuit, placement, config, budget, OracleLimits::default())
}

pub fn min_stops_with_limits(
    graph: Arc<CouplingGraph>,
    circuit: &CircuitDag,
    placement: &[NodeId],
    config: EnvConfig,
    budget: usize,
    limits: OracleLimits,
) -> Result<Option<OracleSolution>> {
    if graph.num_nodes() > limits.max_nodes || circuit.num_gates() > limits.max_gates {
        return Err(Error::invalid(format!(
            "oracle handles at most {} nodes and {} gates",
            limits.max_nodes, limits.max_gates
        )));
    }
    if config.p_gen != 1.0 {
        return Err(Error::invalid("oracle requires p_gen = 1"));
    }
    let env = Env::new(graph, config)?;
    search(&env, circuit, placement, budget)
}

struct Node {
    parent: usize,
    action: usize,
}

fn witness(nodes: &[Node], mut at: usize) -> Vec<usize> {
    let mut actions = Vec::new();
    while at != usize::MAX && nodes[at].parent != usize::MAX {
        actions.push(nodes[at].action);
        at = nodes[at].parent;
    }
    actions.reverse();
    actions
}

/// Layered search over an existing environment.
pub fn search(env: &Env, circuit: &CircuitDag, placement: &[NodeId], budget: usize) -> Result<Option<OracleSolution>> {
    let (root, _) = env.reset(circuit, Some(placement), 0)?;
    let mut nodes = vec![Node { parent: usize::MAX, action: 0 }];
    let mut seen: HashMap<CanonicalState, ()> = HashMap::new();
    seen.insert(root.canonical(), ());
    if root.status() == Status::Success {
        return Ok(Some(OracleSolution { stops: 0, actions: Vec::new(), explored: 1 }));
    }
    let non_stop: Vec<usize> = (1..env.num_actions()).collect();
    let mut layer: Vec<(usize, EnvState)> = vec![(0, root)];

    for stops in 0..=env.config().deadline {
        // zero-cost closure
        let mut i = 0;
        while i < layer.len() {
            let (id, state) = (layer[i].0, layer[i].1.clone());
            for &a in &non_stop {
                if !env.is_feasible(&state, a) {
                    continue;
                }
                let mut next = state.clone();
                env.step(&mut next, a)?;
                let key = next.canonical();
                if seen.contains_key(&key) {
                    continue;
                }
                seen.insert(key, ());
                nodes.push(Node { parent: id, action: a });
                let nid = nodes.len() - 1;
                if next.status() == Status::Success {
                    return Ok(Some(OracleSolution { stops, actions: witness(&nodes, nid), explored: nodes.len() }));
                }
                if nodes.len() > budget {
                    return Ok(None);
                }
                layer.push((nid, next));
            }
            i += 1;
        }
        // advance one slot
        let mut next_layer = Vec::new();
        for (id, state) in layer {
            let mut next = state;
            env.step(&mut next, 0)?;
            let key = next.canonical();
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, ());
            nodes.push(Node { parent: id, action: 0 });
            let nid = nodes.len() - 1;
            match next.status() {
                Status::Success => {
                    return Ok(Some(OracleSolution {
                        stops: stops + 1,
                        actions: witness(&nodes, nid),
                        explored: nodes.len(),
                    }))
                }
                Status::Failure => continue,
                Status::Running => next_layer.push((nid, next)),
            }
            if nodes.len() > budget {
                return Ok(None);
            }
        }
        if next_layer.is_empty() {
            return Ok(None);
        }
        layer = next_layer;
    }
    Ok(None)
}

/// Replays `actions` from `placement` and returns the stop count if the
/// sequence is legal and finishes the circuit.
pub fn replay(env: &Env, circuit: &CircuitDag, placement: &[NodeId], actions: &[usize]) -> Result<Option<usize>> {
    let (mut state, _) = env.reset(circuit, Some(placement), 0)?;
    for &a in actions {
        env.step(&mut state, a)?;
    }
    Ok((state.status() == Status::Success).then_some(state.slot()))
}
