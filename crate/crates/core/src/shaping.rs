//! Distance-based reward shaping.
//!
//! The shaping graph weighs intra-QPU couplings 1, quantum links `w_qlink`,
//! and joins the two halves of every live EPR pair with a unit edge. The
//! frontier distance sums, over frontier gates in ascending id, the shortest
//! path between the two operands; EPR edges used by one gate's path are
//! removed before the next gate is measured.

use crate::topology::{CouplingGraph, NodeId};

const EPS: f64 = 1e-9;

/// Weighted routing graph for one snapshot of the environment.
#[derive(Debug, Clone)]
pub struct ShapingGraph {
    n: usize,
    /// Lightest non-EPR edge weight, `INFINITY` when absent.
    base: Vec<f64>,
    /// Live EPR edge between two nodes.
    epr: Vec<bool>,
}

impl ShapingGraph {
    pub fn new(graph: &CouplingGraph, live_pairs: &[(NodeId, NodeId)], w_qlink: f64) -> Self {
        let n = graph.num_nodes();
        let mut base = vec![f64::INFINITY; n * n];
        let mut epr = vec![false; n * n];
        let set = |m: &mut Vec<f64>, u: usize, v: usize, w: f64| {
            if w < m[u * n + v] {
                m[u * n + v] = w;
                m[v * n + u] = w;
            }
        };
        for &(u, v) in graph.edges_p() {
            set(&mut base, u, v, 1.0);
        }
        for &(u, v) in graph.edges_n() {
            set(&mut base, u, v, w_qlink);
        }
        for &(a, b) in live_pairs {
            epr[a * n + b] = true;
            epr[b * n + a] = true;
        }
        ShapingGraph { n, base, epr }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Effective weight of the step `u -> v` and whether it rides an EPR edge.
    /// A unit EPR edge is used only when strictly lighter than the alternative.
    fn step(&self, u: usize, v: usize) -> (f64, bool) {
        let b = self.base[u * self.n + v];
        if self.epr[u * self.n + v] && 1.0 < b {
            (1.0, true)
        } else {
            (b, false)
        }
    }

    pub fn has_epr_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.epr[u * self.n + v]
    }

    fn remove_epr(&mut self, u: usize, v: usize) {
        self.epr[u * self.n + v] = false;
        self.epr[v * self.n + u] = false;
    }

    /// Distances from every node to `target` (dense Dijkstra).
    fn distances_to(&self, target: usize) -> Vec<f64> {
        let n = self.n;
        let mut dist = vec![f64::INFINITY; n];
        let mut fixed = vec![false; n];
        dist[target] = 0.0;
        for _ in 0..n {
            let mut best = None;
            for v in 0..n {
                if !fixed[v] && dist[v].is_finite() && best.is_none_or(|b: usize| dist[v] < dist[b]) {
                    best = Some(v);
                }
            }
            let Some(u) = best else { break };
            fixed[u] = true;
            for v in 0..n {
                if fixed[v] {
                    continue;
                }
                let (w, _) = self.step(u, v);
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist
    }

    /// Lexicographically smallest shortest path, as a node sequence, with its
    /// length. `None` when unreachable.
    pub fn shortest_path(&self, source: NodeId, target: NodeId) -> Option<(f64, Vec<NodeId>)> {
        let dist = self.distances_to(target);
        if !dist[source].is_finite() {
            return None;
        }
        let mut path = vec![source];
        let mut at = source;
        while at != target {
            let next = (0..self.n)
                .find(|&v| {
                    let (w, _) = self.step(at, v);
                    v != at && w.is_finite() && (dist[at] - (w + dist[v])).abs() < EPS
                })
                .expect("a shortest-path successor exists");
            path.push(next);
            at = next;
        }
        Some((dist[source], path))
    }

    /// Sum of operand distances over `gates` (node pairs, already in
    /// processing order), consuming EPR edges along each chosen path.
    /// Returns `None` if some pair is disconnected.
    pub fn frontier_distance(mut self, gates: &[(NodeId, NodeId)]) -> Option<f64> {
        let mut total = 0.0;
        for &(x, y) in gates {
            let (d, path) = self.shortest_path(x, y)?;
            total += d;
            for w in path.windows(2) {
                if self.step(w[0], w[1]).1 {
                    self.remove_epr(w[0], w[1]);
                }
            }
        }
        Some(total)
    }
}

/// Shaping reward `xi * (prev_d - new_d)`.
pub fn r_dist(prev_d: f64, new_d: f64, xi: f64) -> f64 {
    xi * (prev_d - new_d)
}
