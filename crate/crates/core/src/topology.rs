//! Coupling graphs of single QPUs and of multi-QPU systems.
//!
//! A [`CouplingGraph`] partitions its edges into intra-QPU couplings
//! (`edges_p`, usable by SWAP and CNOT) and quantum links (`edges_n`, usable
//! only for entanglement generation between different QPUs).

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guadalupe heavy-hex coupling map in the topology file format.
const GUADALUPE_JSON: &str = include_str!("../data/guadalupe.json");

pub type NodeId = usize;
pub type QpuId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingGraph {
    qpu_of: Vec<QpuId>,
    edges_p: Vec<(NodeId, NodeId)>,
    edges_n: Vec<(NodeId, NodeId)>,
    capacities: Vec<usize>,
    adj_p: Vec<Vec<NodeId>>,
    edge_p_id: HashMap<(NodeId, NodeId), usize>,
}

fn norm(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl CouplingGraph {
    /// Builds and validates a graph. Edges are normalized to `(min, max)`;
    /// their order fixes the edge ids used by the action table.
    pub fn new(qpu_of: Vec<QpuId>, edges_p: Vec<(NodeId, NodeId)>, edges_n: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let n = qpu_of.len();
        if n == 0 {
            return Err(Error::invalid("graph has no nodes"));
        }
        let num_qpus = qpu_of.iter().max().map_or(0, |m| m + 1);
        let mut capacities = vec![0; num_qpus];
        for &q in &qpu_of {
            capacities[q] += 1;
        }
        if capacities.contains(&0) {
            return Err(Error::invalid("qpu ids must be dense"));
        }

        let mut seen = HashSet::new();
        let mut check = |u: NodeId, v: NodeId, kind: &str| -> Result<(NodeId, NodeId)> {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("{kind} edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            let e = norm(u, v);
            if !seen.insert(e) {
                return Err(Error::invalid(format!("duplicate edge ({u},{v})")));
            }
            Ok(e)
        };
        let edges_p = edges_p.into_iter().map(|(u, v)| check(u, v, "coupling")).collect::<Result<Vec<_>>>()?;
        let edges_n = edges_n.into_iter().map(|(u, v)| check(u, v, "quantum link")).collect::<Result<Vec<_>>>()?;

        for &(u, v) in &edges_p {
            if qpu_of[u] != qpu_of[v] {
                return Err(Error::invalid(format!("coupling ({u},{v}) crosses QPUs")));
            }
        }
        for &(u, v) in &edges_n {
            if qpu_of[u] == qpu_of[v] {
                return Err(Error::invalid(format!("quantum link ({u},{v}) inside one QPU")));
            }
        }

        let mut adj_p = vec![Vec::new(); n];
        let mut edge_p_id = HashMap::new();
        for (i, &(u, v)) in edges_p.iter().enumerate() {
            adj_p[u].push(v);
            adj_p[v].push(u);
            edge_p_id.insert((u, v), i);
        }
        for a in &mut adj_p {
            a.sort_unstable();
        }

        let graph = CouplingGraph { qpu_of, edges_p, edges_n, capacities, adj_p, edge_p_id };
        if !graph.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(graph)
    }

    pub fn num_nodes(&self) -> usize {
        self.qpu_of.len()
    }

    pub fn num_qpus(&self) -> usize {
        self.capacities.len()
    }

    pub fn qpu_of(&self, v: NodeId) -> QpuId {
        self.qpu_of[v]
    }

    pub fn edges_p(&self) -> &[(NodeId, NodeId)] {
        &self.edges_p
    }

    pub fn edges_n(&self) -> &[(NodeId, NodeId)] {
        &self.edges_n
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    /// Sorted intra-QPU neighbours of `v`.
    pub fn neighbors_p(&self, v: NodeId) -> &[NodeId] {
        &self.adj_p[v]
    }

    pub fn degree_p(&self, v: NodeId) -> usize {
        self.adj_p[v].len()
    }

    pub fn adjacent_p(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_p_id.contains_key(&norm(u, v))
    }

    /// Id of the intra-QPU edge joining `u` and `v`.
    pub fn edge_p_id(&self, u: NodeId, v: NodeId) -> Option<usize> {
        self.edge_p_id.get(&norm(u, v)).copied()
    }

    /// Connectivity over `E^p ∪ E^n`.
    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in self.edges_p.iter().chain(&self.edges_n) {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }

    /// Parses the topology file format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TopologyFile = serde_json::from_str(text)?;
        file.build()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Serializes into the topology file format, one entry per QPU.
    pub fn to_file_format(&self) -> TopologyFile {
        let mut local = vec![0; self.num_nodes()];
        let mut counts = vec![0; self.num_qpus()];
        for (slot, &q) in local.iter_mut().zip(&self.qpu_of) {
            *slot = counts[q];
            counts[q] += 1;
        }
        let mut qpus: Vec<QpuEntry> = counts.iter().map(|&nodes| QpuEntry { nodes, edges: Vec::new() }).collect();
        for &(u, v) in &self.edges_p {
            qpus[self.qpu_of[u]].edges.push([local[u], local[v]]);
        }
        let quantum_links =
            self.edges_n.iter().map(|&(u, v)| [self.qpu_of[u], local[u], self.qpu_of[v], local[v]]).collect();
        TopologyFile { qpus, quantum_links }
    }

    /// Resolves a builder name: `guadalupe`, `line:<n>` or `file:<path>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "guadalupe" {
            Ok(build_guadalupe())
        } else if let Some(n) = spec.strip_prefix("line:") {
            let n = n.parse::<usize>().map_err(|_| Error::invalid(format!("bad line size in {spec:?}")))?;
            build_line(n)
        } else if let Some(path) = spec.strip_prefix("file:") {
            Self::from_file(Path::new(path))
        } else {
            Err(Error::invalid(format!("unknown topology builder {spec:?}")))
        }
    }
}

/// On-disk topology description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub qpus: Vec<QpuEntry>,
    #[serde(default)]
    pub quantum_links: Vec<[usize; 4]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpuEntry {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TopologyFile {
    pub fn build(&self) -> Result<CouplingGraph> {
        let qpus = self
            .qpus
            .iter()
            .map(|q| {
                let edges = q.edges.iter().map(|e| (e[0], e[1])).collect();
                CouplingGraph::new(vec![0; q.nodes], edges, Vec::new())
            })
            .collect::<Result<Vec<_>>>()?;
        let links: Vec<QuantumLink> = self.quantum_links.iter().map(|&l| l.into()).collect();
        Ok(unify(&qpus, &links)?.0)
    }
}

/// A quantum link between node `node_a` of input graph `qpu_a` and node
/// `node_b` of input graph `qpu_b`, in local ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantumLink {
    pub qpu_a: usize,
    pub node_a: NodeId,
    pub qpu_b: usize,
    pub node_b: NodeId,
}

impl From<[usize; 4]> for QuantumLink {
    fn from(l: [usize; 4]) -> Self {
        QuantumLink { qpu_a: l[0], node_a: l[1], qpu_b: l[2], node_b: l[3] }
    }
}

/// Maps `(input graph, local node)` to global node ids after [`unify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabel {
    offsets: Vec<usize>,
    sizes: Vec<usize>,
}

impl Relabel {
    pub fn global(&self, input: usize, local: NodeId) -> Option<NodeId> {
        (input < self.offsets.len() && local < self.sizes[input]).then(|| self.offsets[input] + local)
    }
}

/// The 16-qubit Guadalupe heavy-hex processor as one QPU.
pub fn build_guadalupe() -> CouplingGraph {
    CouplingGraph::from_json(GUADALUPE_JSON).expect("embedded guadalupe table is valid")
}

/// Path graph `0 - 1 - ... - (n-1)` on a single QPU.
pub fn build_line(n: usize) -> Result<CouplingGraph> {
    if n == 0 {
        return Err(Error::invalid("line needs at least one node"));
    }
    let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
    CouplingGraph::new(vec![0; n], edges, Vec::new())
}

/// Joins several graphs into one, relabelling nodes input by input, and adds
/// the given quantum links. Inputs may themselves hold several QPUs.
pub fn unify(graphs: &[CouplingGraph], links: &[QuantumLink]) -> Result<(CouplingGraph, Relabel)> {
    if graphs.is_empty() {
        return Err(Error::invalid("unify needs at least one graph"));
    }
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut sizes = Vec::with_capacity(graphs.len());
    let mut qpu_of = Vec::new();
    let mut edges_p = Vec::new();
    let mut edges_n = Vec::new();
    let mut qpu_offset = 0;
    for g in graphs {
        let off = qpu_of.len();
        offsets.push(off);
        sizes.push(g.num_nodes());
        qpu_of.extend(g.qpu_of.iter().map(|q| q + qpu_offset));
        edges_p.extend(g.edges_p.iter().map(|&(u, v)| (u + off, v + off)));
        edges_n.extend(g.edges_n.iter().map(|&(u, v)| (u + off, v + off)));
        qpu_offset += g.num_qpus();
    }
    let relabel = Relabel { offsets, sizes };

    let mut seen = HashSet::new();
    for l in links {
        let a = relabel
            .global(l.qpu_a, l.node_a)
            .ok_or_else(|| Error::invalid(format!("dangling link endpoint {}:{}", l.qpu_a, l.node_a)))?;
        let b = relabel
            .global(l.qpu_b, l.node_b)
            .ok_or_else(|| Error::invalid(format!("dangling link endpoint {}:{}", l.qpu_b, l.node_b)))?;
        if !seen.insert(norm(a, b)) {
            return Err(Error::invalid(format!("duplicate quantum link ({a},{b})")));
        }
        edges_n.push((a, b));
    }
    let graph = CouplingGraph::new(qpu_of, edges_p, edges_n)?;
    Ok((graph, relabel))
}
