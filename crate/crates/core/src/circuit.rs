//! CNOT-only circuits as dependency DAGs.
//!
//! Precedence is per-qubit program order: gate `g` precedes gate `h` when `g`
//! comes first and the two share a qubit. Completed gates are tracked in a
//! done set so gate ids stay stable for the state encoding.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type QubitId = usize;
pub type GateId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub id: GateId,
    pub control: QubitId,
    pub target: QubitId,
}

impl Gate {
    pub fn qubits(&self) -> [QubitId; 2] {
        [self.control, self.target]
    }

    pub fn touches(&self, q: QubitId) -> bool {
        self.control == q || self.target == q
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitDag {
    num_qubits: usize,
    gates: Arc<[Gate]>,
    /// Immediate predecessor on the control and on the target wire.
    preds: Arc<[[Option<GateId>; 2]]>,
    done: Vec<bool>,
    remaining: usize,
}

/// On-disk circuit description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitFile {
    pub num_qubits: usize,
    pub gates: Vec<[usize; 2]>,
}

impl CircuitDag {
    pub fn new(num_qubits: usize, pairs: &[(QubitId, QubitId)]) -> Result<Self> {
        let mut gates = Vec::with_capacity(pairs.len());
        let mut preds = Vec::with_capacity(pairs.len());
        let mut last: Vec<Option<GateId>> = vec![None; num_qubits];
        for (id, &(control, target)) in pairs.iter().enumerate() {
            if control == target {
                return Err(Error::invalid(format!("gate {id} acts twice on qubit {control}")));
            }
            if control >= num_qubits || target >= num_qubits {
                return Err(Error::invalid(format!("gate {id} references a qubit >= {num_qubits}")));
            }
            preds.push([last[control], last[target]]);
            last[control] = Some(id);
            last[target] = Some(id);
            gates.push(Gate { id, control, target });
        }
        Ok(CircuitDag {
            num_qubits,
            remaining: gates.len(),
            done: vec![false; gates.len()],
            gates: gates.into(),
            preds: preds.into(),
        })
    }

    pub fn empty(num_qubits: usize) -> Self {
        Self::new(num_qubits, &[]).expect("empty circuit is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text)?;
        let pairs: Vec<_> = file.gates.iter().map(|g| (g[0], g[1])).collect();
        Self::new(file.num_qubits, &pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_format(&self) -> CircuitFile {
        CircuitFile { num_qubits: self.num_qubits, gates: self.gates.iter().map(|g| [g.control, g.target]).collect() }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_done(&self, id: GateId) -> bool {
        self.done[id]
    }

    pub fn done_mask(&self) -> &[bool] {
        &self.done
    }

    pub fn is_finished(&self) -> bool {
        self.remaining == 0
    }

    /// Immediate same-qubit predecessors of a gate.
    pub fn predecessors(&self, id: GateId) -> impl Iterator<Item = GateId> + '_ {
        self.preds[id].iter().flatten().copied()
    }

    pub fn in_frontier(&self, id: GateId) -> bool {
        // done is always closed under predecessors, so immediate ones suffice
        !self.done[id] && self.predecessors(id).all(|p| self.done[p])
    }

    /// Not-done gates whose predecessors are all done, by ascending id.
    pub fn frontier(&self) -> Vec<Gate> {
        self.frontier_iter().collect()
    }

    pub fn frontier_iter(&self) -> impl Iterator<Item = Gate> + '_ {
        self.gates.iter().filter(|g| self.in_frontier(g.id)).copied()
    }

    /// Marks a frontier gate as executed.
    pub fn complete(&mut self, id: GateId) -> Result<()> {
        if id >= self.gates.len() {
            return Err(Error::contract(format!("gate {id} does not exist")));
        }
        if !self.in_frontier(id) {
            return Err(Error::contract(format!("gate {id} is not in the frontier")));
        }
        self.done[id] = true;
        self.remaining -= 1;
        Ok(())
    }

    /// ASAP layer of every not-done gate, indexed by gate id (`None` for done
    /// gates).
    pub fn layers(&self) -> Vec<Option<usize>> {
        let mut layer = vec![None; self.gates.len()];
        for g in self.gates.iter() {
            if self.done[g.id] {
                continue;
            }
            let l = self.predecessors(g.id).filter_map(|p| layer[p]).map(|l: usize| l + 1).max().unwrap_or(0);
            layer[g.id] = Some(l);
        }
        layer
    }

    /// Same gates in reverse order with an empty done set. CNOT is self-inverse.
    pub fn reverse(&self) -> Self {
        let pairs: Vec<_> = self.gates.iter().rev().map(|g| (g.control, g.target)).collect();
        Self::new(self.num_qubits, &pairs).expect("reversal of a valid circuit is valid")
    }

    /// Fresh copy with nothing executed.
    pub fn restart(&self) -> Self {
        CircuitDag { done: vec![false; self.gates.len()], remaining: self.gates.len(), ..self.clone() }
    }
}

/// Draws `num_gates` CNOTs; each picks an ordered pair of distinct qubits
/// uniformly, independently of the other gates.
pub fn random_circuit<R: Rng + ?Sized>(num_qubits: usize, num_gates: usize, rng: &mut R) -> Result<CircuitDag> {
    if num_gates > 0 && num_qubits < 2 {
        return Err(Error::invalid("random circuits need at least two qubits"));
    }
    let pairs: Vec<_> = (0..num_gates)
        .map(|_| {
            let control = rng.gen_range(0..num_qubits);
            let mut target = rng.gen_range(0..num_qubits - 1);
            if target >= control {
                target += 1;
            }
            (control, target)
        })
        .collect();
    CircuitDag::new(num_qubits, &pairs)
}
