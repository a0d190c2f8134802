//! Distributed quantum circuit compilation as a Markov decision process.
//!
//! The crate models several QPUs joined by quantum links, a CNOT circuit to
//! run on them, and an environment whose primitive actions (swap, qubit
//! teleportation, entanglement generation and the slot-closing stop) route
//! the circuit. A masked deep-Q agent learns routing policies; an exact
//! search gives minimal slot counts on small instances.

pub mod circuit;
pub mod env;
pub mod error;
pub mod harness;
pub mod learn;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod shaping;
pub mod topology;

pub use circuit::{random_circuit, CircuitDag, Gate};
pub use env::{ActionKind, ActionTable, Env, EnvConfig, EnvState, RewardConfig, Status, StepResult};
pub use error::{Error, Result};
pub use topology::{build_guadalupe, build_line, unify, CouplingGraph, QuantumLink};
