//! Topology-aware power-flow learning: AC power flow, structured GP voltage
//! models, transfer to unseen topologies, and probabilistic voltage envelopes.

pub mod acpf;
pub mod bench;
pub mod error;
pub mod gpr;
pub mod kernels;
pub mod netcase;
pub mod pve;
pub mod seeds;
pub mod transfer;

pub use error::{Error, Result};
