//! AC power flow: Newton-Raphson solver, load-hypercube sampling, labelled
//! dataset generation and contingency enumeration.

mod dataset;
mod io;
mod newton;
mod sampling;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcase::GridCase;

pub use dataset::{enumerate_feasible, generate_dataset, PfDataset};
pub use io::{read_dataset_csv, read_samples_csv, write_dataset_csv, write_samples_csv, DatasetRow};
pub use newton::{bus_powers, solve_nr, PfOptions, PfSolution, StartMode};
pub use sampling::{sample_for_topology, sample_injections, LoadHypercube, SampleSet};

/// Nodal injections in per-unit, generation minus demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionVector {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionVector {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::Argument(format!(
                "p has {} entries but q has {}",
                p.len(),
                q.len()
            )));
        }
        if p.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::Argument("injection entries must be finite".into()));
        }
        Ok(InjectionVector { p, q })
    }

    /// Scheduled generation minus base-case demand.
    pub fn base_case(case: &GridCase) -> Self {
        let gen = case.gen_p();
        let base = case.base_mva;
        InjectionVector {
            p: case
                .buses
                .iter()
                .zip(&gen)
                .map(|(b, g)| (g - b.p_load) / base)
                .collect(),
            q: case.buses.iter().map(|b| -b.q_load / base).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Interleaved `[p_0, q_0, p_1, q_1, ...]`, the kernel input layout.
    pub fn features(&self) -> Vec<f64> {
        self.p.iter().zip(&self.q).flat_map(|(&p, &q)| [p, q]).collect()
    }

    pub fn from_features(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(Error::Argument(format!(
                "feature vector has odd length {}",
                x.len()
            )));
        }
        InjectionVector::new(
            x.iter().step_by(2).copied().collect(),
            x.iter().skip(1).step_by(2).copied().collect(),
        )
    }
}

static GLOBAL_SOLVES: AtomicU64 = AtomicU64::new(0);

/// Power-flow solves performed by this process so far.
pub fn total_solves() -> u64 {
    GLOBAL_SOLVES.load(Ordering::Relaxed)
}

/// Run-scoped solve counter. Every call of [`solve_nr`] bumps the process
/// total; dataset generation additionally bumps the counter it is handed,
/// which is what experiment accounting reads.
#[derive(Debug, Default)]
pub struct SolveCounter(AtomicU64);

impl SolveCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}
