use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_nr, InjectionVector, PfOptions, SolveCounter};
use crate::error::{Error, Result};
use crate::gpr::TrainingSet;
use crate::netcase::{is_connected, GridCase, Topology};

/// Converged power-flow solutions for a batch of injections on one topology.
/// Full magnitude vectors are kept so one batch serves every target node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfDataset {
    pub topology_label: String,
    /// external ids, in the column order of `v_mag` rows
    pub bus_ids: Vec<u32>,
    pub target_nodes: Vec<u32>,
    /// Position of each kept row in the sample batch it was solved from.
    pub sample_idx: Vec<usize>,
    pub inputs: Vec<InjectionVector>,
    pub v_mag: Vec<Vec<f64>>,
    pub rejected: usize,
    pub solves: u64,
}

impl PfDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn column(&self, node: u32) -> Result<usize> {
        self.bus_ids
            .iter()
            .position(|&id| id == node)
            .ok_or_else(|| Error::Argument(format!("bus {node} is not in the dataset")))
    }

    /// Voltage magnitudes of `node` across the dataset.
    pub fn voltages(&self, node: u32) -> Result<Vec<f64>> {
        let c = self.column(node)?;
        Ok(self.v_mag.iter().map(|v| v[c]).collect())
    }

    pub fn training_set(&self, node: u32) -> Result<TrainingSet> {
        Ok(TrainingSet {
            inputs: self.inputs.clone(),
            targets: self.voltages(node)?,
            target_node: node,
            topology_label: self.topology_label.clone(),
        })
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> PfDataset {
        let n = n.min(self.len());
        PfDataset {
            sample_idx: self.sample_idx[..n].to_vec(),
            inputs: self.inputs[..n].to_vec(),
            v_mag: self.v_mag[..n].to_vec(),
            ..self.clone()
        }
    }
}

/// One Newton-Raphson solve per sample. Non-converged samples are dropped and
/// counted; more than 1% of them rejects the whole batch. Every solve is
/// charged to `counter`.
pub fn generate_dataset(
    case: &GridCase,
    topo: &Topology,
    samples: &[InjectionVector],
    target_nodes: &[u32],
    opts: &PfOptions,
    counter: &SolveCounter,
) -> Result<PfDataset> {
    for &node in target_nodes {
        case.bus_index(node)?;
    }
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| solve_nr(case, topo, s, opts))
        .collect::<Result<_>>()?;
    counter.add(samples.len() as u64);

    let mut sample_idx = Vec::with_capacity(samples.len());
    let mut inputs = Vec::with_capacity(samples.len());
    let mut v_mag = Vec::with_capacity(samples.len());
    let mut rejected = 0;
    for (i, (s, sol)) in samples.iter().zip(results).enumerate() {
        if sol.converged {
            sample_idx.push(i);
            inputs.push(s.clone());
            v_mag.push(sol.v_mag);
        } else {
            log::debug!(
                "{}: sample rejected ({})",
                topo.label,
                sol.reason.unwrap_or_default()
            );
            rejected += 1;
        }
    }
    if rejected * 100 > samples.len() {
        return Err(Error::Dataset {
            rejected,
            total: samples.len(),
        });
    }
    Ok(PfDataset {
        topology_label: topo.label.clone(),
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        target_nodes: target_nodes.to_vec(),
        sample_idx,
        inputs,
        v_mag,
        rejected,
        solves: samples.len() as u64,
    })
}

/// All `k`-branch outage topologies that stay slack-connected and solve at
/// base load, in lexicographic order of the outaged ids.
pub fn enumerate_feasible(case: &GridCase, k: usize, opts: &PfOptions) -> Result<Vec<Topology>> {
    let base = Topology::base(case);
    let ids: Vec<usize> = (1..=case.branch_count())
        .filter(|&id| base.in_service[id - 1])
        .collect();
    let candidates: Vec<Vec<usize>> = match k {
        1 => ids.iter().map(|&a| vec![a]).collect(),
        2 => ids
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&b| vec![a, b]))
            .collect(),
        _ => {
            return Err(Error::Argument(format!(
                "contingency order must be 1 or 2, got {k}"
            )))
        }
    };
    let inj = InjectionVector::base_case(case);
    let feasible: Vec<Option<Topology>> = candidates
        .par_iter()
        .map(|out| -> Result<Option<Topology>> {
            let topo = base.apply_outage(out)?;
            if !is_connected(case, &topo) {
                return Ok(None);
            }
            let sol = solve_nr(case, &topo, &inj, opts)?;
            Ok(sol.converged.then_some(topo))
        })
        .collect::<Result<_>>()?;
    Ok(feasible.into_iter().flatten().collect())
}
