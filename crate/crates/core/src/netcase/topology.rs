use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::GridCase;
use crate::error::{Error, Result};

/// One network configuration: a branch-status mask over a case's branches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub case_fingerprint: u64,
    pub in_service: Vec<bool>,
    pub label: String,
}

impl Topology {
    /// Branch statuses as given in the case file.
    pub fn base(case: &GridCase) -> Self {
        let in_service: Vec<bool> = case.branches.iter().map(|b| b.in_service).collect();
        Topology {
            case_fingerprint: case.fingerprint(),
            label: label_for(&in_service),
            in_service,
        }
    }

    /// Topology with exactly `branch_ids` (1-based) out of service.
    pub fn with_outages(case: &GridCase, branch_ids: &[usize]) -> Result<Self> {
        Topology::base(case).apply_outage(branch_ids)
    }

    /// 1-based ids of out-of-service branches, ascending.
    pub fn out_of_service(&self) -> Vec<usize> {
        self.in_service
            .iter()
            .enumerate()
            .filter(|(_, &on)| !on)
            .map(|(k, _)| k + 1)
            .collect()
    }

    pub fn in_service_count(&self) -> usize {
        self.in_service.iter().filter(|&&on| on).count()
    }

    pub fn apply_outage(&self, branch_ids: &[usize]) -> Result<Self> {
        let mut mask = self.in_service.clone();
        for &id in branch_ids {
            if id == 0 || id > mask.len() {
                return Err(Error::Argument(format!("unknown branch id {id}")));
            }
            if !mask[id - 1] {
                return Err(Error::Argument(format!("branch {id} is already out of service")));
            }
            mask[id - 1] = false;
        }
        Ok(Topology {
            case_fingerprint: self.case_fingerprint,
            label: label_for(&mask),
            in_service: mask,
        })
    }

    /// Inverse of [`Topology::apply_outage`].
    pub fn restore(&self, branch_ids: &[usize]) -> Result<Self> {
        let mut mask = self.in_service.clone();
        for &id in branch_ids {
            if id == 0 || id > mask.len() {
                return Err(Error::Argument(format!("unknown branch id {id}")));
            }
            if mask[id - 1] {
                return Err(Error::Argument(format!("branch {id} is already in service")));
            }
            mask[id - 1] = true;
        }
        Ok(Topology {
            case_fingerprint: self.case_fingerprint,
            label: label_for(&mask),
            in_service: mask,
        })
    }

    pub(crate) fn check_case(&self, case: &GridCase) -> Result<()> {
        if self.in_service.len() != case.branch_count() {
            return Err(Error::Argument(format!(
                "topology has {} branch statuses, case has {} branches",
                self.in_service.len(),
                case.branch_count()
            )));
        }
        if self.case_fingerprint != case.fingerprint() {
            return Err(Error::Argument(format!(
                "topology {} belongs to a different case",
                self.label
            )));
        }
        Ok(())
    }
}

/// "base" when everything is in service, otherwise `N-k:id,id,...`.
fn label_for(mask: &[bool]) -> String {
    let out: Vec<String> = mask
        .iter()
        .enumerate()
        .filter(|(_, &on)| !on)
        .map(|(k, _)| (k + 1).to_string())
        .collect();
    if out.is_empty() {
        "base".to_string()
    } else {
        format!("N-{}:{}", out.len(), out.join(","))
    }
}

fn adjacency(case: &GridCase, topo: &Topology) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); case.bus_count()];
    for (k, (f, t)) in case.branch_ends().into_iter().enumerate() {
        if topo.in_service.get(k).copied().unwrap_or(false) && f != t {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    adj
}

/// Every bus reachable from the slack over in-service branches.
pub fn is_connected(case: &GridCase, topo: &Topology) -> bool {
    let adj = adjacency(case, topo);
    let n = case.bus_count();
    let Some(start) = case.buses.iter().position(|b| b.kind == super::BusType::Slack) else {
        return false;
    };
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// For each node, the positions in the interleaved injection vector
/// `[p_0, q_0, p_1, q_1, ...]` read by that node's sub-kernel: the node itself
/// plus every node joined to it by an in-service branch, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodStructure {
    pub groups: Vec<Vec<usize>>,
}

impl NeighborhoodStructure {
    /// A single group covering every coordinate of a `dim`-long input.
    pub fn full(dim: usize) -> Self {
        NeighborhoodStructure {
            groups: vec![(0..dim).collect()],
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Dense node indices of group `n`.
    pub fn members(&self, n: usize) -> Vec<usize> {
        self.groups[n].iter().step_by(2).map(|&i| i / 2).collect()
    }

    /// Largest coordinate index referenced, plus one.
    pub fn input_dim(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| g.iter())
            .max()
            .map_or(0, |&m| m + 1)
    }
}

pub fn neighborhoods(case: &GridCase, topo: &Topology) -> NeighborhoodStructure {
    let adj = adjacency(case, topo);
    let groups = adj
        .into_iter()
        .enumerate()
        .map(|(n, nbrs)| {
            let mut members = nbrs;
            members.push(n);
            members.sort_unstable();
            members.dedup();
            members.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
        })
        .collect();
    NeighborhoodStructure { groups }
}
