//! Grid case model: buses, branches, generators, topologies, admittance
//! matrices and the per-node neighborhood structure consumed by the
//! structured kernels.

mod parse;
mod topology;
mod ybus;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::fnv1a;

pub use parse::{parse_case, parse_json, parse_matpower};
pub use topology::{is_connected, neighborhoods, NeighborhoodStructure, Topology};
pub use ybus::{build_ybus, AdmittanceMatrix};

const CASE30: &str = include_str!("../../data/case30_ieee.m");

/// The IEEE 30-bus case shipped with the crate.
pub fn case30() -> GridCase {
    parse_matpower(CASE30).expect("bundled case30 parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: BusType,
    /// MW
    pub p_load: f64,
    /// MVAr
    pub q_load: f64,
    /// Voltage magnitude held at PV and slack buses (pu).
    pub v_setpoint: f64,
    #[serde(default)]
    pub base_kv: f64,
    /// Shunt conductance, MW consumed at 1 pu.
    #[serde(default)]
    pub g_shunt: f64,
    /// Shunt susceptance, MVAr injected at 1 pu.
    #[serde(default)]
    pub b_shunt: f64,
    /// Initial magnitude for warm starts (pu).
    #[serde(default = "one")]
    pub vm_init: f64,
    /// Initial angle for warm starts (degrees).
    #[serde(default)]
    pub va_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// 1-based position in the case's branch list.
    #[serde(default)]
    pub id: usize,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_charging: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    /// MW
    pub p_set: f64,
    pub v_set: f64,
    #[serde(default)]
    pub q_min: f64,
    #[serde(default)]
    pub q_max: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Static network description. Bus ids are kept as given; internally every
/// bus is addressed by its position in `buses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Generator>,
}

impl GridCase {
    /// Builds a case and checks its invariants.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        gens: Vec<Generator>,
    ) -> Result<Self> {
        let case = GridCase {
            base_mva,
            buses,
            branches,
            gens,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_case(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation("base MVA must be positive".into()));
        }
        let mut seen = HashSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slacks != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {slacks}"
            )));
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !seen.contains(&end) {
                    return Err(Error::Validation(format!(
                        "branch {} references undeclared bus {end}",
                        br.id
                    )));
                }
            }
            if br.r < 0.0 {
                return Err(Error::Validation(format!("branch {} has negative r", br.id)));
            }
            if br.x == 0.0 {
                return Err(Error::Validation(format!("branch {} has x = 0", br.id)));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Validation(format!("branch {} has tap {}", br.id, br.tap)));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.id != k + 1 {
                return Err(Error::Validation(format!(
                    "branch ids must be 1..=n in order, found {} at position {}",
                    br.id,
                    k + 1
                )));
            }
        }
        for g in &self.gens {
            if !seen.contains(&g.bus) {
                return Err(Error::Validation(format!(
                    "generator references undeclared bus {}",
                    g.bus
                )));
            }
        }
        if !is_connected(self, &Topology::base(self)) {
            return Err(Error::Validation("network is disconnected".into()));
        }
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Dense index of the slack bus.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    /// Map from external bus id to dense index.
    pub fn index_map(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus_index(&self, id: u32) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| Error::Argument(format!("unknown bus id {id}")))
    }

    /// Dense endpoint indices of every branch.
    pub fn branch_ends(&self) -> Vec<(usize, usize)> {
        let idx = self.index_map();
        self.branches.iter().map(|b| (idx[&b.from], idx[&b.to])).collect()
    }

    /// Stable identity of the electrical data, used to tie topologies and
    /// trained models to the case they came from.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("case serializes");
        fnv1a(json.as_bytes())
    }

    /// Scheduled generation per bus, MW.
    pub fn gen_p(&self) -> Vec<f64> {
        let idx = self.index_map();
        let mut p = vec![0.0; self.buses.len()];
        for g in &self.gens {
            p[idx[&g.bus]] += g.p_set;
        }
        p
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn bus(id: u32, kind: BusType, p: f64, q: f64) -> Bus {
        Bus {
            id,
            kind,
            p_load: p,
            q_load: q,
            v_setpoint: 1.0,
            base_kv: 100.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            vm_init: 1.0,
            va_init: 0.0,
        }
    }

    pub fn line(id: usize, from: u32, to: u32, r: f64, x: f64) -> Branch {
        Branch {
            id,
            from,
            to,
            r,
            x,
            b_charging: 0.0,
            tap: 1.0,
            in_service: true,
        }
    }

    /// Slack at bus 1, PQ bus 2, one lossless line x = 0.1.
    pub fn two_bus(p_mw: f64, q_mvar: f64) -> GridCase {
        GridCase::new(
            100.0,
            vec![bus(1, BusType::Slack, 0.0, 0.0), bus(2, BusType::Pq, p_mw, q_mvar)],
            vec![line(1, 1, 2, 0.0, 0.1)],
            vec![Generator {
                bus: 1,
                p_set: 0.0,
                v_set: 1.0,
                q_min: -100.0,
                q_max: 100.0,
            }],
        )
        .unwrap()
    }

    pub fn triangle() -> GridCase {
        GridCase::new(
            100.0,
            vec![
                bus(1, BusType::Slack, 0.0, 0.0),
                bus(2, BusType::Pq, 30.0, 10.0),
                bus(3, BusType::Pq, 20.0, 5.0),
            ],
            vec![
                line(1, 1, 2, 0.01, 0.1),
                line(2, 2, 3, 0.01, 0.1),
                line(3, 1, 3, 0.01, 0.1),
            ],
            vec![Generator {
                bus: 1,
                p_set: 0.0,
                v_set: 1.0,
                q_min: -100.0,
                q_max: 100.0,
            }],
        )
        .unwrap()
    }
}
