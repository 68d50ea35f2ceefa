use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trained model scored on one held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub node: u32,
    pub topology: String,
    pub method: String,
    pub n_train: usize,
    pub mae_pu: f64,
    pub lml: f64,
    pub wall_s: f64,
    pub solves: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRow {
    pub method: String,
    pub cutoff: f64,
    pub fraction: f64,
}

/// Fraction of (node, topology) instances with MAE strictly below each
/// cutoff, per method: the empirical CDF of the MAE values.
pub fn area_under_density(rows: &[ResultRow], cutoffs: &[f64]) -> Vec<AreaRow> {
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_method.entry(&r.method).or_default().push(r.mae_pu);
    }
    let mut out = Vec::new();
    for (method, maes) in by_method {
        for &c in cutoffs {
            let below = maes.iter().filter(|&&m| m < c).count();
            out.push(AreaRow {
                method: method.to_string(),
                cutoff: c,
                fraction: below as f64 / maes.len() as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub node: u32,
    pub topology: String,
    /// MAE of `a` minus MAE of `b`.
    pub diff: f64,
}

/// Per-instance `MAE_a - MAE_b` for instances scored under both methods.
pub fn mae_differences(rows: &[ResultRow], a: &str, b: &str) -> Vec<DiffRow> {
    let mut of_b: BTreeMap<(u32, &str), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == b) {
        of_b.insert((r.node, &r.topology), r.mae_pu);
    }
    rows.iter()
        .filter(|r| r.method == a)
        .filter_map(|r| {
            of_b.get(&(r.node, r.topology.as_str())).map(|mb| DiffRow {
                node: r.node,
                topology: r.topology.clone(),
                diff: r.mae_pu - mb,
            })
        })
        .collect()
}

/// Share of instances where the first method had the lower error.
pub fn win_rate(diffs: &[DiffRow]) -> f64 {
    if diffs.is_empty() {
        return 0.0;
    }
    diffs.iter().filter(|d| d.diff < 0.0).count() as f64 / diffs.len() as f64
}

/// Counter readings for one method over one contingency class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLedger {
    pub method: String,
    pub class: String,
    pub topologies: usize,
    pub train_solves: u64,
    pub source_solves: u64,
    pub mcs_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub method: String,
    pub class: String,
    pub topologies: usize,
    pub solves: u64,
    pub mcs_solves: u64,
    pub ratio: f64,
}

/// Power-flow solves per method and class next to the Monte-Carlo count
/// needed for the same envelopes (`T` solves per topology).
pub fn solve_budget_report(ledgers: &[SolveLedger]) -> Vec<BudgetRow> {
    ledgers
        .iter()
        .map(|l| {
            let solves = l.train_solves + l.source_solves;
            let mcs = (l.mcs_samples * l.topologies) as u64;
            BudgetRow {
                method: l.method.clone(),
                class: l.class.clone(),
                topologies: l.topologies,
                solves,
                mcs_solves: mcs,
                ratio: if solves == 0 { 0.0 } else { mcs as f64 / solves as f64 },
            }
        })
        .collect()
}

/// Header-first CSV; an empty slice still writes the header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], header: &[&str], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let wrap = |e: csv::Error| Error::Argument(e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Argument(e.to_string()))?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(|e| Error::Argument(e.to_string()))
}

pub fn read_rows_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e))
}

impl ResultRow {
    pub const HEADER: [&'static str; 8] = [
        "node", "topology", "method", "n_train", "mae_pu", "lml", "wall_s", "solves",
    ];
}

impl AreaRow {
    pub const HEADER: [&'static str; 3] = ["method", "cutoff", "fraction"];
}

impl DiffRow {
    pub const HEADER: [&'static str; 3] = ["node", "topology", "diff"];
}

impl SolveLedger {
    pub const HEADER: [&'static str; 6] = [
        "method", "class", "topologies", "train_solves", "source_solves", "mcs_samples",
    ];
}

impl BudgetRow {
    pub const HEADER: [&'static str; 6] = ["method", "class", "topologies", "solves", "mcs_solves", "ratio"];
}
