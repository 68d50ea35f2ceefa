//! CSV forms of injection samples (wide, one row per sample) and solved
//! voltages (long, one row per sample and node).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InjectionVector, PfDataset};
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Argument(e.to_string())
}

/// Header `sample_idx,s_<id>p,s_<id>q,...`, values in per-unit.
pub fn write_samples_csv<W: Write>(bus_ids: &[u32], samples: &[InjectionVector], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample_idx".to_string()];
    for id in bus_ids {
        header.push(format!("s_{id}p"));
        header.push(format!("s_{id}q"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in samples.iter().enumerate() {
        if s.len() != bus_ids.len() {
            return Err(Error::Argument(format!(
                "sample {i} has {} nodes, expected {}",
                s.len(),
                bus_ids.len()
            )));
        }
        let mut rec = vec![i.to_string()];
        rec.extend(s.features().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Argument(e.to_string()))
}

/// Reads a wide sample file back: bus ids from the header, then the rows in
/// file order.
pub fn read_samples_csv(path: &Path) -> Result<(Vec<u32>, Vec<InjectionVector>)> {
    let bad = |msg: String| Error::format(path, msg);
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let header = r.headers().map_err(|e| Error::format(path, e))?.clone();
    if header.get(0) != Some("sample_idx") || header.len() % 2 != 1 {
        return Err(bad("expected header sample_idx,s_<id>p,s_<id>q,...".into()));
    }
    let mut ids = Vec::new();
    for pair in 0..(header.len() - 1) / 2 {
        let p = &header[1 + 2 * pair];
        let q = &header[2 + 2 * pair];
        let id = p
            .strip_prefix("s_")
            .and_then(|t| t.strip_suffix('p'))
            .and_then(|t| t.parse::<u32>().ok())
            .ok_or_else(|| bad(format!("bad column {p:?}")))?;
        if q != format!("s_{id}q") {
            return Err(bad(format!("column {q:?} should be s_{id}q")));
        }
        ids.push(id);
    }
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let x = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if x.len() != 2 * ids.len() {
            return Err(bad(format!("row {} has {} values", line + 1, x.len())));
        }
        samples.push(InjectionVector::from_features(&x)?);
    }
    Ok((ids, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub sample_idx: usize,
    pub topology: String,
    pub node: u32,
    pub v_pu: f64,
}

impl DatasetRow {
    pub const HEADER: [&'static str; 4] = ["sample_idx", "topology", "node", "v_pu"];
}

/// Target-node voltages, one row per converged sample and node.
pub fn write_dataset_csv<W: Write>(data: &PfDataset, out: W) -> Result<()> {
    let mut rows = Vec::new();
    for &node in &data.target_nodes {
        for (k, v) in data.voltages(node)?.into_iter().enumerate() {
            rows.push(DatasetRow {
                sample_idx: data.sample_idx[k],
                topology: data.topology_label.clone(),
                node,
                v_pu: v,
            });
        }
    }
    crate::bench::write_csv(&rows, &DatasetRow::HEADER, out)
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<DatasetRow>> {
    crate::bench::read_rows_csv(path)
}
