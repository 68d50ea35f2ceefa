//! MATPOWER `.m` subset and JSON mirror readers.

use std::collections::HashMap;

use super::{Branch, Bus, BusType, Generator, GridCase};
use crate::error::{Error, Result};

const BUS_COLS: usize = 10;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

/// Reads either format; JSON is recognized by a leading `{`.
pub fn parse_case(text: &str) -> Result<GridCase> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_matpower(text)
    }
}

pub fn parse_json(text: &str) -> Result<GridCase> {
    let mut case: GridCase = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    // ids are positional; accept files that omit them
    for (k, br) in case.branches.iter_mut().enumerate() {
        if br.id == 0 {
            br.id = k + 1;
        }
    }
    case.validate()?;
    Ok(case)
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct Matrices {
    base_mva: Option<f64>,
    tables: HashMap<String, Vec<Row>>,
}

/// Line-oriented reader for `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and
/// `mpc.branch`. Comments (`%`) are dropped; rows end at `;` or at a line
/// break; other matrices are skipped.
fn read_matrices(text: &str) -> Result<Matrices> {
    let mut out = Matrices::default();
    let mut current: Option<(String, Vec<Row>)> = None;
    let mut pending: Vec<f64> = Vec::new();
    let mut pending_line = 0;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }

        let mut body = line;
        if current.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, rhs)) = rest.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let rhs = rhs.trim();
            if name == "baseMVA" {
                let v = rhs.trim_end_matches(';').trim();
                let v: f64 = v.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad baseMVA value {v:?}"),
                })?;
                out.base_mva = Some(v);
                continue;
            }
            let Some(after) = rhs.strip_prefix('[') else {
                continue;
            };
            current = Some((name.to_string(), Vec::new()));
            body = after;
        }

        let (content, closes) = match body.find(']') {
            Some(pos) => (&body[..pos], true),
            None => (body, false),
        };
        let (name, rows) = current.as_mut().expect("inside a matrix");
        let keep = matches!(name.as_str(), "bus" | "gen" | "branch");
        for (seg_no, segment) in content.split(';').enumerate() {
            if seg_no > 0 {
                flush(&mut pending, pending_line, rows);
            }
            for tok in segment.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() || !keep {
                    continue;
                }
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad number {tok:?} in mpc.{name}"),
                })?;
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.push(v);
            }
        }
        // a line break also terminates a row
        flush(&mut pending, pending_line, rows);
        if closes {
            let (name, rows) = current.take().expect("inside a matrix");
            if keep {
                out.tables.insert(name, rows);
            }
        }
    }
    if let Some((name, _)) = current {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("unterminated matrix mpc.{name}"),
        });
    }
    Ok(out)
}

fn flush(pending: &mut Vec<f64>, line: usize, rows: &mut Vec<Row>) {
    if !pending.is_empty() {
        rows.push(Row {
            line,
            values: std::mem::take(pending),
        });
    }
}

fn check_width(rows: &[Row], width: usize, name: &str) -> Result<()> {
    for row in rows {
        if row.values.len() < width {
            return Err(Error::Parse {
                line: row.line,
                msg: format!(
                    "mpc.{name} row has {} columns, need at least {width}",
                    row.values.len()
                ),
            });
        }
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > f64::from(u32::MAX) {
        return Err(Error::Parse {
            line,
            msg: format!("bus id {v} is not a non-negative integer"),
        });
    }
    Ok(v as u32)
}

pub fn parse_matpower(text: &str) -> Result<GridCase> {
    let mut m = read_matrices(text)?;
    let base_mva = m.base_mva.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing mpc.baseMVA".into(),
    })?;
    let bus_rows = m.tables.remove("bus").ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing mpc.bus".into(),
    })?;
    let gen_rows = m.tables.remove("gen").unwrap_or_default();
    let branch_rows = m.tables.remove("branch").unwrap_or_default();
    check_width(&bus_rows, BUS_COLS, "bus")?;
    check_width(&gen_rows, GEN_COLS, "gen")?;
    check_width(&branch_rows, BRANCH_COLS, "branch")?;

    let mut gens = Vec::new();
    for row in &gen_rows {
        let v = &row.values;
        if v[7] <= 0.0 {
            continue;
        }
        gens.push(Generator {
            bus: as_id(v[0], row.line)?,
            p_set: v[1],
            q_max: v[3],
            q_min: v[4],
            v_set: v[5],
        });
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        let v = &row.values;
        let id = as_id(v[0], row.line)?;
        let gen = gens.iter().find(|g| g.bus == id);
        let kind = match v[1] as i64 {
            1 => BusType::Pq,
            // PV buses without a committed unit behave as loads
            2 if gen.is_some() => BusType::Pv,
            2 => BusType::Pq,
            3 => BusType::Slack,
            other => {
                return Err(Error::Parse {
                    line: row.line,
                    msg: format!("unsupported bus type {other}"),
                })
            }
        };
        let v_setpoint = match (kind, gen) {
            (BusType::Pq, _) | (_, None) => v[7],
            (_, Some(g)) => g.v_set,
        };
        buses.push(Bus {
            id,
            kind,
            p_load: v[2],
            q_load: v[3],
            g_shunt: v[4],
            b_shunt: v[5],
            vm_init: v[7],
            va_init: v[8],
            base_kv: v[9],
            v_setpoint,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, row) in branch_rows.iter().enumerate() {
        let v = &row.values;
        if v[9] != 0.0 {
            return Err(Error::Parse {
                line: row.line,
                msg: "phase-shifting transformers are not supported".into(),
            });
        }
        branches.push(Branch {
            id: k + 1,
            from: as_id(v[0], row.line)?,
            to: as_id(v[1], row.line)?,
            r: v[2],
            x: v[3],
            b_charging: v[4],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            in_service: v[10] > 0.0,
        });
    }

    GridCase::new(base_mva, buses, branches, gens)
}
