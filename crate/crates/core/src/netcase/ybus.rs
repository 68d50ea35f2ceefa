use std::io::Write;

use num_complex::Complex64;

use super::{GridCase, Topology};
use crate::error::{Error, Result};

/// Dense complex nodal admittance matrix in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(dim: usize) -> Self {
        AdmittanceMatrix {
            dim,
            entries: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.entries[i * self.dim + j] += v;
    }

    /// Real and imaginary parts as separate row-major matrices.
    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.entries.iter().map(|c| c.re).collect(),
            self.entries.iter().map(|c| c.im).collect(),
        )
    }

    /// Nonzero entries as `i,j,g,b` CSV triplets using external bus ids.
    pub fn write_csv<W: Write>(&self, case: &GridCase, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,g,b")?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let y = self.get(i, j);
                if y.re != 0.0 || y.im != 0.0 {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        case.buses[i].id, case.buses[j].id, y.re, y.im
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Standard branch pi-model stamps with off-nominal taps on the from side,
/// plus bus shunts.
pub fn build_ybus(case: &GridCase, topo: &Topology) -> Result<AdmittanceMatrix> {
    topo.check_case(case)?;
    let n = case.bus_count();
    let mut y = AdmittanceMatrix::zeros(n);
    for ((br, (f, t)), &on) in case
        .branches
        .iter()
        .zip(case.branch_ends())
        .zip(&topo.in_service)
    {
        if !on {
            continue;
        }
        let z = Complex64::new(br.r, br.x);
        if z.norm_sqr() == 0.0 {
            return Err(Error::SingularBranch(br.id));
        }
        let ys = z.inv();
        let half_b = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = br.tap;
        y.add(f, f, (ys + half_b) / (tap * tap));
        y.add(t, t, ys + half_b);
        y.add(f, t, -ys / tap);
        y.add(t, f, -ys / tap);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.g_shunt != 0.0 || bus.b_shunt != 0.0 {
            y.add(i, i, Complex64::new(bus.g_shunt, bus.b_shunt) / case.base_mva);
        }
    }
    Ok(y)
}
