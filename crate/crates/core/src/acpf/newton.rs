use std::sync::atomic::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{InjectionVector, GLOBAL_SOLVES};
use crate::error::{Error, Result};
use crate::netcase::{build_ybus, is_connected, BusType, GridCase, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// 1 pu at load buses, setpoints elsewhere, zero angles.
    Flat,
    /// Magnitudes and angles stored in the case file.
    Case,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: StartMode,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_iter: 20,
            start: StartMode::Flat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub v_mag: Vec<f64>,
    /// radians, slack at zero
    pub v_ang: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub reason: Option<String>,
}

/// Complex power injected at every bus by the network for voltages
/// `(v_mag, v_ang)`: returns `(P, Q)` in per-unit.
pub fn bus_powers(g: &[f64], b: &[f64], v_mag: &[f64], v_ang: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v_mag.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in 0..n {
            let (gik, bik) = (g[i * n + k], b[i * n + k]);
            if gik == 0.0 && bik == 0.0 {
                continue;
            }
            let (s, c) = (v_ang[i] - v_ang[k]).sin_cos();
            pi += v_mag[k] * (gik * c + bik * s);
            qi += v_mag[k] * (gik * s - bik * c);
        }
        p[i] = v_mag[i] * pi;
        q[i] = v_mag[i] * qi;
    }
    (p, q)
}

/// Polar Newton-Raphson. Unknowns are the angles of every non-slack bus and
/// the magnitudes of PQ buses; PV buses hold their setpoint with reactive
/// limits ignored. A singular Jacobian or a diverging iterate ends the solve
/// with `converged = false`.
pub fn solve_nr(
    case: &GridCase,
    topo: &Topology,
    inj: &InjectionVector,
    opts: &PfOptions,
) -> Result<PfSolution> {
    GLOBAL_SOLVES.fetch_add(1, Ordering::Relaxed);
    let n = case.bus_count();
    if inj.len() != n {
        return Err(Error::Argument(format!(
            "injection has {} nodes, case has {n}",
            inj.len()
        )));
    }
    topo.check_case(case)?;
    if !is_connected(case, topo) {
        return Err(Error::Argument(format!(
            "topology {} is disconnected",
            topo.label
        )));
    }
    let (g, b) = build_ybus(case, topo)?.split();

    let slack = case.slack_index();
    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusType::Pq)
        .collect();
    // column of each bus's magnitude unknown, if it has one
    let mut vm_col = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        vm_col[i] = pvpq.len() + k;
    }
    let mut va_col = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        va_col[i] = k;
    }
    let dim = pvpq.len() + pq.len();

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|bus| match (bus.kind, opts.start) {
            (BusType::Pq, StartMode::Flat) => 1.0,
            (BusType::Pq, StartMode::Case) => bus.vm_init,
            _ => bus.v_setpoint,
        })
        .collect();
    let mut va: Vec<f64> = match opts.start {
        StartMode::Flat => vec![0.0; n],
        StartMode::Case => {
            let ref_ang = case.buses[slack].va_init;
            case.buses
                .iter()
                .map(|bus| (bus.va_init - ref_ang).to_radians())
                .collect()
        }
    };

    let mismatch = |p: &[f64], q: &[f64]| -> DVector<f64> {
        let mut f = DVector::zeros(dim);
        for (k, &i) in pvpq.iter().enumerate() {
            f[k] = inj.p[i] - p[i];
        }
        for (k, &i) in pq.iter().enumerate() {
            f[pvpq.len() + k] = inj.q[i] - q[i];
        }
        f
    };

    let mut iterations = 0;
    loop {
        let (p, q) = bus_powers(&g, &b, &vm, &va);
        let f = mismatch(&p, &q);
        let max_mismatch = f.amax();
        if !max_mismatch.is_finite() {
            return Ok(PfSolution {
                v_mag: vm,
                v_ang: va,
                converged: false,
                iterations,
                max_mismatch,
                reason: Some("iterate diverged".into()),
            });
        }
        if max_mismatch < opts.tol {
            return Ok(PfSolution {
                v_mag: vm,
                v_ang: va,
                converged: true,
                iterations,
                max_mismatch,
                reason: None,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(PfSolution {
                v_mag: vm,
                v_ang: va,
                converged: false,
                iterations,
                max_mismatch,
                reason: Some(format!("no convergence in {} iterations", opts.max_iter)),
            });
        }

        let jac = jacobian(&g, &b, &vm, &va, &p, &q, &pvpq, &va_col, &vm_col, dim);
        let Some(dx) = jac.lu().solve(&f) else {
            return Ok(PfSolution {
                v_mag: vm,
                v_ang: va,
                converged: false,
                iterations,
                max_mismatch,
                reason: Some("singular Jacobian".into()),
            });
        };
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + k];
        }
        iterations += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn jacobian(
    g: &[f64],
    b: &[f64],
    vm: &[f64],
    va: &[f64],
    p: &[f64],
    q: &[f64],
    pvpq: &[usize],
    va_col: &[usize],
    vm_col: &[usize],
    dim: usize,
) -> DMatrix<f64> {
    let n = vm.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let q_row = |i: usize| vm_col[i];
    for &i in pvpq {
        let rp = va_col[i];
        let rq = q_row(i);
        for k in 0..n {
            let (gik, bik) = (g[i * n + k], b[i * n + k]);
            if k != i && gik == 0.0 && bik == 0.0 {
                continue;
            }
            if k == i {
                let (gii, bii) = (gik, bik);
                let vi = vm[i];
                jac[(rp, va_col[i])] = -q[i] - bii * vi * vi;
                if vm_col[i] != usize::MAX {
                    jac[(rp, vm_col[i])] = p[i] / vi + gii * vi;
                }
                if rq != usize::MAX {
                    jac[(rq, va_col[i])] = p[i] - gii * vi * vi;
                    jac[(rq, vm_col[i])] = q[i] / vi - bii * vi;
                }
                continue;
            }
            let (s, c) = (va[i] - va[k]).sin_cos();
            let a = gik * s - bik * c;
            let d = gik * c + bik * s;
            if va_col[k] != usize::MAX {
                jac[(rp, va_col[k])] = vm[i] * vm[k] * a;
                if rq != usize::MAX {
                    jac[(rq, va_col[k])] = -vm[i] * vm[k] * d;
                }
            }
            if vm_col[k] != usize::MAX {
                jac[(rp, vm_col[k])] = vm[i] * d;
                if rq != usize::MAX {
                    jac[(rq, vm_col[k])] = vm[i] * a;
                }
            }
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::fixtures::{triangle, two_bus};

    /// Lossless two-bus line with x = 0.1 feeding load (p, q): the receiving
    /// magnitude solves p² + (10V² + q)² = 100V² on the high-voltage branch.
    fn two_bus_bisection(p: f64, q: f64) -> (f64, f64) {
        let h = |v: f64| p * p + (10.0 * v * v + q).powi(2) - 100.0 * v * v;
        let (mut lo, mut hi) = (0.5_f64, 1.5_f64);
        assert!(h(lo) < 0.0 && h(hi) > 0.0, "bracket misses the upper root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        let theta = (-p / (10.0 * v)).asin();
        (v, theta)
    }

    #[test]
    fn unloaded_two_bus_is_flat() {
        let case = two_bus(0.0, 0.0);
        let topo = Topology::base(&case);
        let s = InjectionVector::base_case(&case);
        let sol = solve_nr(&case, &topo, &s, &PfOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 2);
        assert!((sol.v_mag[1] - 1.0).abs() < 1e-12);
        assert!(sol.v_ang[1].abs() < 1e-12);
    }

    #[test]
    fn two_bus_matches_bisection() {
        let case = two_bus(50.0, 0.0);
        let topo = Topology::base(&case);
        let s = InjectionVector::base_case(&case);
        let sol = solve_nr(&case, &topo, &s, &PfOptions::default()).unwrap();
        assert!(sol.converged);
        let (v, th) = two_bus_bisection(0.5, 0.0);
        assert!((sol.v_mag[1] - v).abs() < 1e-10, "{} vs {v}", sol.v_mag[1]);
        assert!((sol.v_ang[1] - th).abs() < 1e-10);
        // closed form for q = 0: sin 2θ = -0.1, V = cos θ
        let th_closed = -0.5 * 0.1_f64.asin();
        assert!((v - th_closed.cos()).abs() < 1e-12);
    }

    #[test]
    fn mismatch_is_small_at_solution() {
        let case = triangle();
        let topo = Topology::base(&case);
        let s = InjectionVector::base_case(&case);
        let sol = solve_nr(&case, &topo, &s, &PfOptions::default()).unwrap();
        assert!(sol.converged);
        let (g, b) = build_ybus(&case, &topo).unwrap().split();
        let (p, q) = bus_powers(&g, &b, &sol.v_mag, &sol.v_ang);
        for i in 1..3 {
            assert!((p[i] - s.p[i]).abs() < 1e-8);
            assert!((q[i] - s.q[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn disconnected_topology_is_an_argument_error() {
        let case = two_bus(10.0, 0.0);
        let out = Topology::base(&case).apply_outage(&[1]).unwrap();
        let s = InjectionVector::base_case(&case);
        assert!(matches!(
            solve_nr(&case, &out, &s, &PfOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn overload_reports_non_convergence() {
        // beyond the nose of the P-V curve (max transfer 5 pu)
        let case = two_bus(800.0, 0.0);
        let s = InjectionVector::base_case(&case);
        let sol = solve_nr(&case, &Topology::base(&case), &s, &PfOptions::default()).unwrap();
        assert!(!sol.converged);
        assert!(sol.reason.is_some());
    }
}
