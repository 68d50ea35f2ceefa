use nalgebra::DMatrix;

use super::{group_sq_dist, KernelSpec};
use crate::error::Result;

/// Training-set quantities that do not depend on the trainable
/// hyperparameters: per-group squared distances and the frozen source Grams.
/// Built once per fit so each optimizer step only exponentiates and
/// factorizes an `N × N` matrix.
#[derive(Debug, Clone)]
pub struct PreparedGram {
    pub(crate) n: usize,
    pub(crate) d2: Vec<DMatrix<f64>>,
    pub(crate) sources: Vec<DMatrix<f64>>,
    source_sum: Option<DMatrix<f64>>,
}

impl PreparedGram {
    pub fn new(spec: &KernelSpec, x: &[Vec<f64>]) -> Result<Self> {
        for row in x {
            spec.check_input(row)?;
        }
        let n = x.len();
        let z: Vec<Vec<f64>> = x.iter().map(|r| spec.standardizer.apply(r)).collect();
        let d2 = spec
            .neighborhoods
            .groups
            .iter()
            .map(|g| symmetric(n, |i, j| group_sq_dist(g, &z[i], &z[j])))
            .collect();
        let sources: Vec<DMatrix<f64>> = spec
            .sources
            .iter()
            .map(|src| {
                let zs: Vec<Vec<f64>> = x.iter().map(|r| src.standardizer.apply(r)).collect();
                symmetric(n, |i, j| {
                    super::vdk_eval(&zs[i], &zs[j], &src.neighborhoods, &src.theta_log)
                })
            })
            .collect();
        let source_sum = (!sources.is_empty()).then(|| {
            let mut s = DMatrix::zeros(n, n);
            for g in &sources {
                s += g;
            }
            s
        });
        Ok(PreparedGram {
            n,
            d2,
            sources,
            source_sum,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub(crate) fn source_total(&self) -> DMatrix<f64> {
        self.source_sum
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(self.n, self.n))
    }

    /// One `τ_n² exp(-d²/2ℓ_n²)` matrix per group.
    pub fn sub_grams(&self, theta_log: &[f64]) -> Vec<DMatrix<f64>> {
        self.d2
            .iter()
            .enumerate()
            .map(|(k, d2)| {
                let tau2 = (2.0 * theta_log[2 * k]).exp();
                let c = -0.5 * (-2.0 * theta_log[2 * k + 1]).exp();
                d2.map(|d| tau2 * (c * d).exp())
            })
            .collect()
    }

    /// Kernel Gram (no noise) and the per-group pieces it was summed from.
    pub fn gram(&self, spec: &KernelSpec, theta_log: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let subs = self.sub_grams(theta_log);
        let mut k = DMatrix::zeros(self.n, self.n);
        for s in &subs {
            k += s;
        }
        if spec.weight_count() == 1 {
            let w = theta_log[2 * spec.groups()].exp();
            if w > 0.0 {
                if let Some(s) = &self.source_sum {
                    k += s * w;
                }
            }
        } else {
            for (m, g) in self.sources.iter().enumerate() {
                let w = spec.source_weight(theta_log, m);
                if w > 0.0 {
                    k += g * w;
                }
            }
        }
        (k, subs)
    }

    /// `Σ_ij W_ij ∂K_ij / ∂θ_k` for every kernel log-hyperparameter.
    pub fn contract_grad(
        &self,
        spec: &KernelSpec,
        theta_log: &[f64],
        subs: &[DMatrix<f64>],
        w: &DMatrix<f64>,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(spec.param_count());
        for (k, (kn, d2)) in subs.iter().zip(&self.d2).enumerate() {
            let inv_ell2 = (-2.0 * theta_log[2 * k + 1]).exp();
            let (mut g_tau, mut g_ell) = (0.0, 0.0);
            for ((wij, kij), dij) in w.iter().zip(kn.iter()).zip(d2.iter()) {
                let a = wij * kij;
                g_tau += a;
                g_ell += a * dij;
            }
            out.push(2.0 * g_tau);
            out.push(g_ell * inv_ell2);
        }
        let base = 2 * spec.groups();
        if spec.weight_count() == 1 {
            let s = self.source_sum.as_ref().map_or(0.0, |s| s.dot(w));
            out.push(theta_log[base].exp() * s);
        } else {
            for (m, g) in self.sources.iter().enumerate() {
                out.push(theta_log[base + m].exp() * g.dot(w));
            }
        }
        out
    }
}

fn symmetric(n: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = f(i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
