//! Squared-exponential sub-kernels, the additive vertex-degree kernel over
//! neighborhood injections, and its multi-task extension with frozen source
//! kernels.
//!
//! Hyperparameters live in log space as one flat vector: `[log τ_1, log ℓ_1,
//! ..., log τ_G, log ℓ_G]` for the G groups, followed by the source weight
//! `log ω` (or one `log ω_m` per source) for the multi-task kind. Noise is
//! appended by the regression layer.

mod prepared;
pub(crate) mod serde_log;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcase::NeighborhoodStructure;

pub use prepared::PreparedGram;

/// `τ² exp(-‖x - x'‖² / 2ℓ²)`.
pub fn se_eval(x: &[f64], y: &[f64], tau: f64, ell: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if !(tau > 0.0 && ell > 0.0) {
        return Err(Error::Argument(format!(
            "amplitude and lengthscale must be positive, got {tau}, {ell}"
        )));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(tau * tau * (-d2 / (2.0 * ell * ell)).exp())
}

#[inline]
pub(crate) fn group_sq_dist(group: &[usize], x: &[f64], y: &[f64]) -> f64 {
    group
        .iter()
        .map(|&i| {
            let d = x[i] - y[i];
            d * d
        })
        .sum()
}

/// Additive kernel: one SE sub-kernel per node over that node's neighborhood.
/// `theta_log` holds `2 * nbr.len()` entries.
pub fn vdk_eval(s: &[f64], s2: &[f64], nbr: &NeighborhoodStructure, theta_log: &[f64]) -> f64 {
    nbr.groups
        .iter()
        .enumerate()
        .map(|(n, g)| {
            let tau2 = (2.0 * theta_log[2 * n]).exp();
            let ell2 = (2.0 * theta_log[2 * n + 1]).exp();
            tau2 * (-group_sq_dist(g, s, s2) / (2.0 * ell2)).exp()
        })
        .sum()
}

/// Target VDK plus `ω` times the sum of frozen source VDKs.
pub fn mt_vdk_eval(
    s: &[f64],
    s2: &[f64],
    target: (&NeighborhoodStructure, &[f64]),
    sources: &[(&NeighborhoodStructure, &[f64])],
    omega: f64,
) -> Result<f64> {
    if omega < 0.0 {
        return Err(Error::Argument(format!("source weight must be >= 0, got {omega}")));
    }
    let mut k = vdk_eval(s, s2, target.0, target.1);
    if omega > 0.0 {
        let src: f64 = sources.iter().map(|(nbr, th)| vdk_eval(s, s2, nbr, th)).sum();
        k += omega * src;
    }
    Ok(k)
}

/// Per-coordinate affine map fitted on training inputs. Coordinates without
/// spread pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = x.first() else {
            return Err(Error::Argument("cannot standardize an empty sample".into()));
        };
        let dim = first.len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in x {
            if row.len() != dim {
                return Err(Error::Argument("ragged input rows".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let mut scale = vec![1.0; dim];
        for i in 0..dim {
            let sd = var[i].sqrt();
            if sd > 1e-12 * mean[i].abs().max(1e-12) {
                scale[i] = sd;
            } else {
                mean[i] = 0.0;
            }
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    FullSe,
    Vdk,
    MtVdk,
}

/// A source model's kernel, fixed at its trained hyperparameters and read
/// through the source's own input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenSource {
    pub label: String,
    pub neighborhoods: NeighborhoodStructure,
    #[serde(with = "serde_log")]
    pub theta_log: Vec<f64>,
    pub standardizer: Standardizer,
}

impl FrozenSource {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        vdk_eval(
            &self.standardizer.apply(x),
            &self.standardizer.apply(y),
            &self.neighborhoods,
            &self.theta_log,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub neighborhoods: NeighborhoodStructure,
    #[serde(default)]
    pub sources: Vec<FrozenSource>,
    /// One weight per source instead of a shared one.
    #[serde(default)]
    pub per_source_weights: bool,
    pub standardizer: Standardizer,
}

impl KernelSpec {
    /// One SE kernel over every coordinate of a `dim`-long input.
    pub fn full_se(dim: usize) -> Self {
        KernelSpec {
            kind: KernelKind::FullSe,
            neighborhoods: NeighborhoodStructure::full(dim),
            sources: Vec::new(),
            per_source_weights: false,
            standardizer: Standardizer::identity(dim),
        }
    }

    pub fn vdk(nbr: NeighborhoodStructure) -> Self {
        let dim = nbr.input_dim();
        KernelSpec {
            kind: KernelKind::Vdk,
            neighborhoods: nbr,
            sources: Vec::new(),
            per_source_weights: false,
            standardizer: Standardizer::identity(dim),
        }
    }

    pub fn mt_vdk(
        nbr: NeighborhoodStructure,
        sources: Vec<FrozenSource>,
        per_source_weights: bool,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Argument("multi-task kernel needs at least one source".into()));
        }
        let dim = nbr.input_dim();
        for src in &sources {
            if src.standardizer.dim() != dim || src.neighborhoods.input_dim() > dim {
                return Err(Error::Argument(format!(
                    "source {} does not match the target input dimension {dim}",
                    src.label
                )));
            }
            if src.theta_log.len() != 2 * src.neighborhoods.len() {
                return Err(Error::Argument(format!(
                    "source {} has {} hyperparameters for {} groups",
                    src.label,
                    src.theta_log.len(),
                    src.neighborhoods.len()
                )));
            }
        }
        Ok(KernelSpec {
            kind: KernelKind::MtVdk,
            neighborhoods: nbr,
            sources,
            per_source_weights,
            standardizer: Standardizer::identity(dim),
        })
    }

    pub fn with_standardizer(mut self, st: Standardizer) -> Self {
        self.standardizer = st;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn groups(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            KernelKind::MtVdk if self.per_source_weights => self.sources.len(),
            KernelKind::MtVdk => 1,
            _ => 0,
        }
    }

    /// Length of the kernel part of the hyperparameter vector.
    pub fn param_count(&self) -> usize {
        2 * self.groups() + self.weight_count()
    }

    /// Weight applied to source `m`.
    pub(crate) fn source_weight(&self, theta_log: &[f64], m: usize) -> f64 {
        let base = 2 * self.groups();
        if self.per_source_weights {
            theta_log[base + m].exp()
        } else {
            theta_log[base].exp()
        }
    }

    pub(crate) fn check_theta(&self, theta_log: &[f64]) -> Result<()> {
        if theta_log.len() < self.param_count() {
            return Err(Error::Argument(format!(
                "kernel needs {} hyperparameters, got {}",
                self.param_count(),
                theta_log.len()
            )));
        }
        if theta_log[..2 * self.groups()].iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("kernel hyperparameters must be finite".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "input has {} coordinates, kernel expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Covariance between two raw (unstandardized) feature vectors.
    pub fn eval(&self, x: &[f64], y: &[f64], theta_log: &[f64]) -> Result<f64> {
        self.check_theta(theta_log)?;
        self.check_input(x)?;
        self.check_input(y)?;
        let zx = self.standardizer.apply(x);
        let zy = self.standardizer.apply(y);
        let mut k = vdk_eval(&zx, &zy, &self.neighborhoods, theta_log);
        for (m, src) in self.sources.iter().enumerate() {
            let w = self.source_weight(theta_log, m);
            if w > 0.0 {
                k += w * src.eval(x, y);
            }
        }
        Ok(k)
    }

    /// k(s, s), which needs no distances.
    pub fn prior_variance(&self, theta_log: &[f64]) -> f64 {
        let own: f64 = (0..self.groups()).map(|n| (2.0 * theta_log[2 * n]).exp()).sum();
        let src: f64 = self
            .sources
            .iter()
            .enumerate()
            .map(|(m, s)| {
                let w = self.source_weight(theta_log, m);
                if w > 0.0 {
                    let t: f64 = (0..s.neighborhoods.len())
                        .map(|n| (2.0 * s.theta_log[2 * n]).exp())
                        .sum();
                    w * t
                } else {
                    0.0
                }
            })
            .sum();
        own + src
    }
}

/// `K[i][j] = k(x1_i, x2_j)` over raw feature vectors.
pub fn gram(
    x1: &[Vec<f64>],
    x2: &[Vec<f64>],
    spec: &KernelSpec,
    theta_log: &[f64],
) -> Result<DMatrix<f64>> {
    spec.check_theta(theta_log)?;
    for x in x1.iter().chain(x2) {
        spec.check_input(x)?;
    }
    let z1: Vec<Vec<f64>> = x1.iter().map(|x| spec.standardizer.apply(x)).collect();
    let z2: Vec<Vec<f64>> = x2.iter().map(|x| spec.standardizer.apply(x)).collect();
    let mut k = DMatrix::from_fn(x1.len(), x2.len(), |i, j| {
        vdk_eval(&z1[i], &z2[j], &spec.neighborhoods, theta_log)
    });
    for (m, src) in spec.sources.iter().enumerate() {
        let w = spec.source_weight(theta_log, m);
        if w == 0.0 {
            continue;
        }
        let s1: Vec<Vec<f64>> = x1.iter().map(|x| src.standardizer.apply(x)).collect();
        let s2: Vec<Vec<f64>> = x2.iter().map(|x| src.standardizer.apply(x)).collect();
        for j in 0..x2.len() {
            for i in 0..x1.len() {
                k[(i, j)] += w * vdk_eval(&s1[i], &s2[j], &src.neighborhoods, &src.theta_log);
            }
        }
    }
    Ok(k)
}

/// Derivatives of the training Gram with respect to each kernel
/// log-hyperparameter, in vector order. Frozen source parameters have none.
pub fn gram_grad(x: &[Vec<f64>], spec: &KernelSpec, theta_log: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    if x.is_empty() {
        return Err(Error::Argument("gradient needs at least one sample".into()));
    }
    spec.check_theta(theta_log)?;
    let prep = PreparedGram::new(spec, x)?;
    let subs = prep.sub_grams(theta_log);
    let mut out = Vec::with_capacity(spec.param_count());
    for (n, kn) in subs.iter().enumerate() {
        out.push(kn * 2.0);
        let inv_ell2 = (-2.0 * theta_log[2 * n + 1]).exp();
        out.push(kn.component_mul(&prep.d2[n]) * inv_ell2);
    }
    let base = 2 * spec.groups();
    if spec.weight_count() == 1 {
        let w = theta_log[base].exp();
        let total = prep.source_total();
        out.push(total * w);
    } else {
        for (m, g) in prep.sources.iter().enumerate() {
            out.push(g * theta_log[base + m].exp());
        }
    }
    Ok(out)
}
