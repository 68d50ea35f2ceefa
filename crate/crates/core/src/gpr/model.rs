use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{factorize, FitReport, TrainingSet};
use crate::acpf::{InjectionVector, LoadHypercube};
use crate::error::{Error, Result};
use crate::kernels::{gram, serde_log, KernelSpec, PreparedGram};

/// Where the training inputs were drawn from, so evaluation points can be
/// redrawn later without the case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub hypercube: LoadHypercube,
    pub fraction: f64,
}

/// A trained GP. The serialized form holds the training data and
/// hyperparameters; the factorization is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModel {
    pub label: String,
    pub target_node: u32,
    #[serde(default)]
    pub case_fingerprint: u64,
    pub spec: KernelSpec,
    #[serde(with = "serde_log")]
    pub theta_log: Vec<f64>,
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
    pub y_mean: f64,
    pub lml: f64,
    #[serde(default)]
    pub solve_count: u64,
    #[serde(default)]
    pub sampling: Option<SamplingInfo>,
    #[serde(default)]
    pub report: FitReport,
    #[serde(skip)]
    fitted: Option<Fitted>,
}

#[derive(Debug, Clone)]
struct Fitted {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub(crate) fn build(
        spec: KernelSpec,
        theta_log: Vec<f64>,
        x_train: Vec<Vec<f64>>,
        data: &TrainingSet,
        y_mean: f64,
        lml: f64,
        report: FitReport,
    ) -> Result<Self> {
        let mut model = GpModel {
            label: data.topology_label.clone(),
            target_node: data.target_node,
            case_fingerprint: 0,
            spec,
            theta_log,
            x_train,
            y_train: data.targets.clone(),
            y_mean,
            lml,
            solve_count: 0,
            sampling: None,
            report,
            fitted: None,
        };
        model.refactor()?;
        Ok(model)
    }

    /// Recomputes the Cholesky factor and weights from the stored data.
    pub fn refactor(&mut self) -> Result<()> {
        let n = self.x_train.len();
        if n == 0 || self.y_train.len() != n {
            return Err(Error::Argument("model has no consistent training data".into()));
        }
        let prep = PreparedGram::new(&self.spec, &self.x_train)?;
        let (k, _) = prep.gram(&self.spec, &self.theta_log);
        let mut report = FitReport::default();
        let f = factorize(k, self.noise_var(), &mut report)?;
        let y = DVector::from_iterator(n, self.y_train.iter().map(|v| v - self.y_mean));
        let alpha = f.solve(&y);
        self.report.jitter = f.jitter;
        self.fitted = Some(Fitted { l: f.l, alpha });
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        (2.0 * self.theta_log[self.spec.param_count()]).exp()
    }

    /// Diagonal term actually added to the Gram: noise plus any jitter.
    pub fn diagonal_term(&self) -> f64 {
        self.noise_var() + self.report.jitter
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.fitted().l
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.fitted().alpha
    }

    fn fitted(&self) -> &Fitted {
        self.fitted
            .as_ref()
            .expect("GpModel constructed without a factorization")
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn n_train(&self) -> usize {
        self.x_train.len()
    }

    /// Predictive means and latent variances for raw feature rows.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        if xs.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let f = self.fitted();
        let ks = gram(&self.x_train, xs, &self.spec, &self.theta_log)?;
        let mean = ks.tr_mul(&f.alpha);
        let v = f
            .l
            .solve_lower_triangular(&ks)
            .ok_or(Error::Conditioning { jitter: self.report.jitter })?;
        let prior = self.spec.prior_variance(&self.theta_log);
        let mut var = Vec::with_capacity(xs.len());
        for j in 0..xs.len() {
            let s = prior - v.column(j).norm_squared();
            if s < -1e-8 {
                log::warn!("negative predictive variance {s:e} clamped");
            }
            var.push(s.max(0.0));
        }
        Ok((mean.iter().map(|m| m + self.y_mean).collect(), var))
    }

    pub fn predict(&self, s: &InjectionVector) -> Result<(f64, f64)> {
        let (m, v) = self.predict_batch(&[s.features()])?;
        Ok((m[0], v[0]))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Argument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: GpModel =
            serde_json::from_str(text).map_err(|e| Error::Argument(e.to_string()))?;
        model.refactor()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut model: GpModel =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        model.refactor().map_err(|e| Error::format(path, e))?;
        Ok(model)
    }
}
