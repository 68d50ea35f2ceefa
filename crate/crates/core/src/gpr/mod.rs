//! Exact Gaussian-process regression: log marginal likelihood with analytic
//! gradients, fixed-budget Adam training, and predictive mean/variance.
//!
//! The full hyperparameter vector is the kernel's (see [`crate::kernels`])
//! with `log σ_n` appended.

mod model;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acpf::InjectionVector;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, PreparedGram, Standardizer};

pub use model::{GpModel, SamplingInfo};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_START: f64 = 1e-10;
const JITTER_STEPS: usize = 6;

/// Inputs and voltage targets for one node on one topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub inputs: Vec<InjectionVector>,
    pub targets: Vec<f64>,
    pub target_node: u32,
    pub topology_label: String,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.inputs.iter().map(InjectionVector::features).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Argument(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        if self.targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("targets must be finite".into()));
        }
        Ok(())
    }

    /// First `n` pairs.
    pub fn head(&self, n: usize) -> TrainingSet {
        let n = n.min(self.len());
        TrainingSet {
            inputs: self.inputs[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
            ..self.clone()
        }
    }
}

/// Default cold start: every `τ_n = ℓ_n = e`, `σ_n = e⁻⁵`, source
/// weights at 1.
pub fn cold_start(spec: &KernelSpec) -> Vec<f64> {
    let mut th = vec![1.0; 2 * spec.groups()];
    th.extend(std::iter::repeat_n(0.0, spec.weight_count()));
    th.push(-5.0);
    th
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iters: usize,
    pub learning_rate: f64,
    /// Indices into the hyperparameter vector held at their initial values.
    #[serde(default)]
    pub frozen: Vec<usize>,
    /// Fit a per-coordinate input standardization on the training inputs.
    /// Off by default: kernels then see raw per-unit injections.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            iters: 50,
            learning_rate: 0.05,
            frozen: Vec::new(),
            standardize: false,
        }
    }
}

impl FitOptions {
    pub fn iters(iters: usize) -> Self {
        FitOptions {
            iters,
            ..Self::default()
        }
    }
}

/// What one training run did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Log marginal likelihood at θ0 and after every step.
    pub lml_trace: Vec<f64>,
    pub best_iter: usize,
    pub factorizations: usize,
    pub max_factor_dim: usize,
    pub jitter: f64,
}

pub(crate) struct Factor {
    llt: faer::linalg::solvers::Llt<f64>,
    /// lower Cholesky factor
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

impl Factor {
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let z = self.l.solve_lower_triangular(y).expect("positive diagonal");
        self.l.tr_solve_lower_triangular(&z).expect("positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.llt.inverse();
        DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| inv[(i, j)])
    }
}

fn try_llt(k: &DMatrix<f64>, extra: f64) -> Option<faer::linalg::solvers::Llt<f64>> {
    // sequential kernels keep results independent of the thread count
    faer::set_global_parallelism(faer::Par::Seq);
    let n = k.nrows();
    let m = Mat::<f64>::from_fn(n, n, |i, j| k[(i, j)] + if i == j { extra } else { 0.0 });
    m.llt(Side::Lower).ok()
}

/// Cholesky of `K + σ²I`, escalating an added diagonal jitter on failure.
pub(crate) fn factorize(
    k: DMatrix<f64>,
    noise_var: f64,
    report: &mut FitReport,
) -> Result<Factor> {
    let n = k.nrows();
    report.max_factor_dim = report.max_factor_dim.max(n);
    let mut jitter = 0.0;
    for step in 0..=JITTER_STEPS {
        report.factorizations += 1;
        if let Some(llt) = try_llt(&k, noise_var + jitter) {
            if jitter > 0.0 {
                log::debug!("cholesky needed jitter {jitter:e}");
            }
            let lf = llt.L();
            let l = DMatrix::from_fn(n, n, |i, j| if i >= j { lf[(i, j)] } else { 0.0 });
            return Ok(Factor { llt, l, jitter });
        }
        if step < JITTER_STEPS {
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        }
    }
    Err(Error::Conditioning { jitter })
}

struct Evaluation {
    lml: f64,
    grad: Vec<f64>,
}

fn evaluate(
    prep: &PreparedGram,
    spec: &KernelSpec,
    theta_log: &[f64],
    y: &DVector<f64>,
    report: &mut FitReport,
) -> Result<Evaluation> {
    let n = y.len();
    let kp = spec.param_count();
    let noise_var = (2.0 * theta_log[kp]).exp();
    let (k, subs) = prep.gram(spec, theta_log);
    let f = factorize(k, noise_var, report)?;
    report.jitter = f.jitter;
    let alpha = f.solve(y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * f.log_det() - 0.5 * n as f64 * LN_2PI;

    let mut w = f.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);
    let mut grad: Vec<f64> = prep
        .contract_grad(spec, theta_log, &subs, &w)
        .into_iter()
        .map(|g| 0.5 * g)
        .collect();
    grad.push(noise_var * w.trace());
    Ok(Evaluation { lml, grad })
}

fn check_theta(spec: &KernelSpec, theta_log: &[f64]) -> Result<()> {
    let expect = spec.param_count() + 1;
    if theta_log.len() != expect {
        return Err(Error::Argument(format!(
            "expected {expect} hyperparameters, got {}",
            theta_log.len()
        )));
    }
    if theta_log.iter().any(|v| v.is_nan() || *v == f64::INFINITY) || !theta_log[expect - 1].is_finite() {
        return Err(Error::Argument("hyperparameters must be finite".into()));
    }
    Ok(())
}

/// `log p(V | S, θ)` and its gradient in log-hyperparameter space, on the
/// targets exactly as given and with the spec's stored standardization.
pub fn log_marginal_likelihood(
    theta_log: &[f64],
    data: &TrainingSet,
    spec: &KernelSpec,
) -> Result<(f64, Vec<f64>)> {
    data.validate()?;
    check_theta(spec, theta_log)?;
    spec.check_theta(theta_log)?;
    let prep = PreparedGram::new(spec, &data.features())?;
    let y = DVector::from_column_slice(&data.targets);
    let e = evaluate(&prep, spec, theta_log, &y, &mut FitReport::default())?;
    Ok((e.lml, e.grad))
}

/// Maximizes the log marginal likelihood from `theta0` with `opts.iters`
/// Adam steps and returns the model at the best iterate seen.
pub fn fit(
    data: &TrainingSet,
    spec: &KernelSpec,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<GpModel> {
    data.validate()?;
    if data.len() < 2 {
        return Err(Error::Argument(format!(
            "training needs at least 2 samples, got {}",
            data.len()
        )));
    }
    check_theta(spec, theta0)?;
    spec.check_theta(theta0)?;
    let Prepared { spec, x, y_mean, y, prep } = prepare(data, spec, opts)?;

    let mut report = FitReport::default();
    let first = evaluate(&prep, &spec, theta0, &y, &mut report)?;
    if !first.lml.is_finite() || first.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Initialization);
    }
    report.lml_trace.push(first.lml);

    let mut theta = theta0.to_vec();
    let mut best = (first.lml, theta.clone(), 0);
    let mut grad = first.grad;
    let dim = theta.len();
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for t in 1..=opts.iters {
        for i in 0..dim {
            if opts.frozen.contains(&i) || !theta[i].is_finite() {
                continue;
            }
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = m[i] / (1.0 - f64::powi(b1, t as i32));
            let vh = v[i] / (1.0 - f64::powi(b2, t as i32));
            theta[i] += opts.learning_rate * mh / (vh.sqrt() + eps);
        }
        match evaluate(&prep, &spec, &theta, &y, &mut report) {
            Ok(e) if e.lml.is_finite() && e.grad.iter().all(|g| g.is_finite()) => {
                report.lml_trace.push(e.lml);
                if e.lml > best.0 {
                    best = (e.lml, theta.clone(), t);
                }
                grad = e.grad;
            }
            Ok(_) | Err(Error::Conditioning { .. }) => {
                log::warn!("{}: training stopped at step {t}, ill-conditioned iterate", data.topology_label);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    report.best_iter = best.2;
    GpModel::build(spec, best.1, x, data, y_mean, best.0, report)
}

struct Prepared {
    spec: KernelSpec,
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y: DVector<f64>,
    prep: PreparedGram,
}

fn prepare(data: &TrainingSet, spec: &KernelSpec, opts: &FitOptions) -> Result<Prepared> {
    let x = data.features();
    let spec = if opts.standardize {
        spec.clone().with_standardizer(Standardizer::fit(&x)?)
    } else {
        spec.clone()
    };
    let y_mean = data.targets.iter().sum::<f64>() / data.len() as f64;
    let y = DVector::from_iterator(data.len(), data.targets.iter().map(|v| v - y_mean));
    let prep = PreparedGram::new(&spec, &x)?;
    Ok(Prepared { spec, x, y_mean, y, prep })
}

/// Log marginal likelihood at each candidate, with the preprocessing `fit`
/// would apply. Candidates the Gram cannot be factorized at score `-inf`.
pub fn lml_at(
    data: &TrainingSet,
    spec: &KernelSpec,
    candidates: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    data.validate()?;
    for th in candidates {
        check_theta(spec, th)?;
        spec.check_theta(th)?;
    }
    let p = prepare(data, spec, opts)?;
    candidates
        .iter()
        .map(|th| match evaluate(&p.prep, &p.spec, th, &p.y, &mut FitReport::default()) {
            Ok(e) if e.lml.is_finite() => Ok(e.lml),
            Ok(_) | Err(Error::Conditioning { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        })
        .collect()
}

/// Mean and latent variance of the prediction at `s`.
pub fn predict(model: &GpModel, s: &InjectionVector) -> Result<(f64, f64)> {
    model.predict(s)
}

/// Mean absolute error of the predictive mean on `test`.
pub fn mae(model: &GpModel, test: &TrainingSet) -> Result<f64> {
    test.validate()?;
    if test.is_empty() {
        return Err(Error::Argument("MAE needs at least one test point".into()));
    }
    let (mu, _) = model.predict_batch(&test.features())?;
    Ok(mean_abs_diff(&mu, &test.targets))
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
