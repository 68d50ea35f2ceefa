//! Probabilistic voltage envelopes: scenario sample bound, confidence
//! adjustment for GP approximation error, and envelope estimation from a
//! trained model with no further power-flow solves.

use serde::{Deserialize, Serialize};

use crate::acpf::InjectionVector;
use crate::error::{Error, Result};
use crate::gpr::GpModel;
use crate::seeds;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Smallest `T` with `T ≥ ln(1/δ) / ln(1/(1 - ε/2))`, at least 1.
pub fn required_samples(epsilon: f64, delta: f64) -> Result<usize> {
    check_unit("epsilon", epsilon)?;
    check_unit("delta", delta)?;
    let t = (1.0 / delta).ln() / (1.0 / (1.0 - epsilon / 2.0)).ln();
    // guard against ceil bumping an exact integer up by rounding noise
    let r = t.round();
    let t = if (t - r).abs() < 1e-9 * r.max(1.0) { r } else { t.ceil() };
    Ok((t as usize).max(1))
}

/// Violation level certified by `t` samples at confidence `1 - δ`.
pub fn implied_epsilon(t: usize, delta: f64) -> Result<f64> {
    check_unit("delta", delta)?;
    if t == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    Ok(2.0 * (1.0 - (-(1.0 / delta).ln() / t as f64).exp()))
}

/// Upper standard-normal tail `1 - Φ(κ)`.
pub fn gamma_tail(kappa: f64) -> f64 {
    0.5 * libm::erfc(kappa / std::f64::consts::SQRT_2)
}

/// `(1 - δ)(1 - γ(κ))^T`.
pub fn adjusted_confidence(delta: f64, kappa: f64, t: usize) -> f64 {
    let g = gamma_tail(kappa);
    (1.0 - delta) * (t as f64 * (-g).ln_1p()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PveConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub t: usize,
}

impl PveConfig {
    /// `T` defaults to `max(1000, required_samples(ε, δ))`.
    pub fn new(epsilon: f64, delta: f64, kappa: f64, t: Option<usize>) -> Result<Self> {
        let need = required_samples(epsilon, delta)?;
        if !(kappa >= 0.0) {
            return Err(Error::Argument(format!("kappa must be >= 0, got {kappa}")));
        }
        let t = t.unwrap_or(need.max(1000));
        if t == 0 {
            return Err(Error::Argument("T must be at least 1".into()));
        }
        if t < need {
            log::warn!("T = {t} is below the {need} samples needed for epsilon = {epsilon}");
        }
        Ok(PveConfig {
            epsilon,
            delta,
            kappa,
            t,
        })
    }

    pub fn confidence(&self) -> f64 {
        adjusted_confidence(self.delta, self.kappa, self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub node: u32,
    pub topology_label: String,
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub config: PveConfig,
    pub adjusted_confidence: f64,
    pub evaluation_count: usize,
    pub train_solves: u64,
}

impl Envelope {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.beta_lower && v <= self.beta_upper
    }
}

/// `(max μ + κσ, min μ - κσ)` over the evaluation points.
pub fn estimate_beta(model: &GpModel, eval: &[InjectionVector], kappa: f64) -> Result<(f64, f64)> {
    if eval.is_empty() {
        return Err(Error::Argument("envelope needs at least one evaluation sample".into()));
    }
    let xs: Vec<Vec<f64>> = eval.iter().map(InjectionVector::features).collect();
    let (mu, var) = model.predict_batch(&xs)?;
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    for (m, v) in mu.iter().zip(&var) {
        let s = v.sqrt();
        upper = upper.max(m + kappa * s);
        lower = lower.min(m - kappa * s);
    }
    Ok((upper, lower))
}

/// Evaluation injections for `model`: `t` fresh draws from the hypercube it
/// was trained on, optionally with a different spread.
pub fn evaluation_samples(
    model: &GpModel,
    t: usize,
    seed: u64,
    fraction: Option<f64>,
) -> Result<Vec<InjectionVector>> {
    let info = model.sampling.as_ref().ok_or_else(|| {
        Error::Argument(format!(
            "model {} carries no sampling provenance",
            model.label
        ))
    })?;
    let node = model.target_node.to_string();
    let s = seeds::derive_seed(seed, &["pve", &model.label, &node]);
    info.hypercube.sample(fraction.unwrap_or(info.fraction), t, s)
}

/// One envelope per model. Costs no power-flow solves: the only solves
/// charged are those already spent training each model.
pub fn build_envelopes(
    models: &[GpModel],
    config: &PveConfig,
    seed: u64,
    fraction: Option<f64>,
) -> Result<Vec<Envelope>> {
    use rayon::prelude::*;
    models
        .par_iter()
        .map(|m| {
            let eval = evaluation_samples(m, config.t, seed, fraction)?;
            let (beta_upper, beta_lower) = estimate_beta(m, &eval, config.kappa)?;
            Ok(Envelope {
                node: m.target_node,
                topology_label: m.label.clone(),
                beta_lower,
                beta_upper,
                config: *config,
                adjusted_confidence: config.confidence(),
                evaluation_count: config.t,
                train_solves: m.solve_count,
            })
        })
        .collect()
}
