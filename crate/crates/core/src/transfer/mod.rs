//! Transfer to unseen topologies: hyperparameter hot start (HTL) and the
//! multi-task kernel over frozen source models, plus the on-disk source
//! registry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{fit, lml_at, FitOptions, GpModel, TrainingSet};
use crate::kernels::{FrozenSource, KernelKind, KernelSpec};
use crate::netcase::{neighborhoods, GridCase, Topology};

/// Domain in which source hyperparameters are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Arithmetic mean of log values (geometric mean of raw values).
    #[default]
    Log,
    /// Arithmetic mean of raw values.
    Raw,
}

/// Starting value of the multi-task source weight(s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// `ω = 1`.
    Unit,
    /// Best training log marginal likelihood over `log ω ∈ {0, -1, …, -12}`
    /// with the target part at the HTL average.
    #[default]
    LmlGrid,
}

/// Candidate starting values of `log ω` scanned by [`WeightInit::LmlGrid`].
pub const WEIGHT_GRID: [f64; 13] = [
    0.0, -1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0, -8.0, -9.0, -10.0, -11.0, -12.0,
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub fit: FitOptions,
    pub averaging: Averaging,
    /// One weight per source instead of a shared one (multi-task only).
    pub per_source_weights: bool,
    /// Pin the source weight(s) to this log value and keep them out of the
    /// optimization. `-inf` switches the sources off.
    pub fixed_log_weight: Option<f64>,
    #[serde(default)]
    pub weight_init: WeightInit,
}

/// Trained source models for one case and one target node.
#[derive(Debug, Clone)]
pub struct SourceRegistry {
    pub case_fingerprint: u64,
    pub target_node: u32,
    entries: Vec<GpModel>,
}

impl SourceRegistry {
    pub fn new(entries: Vec<GpModel>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::Registry("no source models".into()));
        };
        let (fp, node) = (first.case_fingerprint, first.target_node);
        for m in &entries {
            if m.case_fingerprint != fp {
                return Err(Error::Registry(format!(
                    "source {} was trained on a different case",
                    m.label
                )));
            }
            if m.target_node != node {
                return Err(Error::Registry(format!(
                    "source {} predicts bus {}, registry is for bus {node}",
                    m.label, m.target_node
                )));
            }
            if m.spec.kind != KernelKind::Vdk {
                return Err(Error::Registry(format!("source {} is not a VDK model", m.label)));
            }
        }
        let mut labels: Vec<&str> = entries.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Registry("duplicate source topology".into()));
        }
        Ok(SourceRegistry {
            case_fingerprint: fp,
            target_node: node,
            entries,
        })
    }

    pub fn entries(&self) -> &[GpModel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|m| m.label.clone()).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.iter().any(|m| m.label == label)
    }

    /// Loads every `*.json` model in `dir`, in file-name order.
    pub fn load(dir: &Path) -> Result<Self> {
        let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in rd {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.extension().is_some_and(|x| x == "json") {
                paths.push(p);
            }
        }
        paths.sort();
        let models = paths
            .iter()
            .map(|p| GpModel::load(p))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Registry(e.to_string()))?;
        SourceRegistry::new(models)
    }

    /// Writes one `<label>.json` per model into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.entries {
            let name = format!("node{}_{}.json", m.target_node, file_stem(&m.label));
            m.save(&dir.join(name))?;
        }
        Ok(())
    }
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Coordinate-wise average of the source hyperparameter vectors.
pub fn htl_init(registry: &SourceRegistry, averaging: Averaging) -> Result<Vec<f64>> {
    let entries = registry.entries();
    let Some(first) = entries.first() else {
        return Err(Error::Registry("no source models".into()));
    };
    let len = first.theta_log.len();
    if entries.iter().any(|m| m.theta_log.len() != len) {
        return Err(Error::Registry("sources have different hyperparameter counts".into()));
    }
    let m = entries.len() as f64;
    Ok((0..len)
        .map(|i| match averaging {
            Averaging::Log => entries.iter().map(|e| e.theta_log[i]).sum::<f64>() / m,
            Averaging::Raw => (entries.iter().map(|e| e.theta_log[i].exp()).sum::<f64>() / m).ln(),
        })
        .collect())
}

fn check_target(case: &GridCase, topo: &Topology, data: &TrainingSet, reg: &SourceRegistry) -> Result<()> {
    if reg.is_empty() {
        return Err(Error::Registry("transfer needs at least one source".into()));
    }
    if reg.contains(&topo.label) {
        return Err(Error::Registry(format!(
            "target topology {} is already a source",
            topo.label
        )));
    }
    if reg.case_fingerprint != case.fingerprint() {
        return Err(Error::Registry("sources were trained on a different case".into()));
    }
    if reg.target_node != data.target_node {
        return Err(Error::Registry(format!(
            "sources predict bus {}, data is for bus {}",
            reg.target_node, data.target_node
        )));
    }
    Ok(())
}

/// VDK on the target topology, trained from the averaged source optimum.
pub fn train_htl(
    case: &GridCase,
    data: &TrainingSet,
    target_topo: &Topology,
    registry: &SourceRegistry,
    opts: &TransferOptions,
) -> Result<GpModel> {
    check_target(case, target_topo, data, registry)?;
    let theta0 = htl_init(registry, opts.averaging)?;
    let spec = KernelSpec::vdk(neighborhoods(case, target_topo));
    let mut model = fit(data, &spec, &theta0, &opts.fit)?;
    model.case_fingerprint = case.fingerprint();
    Ok(model)
}

/// Builds the multi-task kernel spec for `target_topo` from the registry.
pub fn mt_spec(
    case: &GridCase,
    target_topo: &Topology,
    registry: &SourceRegistry,
    per_source_weights: bool,
) -> Result<KernelSpec> {
    let sources = registry
        .entries()
        .iter()
        .map(|m| FrozenSource {
            label: m.label.clone(),
            neighborhoods: m.spec.neighborhoods.clone(),
            theta_log: m.theta_log[..m.spec.param_count()].to_vec(),
            standardizer: m.spec.standardizer.clone(),
        })
        .collect();
    KernelSpec::mt_vdk(neighborhoods(case, target_topo), sources, per_source_weights)
}

/// Target VDK plus weighted frozen source VDKs. The target part starts from
/// the HTL average; the weight start follows `opts.weight_init` unless it is
/// pinned by `opts.fixed_log_weight`.
pub fn train_mt(
    case: &GridCase,
    data: &TrainingSet,
    target_topo: &Topology,
    registry: &SourceRegistry,
    opts: &TransferOptions,
) -> Result<GpModel> {
    check_target(case, target_topo, data, registry)?;
    let spec = mt_spec(case, target_topo, registry, opts.per_source_weights)?;
    let avg = htl_init(registry, opts.averaging)?;
    let (kernel_part, noise) = avg.split_at(avg.len() - 1);
    let with_weight = |w: f64| {
        let mut th = kernel_part.to_vec();
        th.extend(std::iter::repeat_n(w, spec.weight_count()));
        th.extend_from_slice(noise);
        th
    };
    let w0 = match (opts.fixed_log_weight, opts.weight_init) {
        (Some(w), _) => w,
        (None, WeightInit::Unit) => 0.0,
        (None, WeightInit::LmlGrid) => {
            let cands: Vec<Vec<f64>> = WEIGHT_GRID.iter().map(|&w| with_weight(w)).collect();
            let scores = lml_at(data, &spec, &cands, &opts.fit)?;
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = i;
                }
            }
            WEIGHT_GRID[best]
        }
    };
    let theta0 = with_weight(w0);

    let mut fit_opts = opts.fit.clone();
    if opts.fixed_log_weight.is_some() {
        let base = 2 * spec.groups();
        fit_opts.frozen.extend(base..base + spec.weight_count());
    }
    let mut model = fit(data, &spec, &theta0, &fit_opts)?;
    model.case_fingerprint = case.fingerprint();
    Ok(model)
}
