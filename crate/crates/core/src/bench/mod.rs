//! Contingency benchmark harness: trains every requested method on each
//! target topology, scores it on held-out power-flow solutions, and keeps
//! exact power-flow solve accounts.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acpf::{
    enumerate_feasible, generate_dataset, sample_for_topology, LoadHypercube, PfDataset, PfOptions,
    SolveCounter,
};
use crate::error::{Error, Result};
use crate::gpr::{cold_start, fit, mae, FitOptions, GpModel, SamplingInfo, TrainingSet};
use crate::kernels::KernelSpec;
use crate::netcase::{neighborhoods, GridCase, Topology};
use crate::seeds;
use crate::transfer::{train_htl, train_mt, SourceRegistry, TransferOptions, WeightInit};

pub use report::{
    area_under_density, mae_differences, read_rows_csv, solve_budget_report, win_rate, write_csv,
    write_json, AreaRow, BudgetRow, DiffRow, ResultRow, SolveLedger,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullGp,
    Vdk,
    Htl,
    MtVdk,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FullGp => "full_gp",
            Method::Vdk => "vdk",
            Method::Htl => "htl",
            Method::MtVdk => "mt_vdk",
        }
    }

    pub fn uses_sources(self) -> bool {
        matches!(self, Method::Htl | Method::MtVdk)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_gp" | "full" => Ok(Method::FullGp),
            "vdk" => Ok(Method::Vdk),
            "htl" => Ok(Method::Htl),
            "mt_vdk" | "mt" => Ok(Method::MtVdk),
            _ => Err(Error::Argument(format!("unknown method {s:?}"))),
        }
    }
}

/// Source topologies, each given by its outaged branch ids. The base
/// topology is always included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSet {
    pub name: String,
    pub outages: Vec<Vec<usize>>,
}

impl SourceSet {
    fn singles(name: &str, ids: &[usize]) -> Self {
        let mut outages = vec![Vec::new()];
        outages.extend(ids.iter().map(|&b| vec![b]));
        SourceSet {
            name: name.to_string(),
            outages,
        }
    }

    pub fn base_only() -> Self {
        SourceSet::singles("base", &[])
    }

    /// Named sets: `A`, `B`, `C`, `N2` (the set used for double outages),
    /// `base`, or a comma-separated list of single-outage branch ids.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "A" | "a" => Ok(SourceSet::singles("A", &[1, 5, 10])),
            "B" | "b" => Ok(SourceSet::singles("B", &[1, 5, 8, 10])),
            "C" | "c" => Ok(SourceSet::singles("C", &[12, 15, 18, 22, 35])),
            "N2" | "n2" => Ok(SourceSet::singles("N2", &[1, 10])),
            "base" => Ok(SourceSet::base_only()),
            list => {
                let ids = parse_ids(list)?;
                Ok(SourceSet::singles(list, &ids))
            }
        }
    }

    pub fn topologies(&self, case: &GridCase) -> Result<Vec<Topology>> {
        self.outages
            .iter()
            .map(|o| Topology::with_outages(case, o))
            .collect()
    }
}

/// Comma-separated branch or bus ids; empty string gives an empty list.
pub fn parse_ids(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Argument(format!("bad id {t:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub sources: SourceSet,
    /// Contingency order of the target topologies.
    pub k: usize,
    pub nodes: Vec<u32>,
    pub n_train: usize,
    pub iters: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Random subset of this many target topologies; `None` runs them all.
    pub topologies: Option<usize>,
    pub fraction: f64,
    pub source_samples: usize,
    pub source_iters: usize,
    /// MCS-equivalent evaluation count per topology for the budget table.
    pub mcs_samples: usize,
    /// Record fit wall time. Off by default so reruns are byte-identical.
    pub wall_time: bool,
    /// Keep trained target models in the output.
    pub keep_models: bool,
    /// Standardize kernel inputs on each training set.
    pub standardize: bool,
    /// Starting rule for the multi-task source weight.
    pub weight_init: WeightInit,
    /// One multi-task weight per source.
    pub per_source_weights: bool,
}

impl ExperimentPlan {
    /// Default protocol: 60 samples, 50 iterations, ±10% loads, sources on
    /// 512 samples and 200 iterations.
    pub fn new(k: usize, nodes: Vec<u32>, methods: Vec<Method>, sources: SourceSet) -> Self {
        ExperimentPlan {
            methods,
            sources,
            k,
            nodes,
            n_train: 60,
            iters: 50,
            n_test: 500,
            seed: 7,
            topologies: None,
            fraction: 0.1,
            source_samples: 512,
            source_iters: 200,
            mcs_samples: 1000,
            wall_time: false,
            keep_models: false,
            standardize: false,
            weight_init: WeightInit::default(),
            per_source_weights: false,
        }
    }

    fn validate(&self, case: &GridCase) -> Result<()> {
        if !(1..=2).contains(&self.k) {
            return Err(Error::Argument(format!("contingency order {} not supported", self.k)));
        }
        for o in &self.sources.outages {
            if o.iter().any(|&b| b == 0 || b > case.branch_count()) {
                return Err(Error::Argument(format!(
                    "source set {} names a branch outside the case",
                    self.sources.name
                )));
            }
            if self.k == 2 && o.len() >= 2 {
                return Err(Error::Argument(
                    "double-outage runs take base or single-outage sources only".into(),
                ));
            }
        }
        for &n in &self.nodes {
            case.bus_index(n)?;
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::Argument("need n_train >= 2 and n_test >= 1".into()));
        }
        Ok(())
    }

    fn fit_options(&self, iters: usize) -> FitOptions {
        FitOptions {
            standardize: self.standardize,
            ..FitOptions::iters(iters)
        }
    }

    pub fn train_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, &["train"])
    }

    pub fn test_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, &["test"])
    }

    pub fn source_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, &["source"])
    }
}

/// Per-run bookkeeping not carried by the result rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub topology: String,
    pub train_seed: u64,
    pub test_seed: u64,
    pub train_solves: u64,
    pub test_solves: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    pub ledgers: Vec<SolveLedger>,
    pub runs: Vec<RunRecord>,
    pub models: Vec<GpModel>,
    pub registries: BTreeMap<u32, SourceRegistry>,
    pub train_solves: u64,
    pub test_solves: u64,
    pub source_solves: u64,
}

fn sampling_info(case: &GridCase, fraction: f64) -> SamplingInfo {
    SamplingInfo {
        hypercube: LoadHypercube::from_case(case),
        fraction,
    }
}

fn solve_batch(
    case: &GridCase,
    topo: &Topology,
    n: usize,
    fraction: f64,
    seed: u64,
    nodes: &[u32],
    counter: &SolveCounter,
) -> Result<PfDataset> {
    let set = sample_for_topology(case, fraction, n, seed, &topo.label)?;
    generate_dataset(case, topo, &set.samples, nodes, &PfOptions::default(), counter)
}

/// Trains one VDK source model per (node, source topology).
pub fn train_sources(
    case: &GridCase,
    plan: &ExperimentPlan,
    counter: &SolveCounter,
) -> Result<BTreeMap<u32, SourceRegistry>> {
    let topos = plan.sources.topologies(case)?;
    let fp = case.fingerprint();
    let per_topo: Vec<Vec<GpModel>> = topos
        .par_iter()
        .map(|topo| -> Result<Vec<GpModel>> {
            let data = solve_batch(
                case,
                topo,
                plan.source_samples,
                plan.fraction,
                plan.source_seed(),
                &plan.nodes,
                counter,
            )?;
            let spec = KernelSpec::vdk(neighborhoods(case, topo));
            plan.nodes
                .iter()
                .map(|&node| {
                    let ts = data.training_set(node)?;
                    let mut m = fit(&ts, &spec, &cold_start(&spec), &plan.fit_options(plan.source_iters))?;
                    m.case_fingerprint = fp;
                    m.solve_count = data.solves;
                    m.sampling = Some(sampling_info(case, plan.fraction));
                    Ok(m)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (i, &node) in plan.nodes.iter().enumerate() {
        let models = per_topo.iter().map(|ms| ms[i].clone()).collect();
        out.insert(node, SourceRegistry::new(models)?);
    }
    Ok(out)
}

/// Feasible targets of order `plan.k` outside the source set, optionally
/// subsampled.
pub fn target_topologies(case: &GridCase, plan: &ExperimentPlan) -> Result<Vec<Topology>> {
    let source_labels: Vec<String> = plan
        .sources
        .topologies(case)?
        .into_iter()
        .map(|t| t.label)
        .collect();
    let all: Vec<Topology> = enumerate_feasible(case, plan.k, &PfOptions::default())?
        .into_iter()
        .filter(|t| !source_labels.contains(&t.label))
        .collect();
    match plan.topologies {
        Some(m) if m < all.len() => {
            let mut rng = seeds::rng(seeds::derive_seed(plan.seed, &["topologies"]));
            let mut idx = sample_indices(&mut rng, all.len(), m).into_vec();
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| all[i].clone()).collect())
        }
        _ => Ok(all),
    }
}

struct TopoResult {
    rows: Vec<ResultRow>,
    models: Vec<GpModel>,
    run: RunRecord,
}

fn train_one(
    case: &GridCase,
    method: Method,
    topo: &Topology,
    ts: &TrainingSet,
    plan: &ExperimentPlan,
    registry: Option<&SourceRegistry>,
) -> Result<GpModel> {
    let fit_opts = plan.fit_options(plan.iters);
    let topts = TransferOptions {
        fit: fit_opts.clone(),
        weight_init: plan.weight_init,
        per_source_weights: plan.per_source_weights,
        ..TransferOptions::default()
    };
    let need = || {
        registry.ok_or_else(|| Error::Registry(format!("no sources for bus {}", ts.target_node)))
    };
    let mut m = match method {
        Method::FullGp => {
            let spec = KernelSpec::full_se(2 * case.bus_count());
            fit(ts, &spec, &cold_start(&spec), &fit_opts)?
        }
        Method::Vdk => {
            let spec = KernelSpec::vdk(neighborhoods(case, topo));
            fit(ts, &spec, &cold_start(&spec), &fit_opts)?
        }
        Method::Htl => train_htl(case, ts, topo, need()?, &topts)?,
        Method::MtVdk => train_mt(case, ts, topo, need()?, &topts)?,
    };
    m.case_fingerprint = case.fingerprint();
    m.solve_count = ts.len() as u64;
    m.sampling = Some(sampling_info(case, plan.fraction));
    Ok(m)
}

fn run_topology(
    case: &GridCase,
    topo: &Topology,
    plan: &ExperimentPlan,
    registries: &BTreeMap<u32, SourceRegistry>,
    train_counter: &SolveCounter,
    test_counter: &SolveCounter,
) -> Result<TopoResult> {
    let (train_seed, test_seed) = (plan.train_seed(), plan.test_seed());
    let before = (train_counter.get(), test_counter.get());
    let train = solve_batch(case, topo, plan.n_train, plan.fraction, train_seed, &plan.nodes, train_counter)?;
    let test = solve_batch(case, topo, plan.n_test, plan.fraction, test_seed, &plan.nodes, test_counter)?;
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &node in &plan.nodes {
        let ts = train.training_set(node)?;
        let tt = test.training_set(node)?;
        for &method in &plan.methods {
            let start = Instant::now();
            let model = train_one(case, method, topo, &ts, plan, registries.get(&node))?;
            let wall = if plan.wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            rows.push(ResultRow {
                node,
                topology: topo.label.clone(),
                method: method.as_str().to_string(),
                n_train: ts.len(),
                mae_pu: mae(&model, &tt)?,
                lml: model.lml,
                wall_s: wall,
                solves: model.solve_count,
            });
            if plan.keep_models {
                models.push(model);
            }
        }
    }
    Ok(TopoResult {
        rows,
        models,
        run: RunRecord {
            topology: topo.label.clone(),
            train_seed: seeds::topology_seed(train_seed, &topo.label),
            test_seed: seeds::topology_seed(test_seed, &topo.label),
            train_solves: train_counter.get() - before.0,
            test_solves: test_counter.get() - before.1,
        },
    })
}

/// Runs a plan. Source registries are trained unless `registries` supplies
/// them for every node.
pub fn run_plan(
    case: &GridCase,
    plan: &ExperimentPlan,
    registries: Option<&BTreeMap<u32, SourceRegistry>>,
) -> Result<BenchOutput> {
    plan.validate(case)?;
    if plan.nodes.is_empty() || plan.methods.is_empty() {
        return Ok(BenchOutput::default());
    }
    let targets = target_topologies(case, plan)?;
    let source_counter = SolveCounter::new();
    let needs_sources = plan.methods.iter().any(|m| m.uses_sources());
    let registries = match registries {
        _ if !needs_sources => BTreeMap::new(),
        Some(r) if plan.nodes.iter().all(|n| r.contains_key(n)) => {
            let want: Vec<String> = plan
                .sources
                .topologies(case)?
                .into_iter()
                .map(|t| t.label)
                .collect();
            for (node, reg) in r {
                if want.iter().any(|l| !reg.contains(l)) {
                    return Err(Error::Registry(format!(
                        "registry for bus {node} does not match source set {}",
                        plan.sources.name
                    )));
                }
            }
            r.clone()
        }
        _ => train_sources(case, plan, &source_counter)?,
    };
    let source_solves = if needs_sources {
        registries
            .values()
            .next()
            .map_or(0, |r| r.entries().iter().map(|m| m.solve_count).sum())
    } else {
        0
    };

    let train_counter = SolveCounter::new();
    let test_counter = SolveCounter::new();
    let results: Vec<Option<TopoResult>> = targets
        .par_iter()
        .map(|topo| {
            match run_topology(case, topo, plan, &registries, &train_counter, &test_counter) {
                Ok(r) => Ok(Some(r)),
                Err(e @ Error::Dataset { .. }) => {
                    log::warn!("{}: skipped, {e}", topo.label);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let results: Vec<TopoResult> = results.into_iter().flatten().collect();
    let ran = results.len();

    let mut out = BenchOutput {
        registries,
        train_solves: train_counter.get(),
        test_solves: test_counter.get(),
        source_solves,
        ..BenchOutput::default()
    };
    for r in results {
        out.rows.extend(r.rows);
        out.models.extend(r.models);
        out.runs.push(r.run);
    }
    let class = format!("N-{}", plan.k);
    out.ledgers = plan
        .methods
        .iter()
        .map(|&m| SolveLedger {
            method: m.as_str().to_string(),
            class: class.clone(),
            topologies: ran,
            train_solves: out.train_solves,
            source_solves: if m.uses_sources() { source_solves } else { 0 },
            mcs_samples: plan.mcs_samples,
        })
        .collect();
    Ok(out)
}
