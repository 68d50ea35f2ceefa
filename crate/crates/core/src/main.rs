use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gridkernel::acpf::{
    enumerate_feasible, generate_dataset, read_dataset_csv, read_samples_csv, sample_for_topology,
    sample_injections, solve_nr, write_dataset_csv, write_samples_csv, InjectionVector, PfOptions,
    SolveCounter,
};
use gridkernel::bench::{
    area_under_density, mae_differences, parse_ids, read_rows_csv, run_plan, solve_budget_report,
    train_sources, win_rate, write_csv, write_json, AreaRow, BudgetRow, DiffRow, ExperimentPlan,
    Method, ResultRow, SolveLedger, SourceSet,
};
use gridkernel::gpr::{cold_start, fit, mean_abs_diff, FitOptions, GpModel, SamplingInfo};
use gridkernel::kernels::KernelSpec;
use gridkernel::netcase::{self, build_ybus, neighborhoods, GridCase, Topology};
use gridkernel::pve::{build_envelopes, Envelope, PveConfig};
use gridkernel::seeds;
use gridkernel::transfer::{train_htl, train_mt, SourceRegistry, TransferOptions, WeightInit};
use gridkernel::{Error, Result};

#[derive(Parser)]
#[command(name = "gridkernel", version, about = "Topology-aware Gaussian-process power-flow learning")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect a case file.
    #[command(subcommand)]
    Case(CaseCmd),
    /// Power flow.
    #[command(subcommand)]
    Pf(PfCmd),
    /// Draw load-hypercube injection samples.
    #[command(subcommand)]
    Sample(SampleCmd),
    /// Solve sampled injections into voltage data.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train a GP voltage model.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Score a trained model against solved voltages.
    Eval(EvalArgs),
    /// Probabilistic voltage envelopes.
    #[command(subcommand)]
    Pve(PveCmd),
    /// Contingency benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Summaries of benchmark output.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum CaseCmd {
    /// Bus count, branch count and slack id.
    Info { case: String },
    /// Admittance matrix as `i,j,g,b` triplets.
    Ybus {
        case: String,
        #[arg(long, default_value = "")]
        outage: String,
    },
    /// Feasible contingency topologies of order `k`.
    Topologies {
        case: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum PfCmd {
    Solve {
        case: String,
        #[arg(long, default_value = "")]
        outage: String,
        /// CSV `bus,pd_mw,qd_mvar` overriding base loads.
        #[arg(long)]
        loads: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SampleCmd {
    Gen {
        case: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        frac: f64,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    Gen {
        case: String,
        #[arg(long, default_value = "")]
        outage: String,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        nodes: String,
    },
}

#[derive(Args)]
struct TrainArgs {
    case: String,
    #[arg(long, default_value = "")]
    outage: String,
    #[arg(long)]
    node: u32,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0.1)]
    frac: f64,
    /// Standardize kernel inputs on the training set.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Directory of source model JSON files.
    #[arg(long)]
    sources: PathBuf,
    /// One weight per source (multi-task only).
    #[arg(long)]
    per_source_weights: bool,
    /// Start the source weight at 1 instead of the likelihood grid.
    #[arg(long)]
    unit_weight: bool,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Vertex-degree kernel GP.
    Vdk(TrainArgs),
    /// Single squared-exponential kernel over all injections.
    Full(TrainArgs),
    /// VDK hot-started from averaged source hyperparameters.
    Htl(TransferArgs),
    /// Multi-task VDK over frozen source kernels.
    Mt(TransferArgs),
    /// VDK source models for a named source set, written into `--out` as a
    /// directory.
    Sources {
        case: String,
        #[arg(long, default_value = "A")]
        set: String,
        #[arg(long)]
        node: u32,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        frac: f64,
        #[arg(long)]
        standardize: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalReport {
    Mae,
    Pred,
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalReport::Mae)]
    report: EvalReport,
}

#[derive(Subcommand)]
enum PveCmd {
    Build {
        /// Directory of trained model JSON files.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
        #[arg(long, default_value_t = 3.75)]
        kappa: f64,
        #[arg(long = "T")]
        t: Option<usize>,
        /// Hypercube spread of the evaluation draws (default: the model's).
        #[arg(long)]
        frac: Option<f64>,
    },
}

#[derive(Args)]
struct BenchArgs {
    case: String,
    #[arg(long, default_value = "4")]
    nodes: String,
    #[arg(long, default_value = "vdk,htl,mt")]
    methods: String,
    /// Source set: A, B, C, N2, base or a branch id list.
    #[arg(long, default_value = "A")]
    sources: String,
    /// Load source registries from `<dir>/node<n>/` instead of training them.
    #[arg(long)]
    sources_dir: Option<PathBuf>,
    /// Write the trained source registries to `<dir>/node<n>/`.
    #[arg(long)]
    save_sources: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    #[arg(long, default_value_t = 0.1)]
    frac: f64,
    /// Random subset size of target topologies (default 10 for N-1, 30 for N-2).
    #[arg(long)]
    topologies: Option<usize>,
    /// Run every feasible target topology.
    #[arg(long, conflicts_with = "topologies")]
    full: bool,
    #[arg(long, default_value_t = 512)]
    source_samples: usize,
    #[arg(long, default_value_t = 200)]
    source_iters: usize,
    /// Monte-Carlo evaluations per topology for the budget table.
    #[arg(long, default_value_t = 1000)]
    mcs: usize,
    /// Solve ledger output (CSV).
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Per-topology MT minus HTL MAE differences (CSV).
    #[arg(long)]
    diff: Option<PathBuf>,
    #[arg(long)]
    wall_time: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    per_source_weights: bool,
    #[arg(long)]
    unit_weight: bool,
}

#[derive(Subcommand)]
enum BenchCmd {
    N1(BenchArgs),
    N2(BenchArgs),
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Fraction of instances below each MAE cutoff, per method.
    Area {
        results: PathBuf,
        /// Cutoffs in units of 1e-4 pu.
        #[arg(long, default_value = "2,4,6,8,10")]
        cutoffs: String,
    },
    /// Power-flow solves per method against Monte-Carlo sampling.
    Budget { ledger: PathBuf },
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_err(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn emit<T: Serialize>(rows: &[T], header: &[&str], cli: &Cli) -> Result<()> {
    emit_to(rows, header, cli.format, &cli.out)
}

fn emit_to<T: Serialize>(rows: &[T], header: &[&str], format: Format, out: &Option<PathBuf>) -> Result<()> {
    let w = open_out(out)?;
    match format {
        Format::Csv => write_csv(rows, header, w),
        Format::Json => {
            let mut w = w;
            write_json(rows, &mut w)?;
            writeln!(w).map_err(|e| Error::Argument(e.to_string()))
        }
    }
}

fn write_text(text: &str, out: &Option<PathBuf>) -> Result<()> {
    let mut w = open_out(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::Argument(e.to_string()))
}

/// A file path, a name under `GRIDKERNEL_CASE_DIR`, or `case30` for the
/// bundled IEEE 30-bus case.
fn load_case(arg: &str) -> Result<GridCase> {
    let path = Path::new(arg);
    if path.exists() {
        return GridCase::from_file(path);
    }
    if let Ok(dir) = std::env::var("GRIDKERNEL_CASE_DIR") {
        for name in [arg.to_string(), format!("{arg}.m"), format!("{arg}.json")] {
            let p = Path::new(&dir).join(name);
            if p.exists() {
                return GridCase::from_file(p);
            }
        }
    }
    if matches!(arg, "case30" | "case30_ieee") {
        return Ok(netcase::case30());
    }
    Err(Error::Argument(format!("case {arg:?} not found")))
}

fn topology(case: &GridCase, outage: &str) -> Result<Topology> {
    Topology::with_outages(case, &parse_ids(outage)?)
}

fn node_ids(s: &str) -> Result<Vec<u32>> {
    parse_ids(s)?
        .into_iter()
        .map(|v| u32::try_from(v).map_err(|_| Error::Argument(format!("bad bus id {v}"))))
        .collect()
}

#[derive(Serialize)]
struct CaseInfo {
    buses: usize,
    branches: usize,
    slack: u32,
    generators: usize,
    base_mva: f64,
}

#[derive(Serialize)]
struct TopologyRow {
    label: String,
    outages: String,
    in_service: usize,
}

#[derive(Serialize)]
struct YbusRow {
    i: u32,
    j: u32,
    g: f64,
    b: f64,
}

#[derive(Serialize)]
struct PfRow {
    bus: u32,
    vm_pu: f64,
    va_deg: f64,
}

#[derive(Deserialize)]
struct LoadRow {
    bus: u32,
    pd_mw: f64,
    qd_mvar: f64,
}

#[derive(Serialize)]
struct MaeReport {
    model: String,
    node: u32,
    topology: String,
    n: usize,
    mae_pu: f64,
}

#[derive(Serialize)]
struct PredRow {
    sample_idx: usize,
    mean: f64,
    std: f64,
    truth: f64,
}

#[derive(Serialize)]
struct PveRow {
    node: u32,
    topology: String,
    beta_lower: f64,
    beta_upper: f64,
    kappa: f64,
    #[serde(rename = "T")]
    t: usize,
    epsilon: f64,
    delta: f64,
    confidence: f64,
    train_solves: u64,
}

impl From<&Envelope> for PveRow {
    fn from(e: &Envelope) -> Self {
        PveRow {
            node: e.node,
            topology: e.topology_label.clone(),
            beta_lower: e.beta_lower,
            beta_upper: e.beta_upper,
            kappa: e.config.kappa,
            t: e.config.t,
            epsilon: e.config.epsilon,
            delta: e.config.delta,
            confidence: e.adjusted_confidence,
            train_solves: e.train_solves,
        }
    }
}

fn case_cmd(cli: &Cli, cmd: &CaseCmd) -> Result<()> {
    match cmd {
        CaseCmd::Info { case } => {
            let c = load_case(case)?;
            let info = CaseInfo {
                buses: c.bus_count(),
                branches: c.branch_count(),
                slack: c.buses[c.slack_index()].id,
                generators: c.gens.len(),
                base_mva: c.base_mva,
            };
            emit(&[info], &["buses", "branches", "slack", "generators", "base_mva"], cli)
        }
        CaseCmd::Ybus { case, outage } => {
            let c = load_case(case)?;
            let y = build_ybus(&c, &topology(&c, outage)?)?;
            let mut rows = Vec::new();
            for i in 0..y.dim() {
                for j in 0..y.dim() {
                    let v = y.get(i, j);
                    if v.re != 0.0 || v.im != 0.0 {
                        rows.push(YbusRow {
                            i: c.buses[i].id,
                            j: c.buses[j].id,
                            g: v.re,
                            b: v.im,
                        });
                    }
                }
            }
            emit(&rows, &["i", "j", "g", "b"], cli)
        }
        CaseCmd::Topologies { case, k } => {
            let c = load_case(case)?;
            let rows: Vec<TopologyRow> = enumerate_feasible(&c, *k, &PfOptions::default())?
                .into_iter()
                .map(|t| TopologyRow {
                    outages: t
                        .out_of_service()
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(" "),
                    in_service: t.in_service_count(),
                    label: t.label,
                })
                .collect();
            emit(&rows, &["label", "outages", "in_service"], cli)
        }
    }
}

fn pf_cmd(cli: &Cli, cmd: &PfCmd) -> Result<()> {
    let PfCmd::Solve { case, outage, loads } = cmd;
    let mut c = load_case(case)?;
    if let Some(path) = loads {
        let rows: Vec<LoadRow> = read_rows_csv(path)?;
        for r in rows {
            let i = c.bus_index(r.bus)?;
            c.buses[i].p_load = r.pd_mw;
            c.buses[i].q_load = r.qd_mvar;
        }
    }
    let topo = topology(&c, outage)?;
    let sol = solve_nr(&c, &topo, &InjectionVector::base_case(&c), &PfOptions::default())?;
    if !sol.converged {
        return Err(Error::Divergence(sol.reason.unwrap_or_else(|| "no reason given".into())));
    }
    log::info!(
        "{}: converged in {} iterations, mismatch {:e}",
        topo.label,
        sol.iterations,
        sol.max_mismatch
    );
    let rows: Vec<PfRow> = c
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| PfRow {
            bus: b.id,
            vm_pu: sol.v_mag[i],
            va_deg: sol.v_ang[i].to_degrees(),
        })
        .collect();
    emit(&rows, &["bus", "vm_pu", "va_deg"], cli)
}

fn sample_cmd(cli: &Cli, cmd: &SampleCmd) -> Result<()> {
    let SampleCmd::Gen { case, n, frac } = cmd;
    let c = load_case(case)?;
    let set = sample_injections(&c, *frac, *n, cli.seed)?;
    let ids: Vec<u32> = c.buses.iter().map(|b| b.id).collect();
    match cli.format {
        Format::Csv => write_samples_csv(&ids, &set.samples, open_out(&cli.out)?),
        Format::Json => write_json(&set.samples, open_out(&cli.out)?),
    }
}

fn check_bus_order(case: &GridCase, ids: &[u32]) -> Result<()> {
    if case.buses.iter().map(|b| b.id).ne(ids.iter().copied()) {
        return Err(Error::Argument("sample columns do not match the case bus order".into()));
    }
    Ok(())
}

fn dataset_cmd(cli: &Cli, cmd: &DatasetCmd) -> Result<()> {
    let DatasetCmd::Gen {
        case,
        outage,
        samples,
        nodes,
    } = cmd;
    let c = load_case(case)?;
    let topo = topology(&c, outage)?;
    let (ids, xs) = read_samples_csv(samples)?;
    check_bus_order(&c, &ids)?;
    let ds = generate_dataset(&c, &topo, &xs, &node_ids(nodes)?, &PfOptions::default(), &SolveCounter::new())?;
    if ds.rejected > 0 {
        log::warn!("{}: {} samples did not converge", topo.label, ds.rejected);
    }
    match cli.format {
        Format::Csv => write_dataset_csv(&ds, open_out(&cli.out)?),
        Format::Json => write_json(&[ds], open_out(&cli.out)?),
    }
}

fn fit_options(iters: usize, standardize: bool) -> FitOptions {
    FitOptions {
        standardize,
        ..FitOptions::iters(iters)
    }
}

fn train_cmd(cli: &Cli, cmd: &TrainCmd) -> Result<()> {
    if let TrainCmd::Sources {
        case,
        set,
        node,
        n,
        iters,
        frac,
        standardize,
    } = cmd
    {
        let c = load_case(case)?;
        let mut plan = ExperimentPlan::new(1, vec![*node], vec![Method::Htl], SourceSet::named(set)?);
        plan.seed = cli.seed;
        plan.source_samples = *n;
        plan.source_iters = *iters;
        plan.fraction = *frac;
        plan.standardize = *standardize;
        let dir = cli
            .out
            .clone()
            .ok_or_else(|| Error::Argument("train sources needs --out <dir>".into()))?;
        let regs = train_sources(&c, &plan, &SolveCounter::new())?;
        for reg in regs.values() {
            reg.save(&dir)?;
        }
        return Ok(());
    }

    let (args, transfer) = match cmd {
        TrainCmd::Vdk(a) | TrainCmd::Full(a) => (a, None),
        TrainCmd::Htl(t) | TrainCmd::Mt(t) => (&t.train, Some(t)),
        TrainCmd::Sources { .. } => unreachable!(),
    };
    let c = load_case(&args.case)?;
    let topo = topology(&c, &args.outage)?;
    let train_seed = seeds::derive_seed(cli.seed, &["train"]);
    let set = sample_for_topology(&c, args.frac, args.n, train_seed, &topo.label)?;
    let ds = generate_dataset(&c, &topo, &set.samples, &[args.node], &PfOptions::default(), &SolveCounter::new())?;
    let ts = ds.training_set(args.node)?;
    let opts = fit_options(args.iters, args.standardize);
    let mut model = match cmd {
        TrainCmd::Vdk(_) => {
            let spec = KernelSpec::vdk(neighborhoods(&c, &topo));
            fit(&ts, &spec, &cold_start(&spec), &opts)?
        }
        TrainCmd::Full(_) => {
            let spec = KernelSpec::full_se(2 * c.bus_count());
            fit(&ts, &spec, &cold_start(&spec), &opts)?
        }
        TrainCmd::Htl(_) | TrainCmd::Mt(_) => {
            let t = transfer.expect("transfer args");
            let reg = SourceRegistry::load(&t.sources)?;
            let topts = TransferOptions {
                fit: opts,
                per_source_weights: t.per_source_weights,
                weight_init: if t.unit_weight {
                    WeightInit::Unit
                } else {
                    WeightInit::LmlGrid
                },
                ..TransferOptions::default()
            };
            if matches!(cmd, TrainCmd::Htl(_)) {
                train_htl(&c, &ts, &topo, &reg, &topts)?
            } else {
                train_mt(&c, &ts, &topo, &reg, &topts)?
            }
        }
        TrainCmd::Sources { .. } => unreachable!(),
    };
    model.case_fingerprint = c.fingerprint();
    model.solve_count = ds.solves;
    model.sampling = Some(SamplingInfo {
        hypercube: gridkernel::acpf::LoadHypercube::from_case(&c),
        fraction: args.frac,
    });
    write_text(&model.to_json()?, &cli.out)
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let model = GpModel::load(&a.model)?;
    let (_, xs) = read_samples_csv(&a.samples)?;
    let truth: BTreeMap<usize, f64> = read_dataset_csv(&a.truth)?
        .into_iter()
        .filter(|r| r.node == model.target_node)
        .map(|r| (r.sample_idx, r.v_pu))
        .collect();
    if truth.is_empty() {
        return Err(Error::Argument(format!(
            "{} has no voltages for bus {}",
            a.truth.display(),
            model.target_node
        )));
    }
    let mut idx = Vec::new();
    let mut feats = Vec::new();
    let mut ys = Vec::new();
    for (&i, &v) in &truth {
        let x = xs.get(i).ok_or_else(|| {
            Error::Argument(format!("truth row references sample {i}, which is not in the sample file"))
        })?;
        idx.push(i);
        feats.push(x.features());
        ys.push(v);
    }
    let (mu, var) = model.predict_batch(&feats)?;
    match a.report {
        EvalReport::Mae => {
            let row = MaeReport {
                model: a.model.display().to_string(),
                node: model.target_node,
                topology: model.label.clone(),
                n: ys.len(),
                mae_pu: mean_abs_diff(&mu, &ys),
            };
            emit(&[row], &["model", "node", "topology", "n", "mae_pu"], cli)
        }
        EvalReport::Pred => {
            let rows: Vec<PredRow> = (0..ys.len())
                .map(|k| PredRow {
                    sample_idx: idx[k],
                    mean: mu[k],
                    std: var[k].sqrt(),
                    truth: ys[k],
                })
                .collect();
            emit(&rows, &["sample_idx", "mean", "std", "truth"], cli)
        }
    }
}

fn load_models(dir: &Path) -> Result<Vec<GpModel>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Argument(format!("no model files in {}", dir.display())));
    }
    paths.iter().map(|p| GpModel::load(p)).collect()
}

fn pve_cmd(cli: &Cli, cmd: &PveCmd) -> Result<()> {
    let PveCmd::Build {
        models,
        eps,
        delta,
        kappa,
        t,
        frac,
    } = cmd;
    let config = PveConfig::new(*eps, *delta, *kappa, *t)?;
    let models = load_models(models)?;
    let env = build_envelopes(&models, &config, cli.seed, *frac)?;
    let rows: Vec<PveRow> = env.iter().map(PveRow::from).collect();
    emit(
        &rows,
        &[
            "node",
            "topology",
            "beta_lower",
            "beta_upper",
            "kappa",
            "T",
            "epsilon",
            "delta",
            "confidence",
            "train_solves",
        ],
        cli,
    )
}

fn bench_cmd(cli: &Cli, cmd: &BenchCmd) -> Result<()> {
    let (k, a) = match cmd {
        BenchCmd::N1(a) => (1, a),
        BenchCmd::N2(a) => (2, a),
    };
    let c = load_case(&a.case)?;
    let methods = a
        .methods
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    let mut plan = ExperimentPlan::new(k, node_ids(&a.nodes)?, methods, SourceSet::named(&a.sources)?);
    plan.seed = cli.seed;
    plan.n_train = a.n;
    plan.iters = a.iters;
    plan.n_test = a.n_test;
    plan.fraction = a.frac;
    plan.topologies = if a.full {
        None
    } else {
        Some(a.topologies.unwrap_or(if k == 1 { 10 } else { 30 }))
    };
    plan.source_samples = a.source_samples;
    plan.source_iters = a.source_iters;
    plan.mcs_samples = a.mcs;
    plan.wall_time = a.wall_time;
    plan.standardize = a.standardize;
    plan.per_source_weights = a.per_source_weights;
    if a.unit_weight {
        plan.weight_init = WeightInit::Unit;
    }

    let loaded = match &a.sources_dir {
        Some(dir) => {
            let mut regs = BTreeMap::new();
            for &node in &plan.nodes {
                regs.insert(node, SourceRegistry::load(&dir.join(format!("node{node}")))?);
            }
            Some(regs)
        }
        None => None,
    };
    let out = run_plan(&c, &plan, loaded.as_ref())?;
    if let Some(dir) = &a.save_sources {
        for (node, reg) in &out.registries {
            reg.save(&dir.join(format!("node{node}")))?;
        }
    }
    emit(&out.rows, &ResultRow::HEADER, cli)?;
    if let Some(p) = &a.ledger {
        emit_to(&out.ledgers, &SolveLedger::HEADER, Format::Csv, &Some(p.clone()))?;
    }
    if let Some(p) = &a.diff {
        let d = mae_differences(&out.rows, "mt_vdk", "htl");
        log::info!("mt_vdk beats htl on {:.1}% of instances", 100.0 * win_rate(&d));
        emit_to(&d, &DiffRow::HEADER, Format::Csv, &Some(p.clone()))?;
    }
    Ok(())
}

fn report_cmd(cli: &Cli, cmd: &ReportCmd) -> Result<()> {
    match cmd {
        ReportCmd::Area { results, cutoffs } => {
            let rows: Vec<ResultRow> = read_rows_csv(results)?;
            if rows.is_empty() {
                return Err(Error::Argument(format!("{} has no result rows", results.display())));
            }
            let cuts = cutoffs
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map(|v| v * 1e-4)
                        .map_err(|_| Error::Argument(format!("bad cutoff {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let table: Vec<AreaRow> = area_under_density(&rows, &cuts);
            emit(&table, &AreaRow::HEADER, cli)
        }
        ReportCmd::Budget { ledger } => {
            let rows: Vec<SolveLedger> = read_rows_csv(ledger)?;
            let table: Vec<BudgetRow> = solve_budget_report(&rows);
            emit(&table, &BudgetRow::HEADER, cli)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Case(c) => case_cmd(cli, c),
        Cmd::Pf(c) => pf_cmd(cli, c),
        Cmd::Sample(c) => sample_cmd(cli, c),
        Cmd::Dataset(c) => dataset_cmd(cli, c),
        Cmd::Train(c) => train_cmd(cli, c),
        Cmd::Eval(a) => eval_cmd(cli, a),
        Cmd::Pve(c) => pve_cmd(cli, c),
        Cmd::Bench(c) => bench_cmd(cli, c),
        Cmd::Report(c) => report_cmd(cli, c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
