use std::sync::OnceLock;

use gridkernel::acpf::sample_injections;
use gridkernel::bench::{
    area_under_density, mae_differences, read_rows_csv, run_plan, solve_budget_report, win_rate,
    write_csv, BenchOutput, ExperimentPlan, Method, ResultRow, SourceSet,
};
use gridkernel::netcase::case30;
use proptest::prelude::*;

fn small_plan() -> ExperimentPlan {
    let mut p = ExperimentPlan::new(
        1,
        vec![4, 6],
        vec![Method::FullGp, Method::Vdk, Method::Htl, Method::MtVdk],
        SourceSet::named("5").unwrap(),
    );
    p.n_train = 20;
    p.iters = 5;
    p.n_test = 30;
    p.source_samples = 40;
    p.source_iters = 5;
    p.topologies = Some(4);
    p.mcs_samples = 1000;
    p
}

fn output() -> &'static BenchOutput {
    static O: OnceLock<BenchOutput> = OnceLock::new();
    O.get_or_init(|| run_plan(&case30(), &small_plan(), None).unwrap())
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &ResultRow::HEADER, &mut buf).unwrap();
    buf
}

#[test]
fn reruns_are_byte_identical() {
    let again = run_plan(&case30(), &small_plan(), None).unwrap();
    assert_eq!(csv_bytes(&output().rows), csv_bytes(&again.rows));
    assert!(output().rows.iter().all(|r| r.wall_s == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, csv_bytes(&output().rows)).unwrap();
    let back: Vec<ResultRow> = read_rows_csv(&path).unwrap();
    assert_eq!(back, output().rows);
}

#[test]
fn every_instance_is_scored_once_per_method() {
    let out = output();
    assert_eq!(out.runs.len(), 4);
    assert_eq!(out.rows.len(), 4 * 2 * 4);
    for run in &out.runs {
        assert!(run.topology.starts_with("N-1:"));
        assert_ne!(run.topology, "N-1:5");
        for m in ["full_gp", "vdk", "htl", "mt_vdk"] {
            for node in [4, 6] {
                let n = out
                    .rows
                    .iter()
                    .filter(|r| r.topology == run.topology && r.method == m && r.node == node)
                    .count();
                assert_eq!(n, 1);
            }
        }
    }
    assert!(out.rows.iter().all(|r| r.mae_pu.is_finite() && r.mae_pu >= 0.0 && r.n_train == 20));
}

#[test]
fn training_and_test_draws_are_disjoint() {
    let c = case30();
    for run in &output().runs {
        assert_ne!(run.train_seed, run.test_seed);
        let train = sample_injections(&c, 0.1, 20, run.train_seed).unwrap().samples;
        let test = sample_injections(&c, 0.1, 30, run.test_seed).unwrap().samples;
        assert!(train.iter().all(|s| !test.contains(s)));
    }
    let seeds: std::collections::BTreeSet<u64> = output().runs.iter().map(|r| r.train_seed).collect();
    assert_eq!(seeds.len(), output().runs.len());
}

#[test]
fn solve_accounts_reconcile() {
    let out = output();
    let per_run: u64 = out.runs.iter().map(|r| r.train_solves).sum();
    assert_eq!(per_run, out.train_solves);
    assert_eq!(out.train_solves, 4 * 20);
    assert_eq!(out.test_solves, 4 * 30);
    // base plus one single outage, 40 samples each, shared across nodes
    assert_eq!(out.source_solves, 80);
    assert!(out.rows.iter().all(|r| r.solves == 20));

    let budget = solve_budget_report(&out.ledgers);
    for b in &budget {
        let want = if b.method == "htl" || b.method == "mt_vdk" { 160 } else { 80 };
        assert_eq!(b.solves, want, "{}", b.method);
        assert_eq!(b.mcs_solves, 4000);
        assert_eq!(b.ratio, 4000.0 / want as f64);
        assert_eq!(b.class, "N-1");
    }
}

#[test]
fn supplied_registries_are_checked() {
    let c = case30();
    let out = output();
    let reused = run_plan(&c, &small_plan(), Some(&out.registries)).unwrap();
    assert_eq!(csv_bytes(&reused.rows), csv_bytes(&out.rows));
    let mut other = small_plan();
    other.sources = SourceSet::named("A").unwrap();
    assert!(run_plan(&c, &other, Some(&out.registries)).is_err());
}

fn row(method: &str, topo: usize, mae: f64) -> ResultRow {
    ResultRow {
        node: 4,
        topology: format!("N-1:{topo}"),
        method: method.into(),
        n_train: 60,
        mae_pu: mae,
        lml: 0.0,
        wall_s: 0.0,
        solves: 60,
    }
}

#[test]
fn differences_and_win_rate_by_hand() {
    let rows = vec![
        row("a", 1, 1.0),
        row("b", 1, 2.0),
        row("a", 2, 3.0),
        row("b", 2, 1.0),
        row("a", 3, 1.0),
        row("b", 3, 1.5),
        row("a", 4, 1.0),
    ];
    let d = mae_differences(&rows, "a", "b");
    assert_eq!(d.iter().map(|r| r.diff).collect::<Vec<_>>(), vec![-1.0, 2.0, -0.5]);
    assert!((win_rate(&d) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(win_rate(&[]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn area_is_an_empirical_cdf(
        maes in proptest::collection::vec((0usize..3, 0.0f64..2e-3), 1..60),
        mut cutoffs in proptest::collection::vec(0.0f64..2.5e-3, 1..8),
    ) {
        cutoffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let names = ["full_gp", "vdk", "mt_vdk"];
        let rows: Vec<ResultRow> = maes.iter().enumerate().map(|(i, &(m, v))| row(names[m], i, v)).collect();
        let area = area_under_density(&rows, &cutoffs);
        for name in names {
            let mine: Vec<_> = area.iter().filter(|a| a.method == name).collect();
            let vals: Vec<f64> = rows.iter().filter(|r| r.method == name).map(|r| r.mae_pu).collect();
            if vals.is_empty() {
                prop_assert!(mine.is_empty());
                continue;
            }
            prop_assert_eq!(mine.len(), cutoffs.len());
            for (a, &c) in mine.iter().zip(&cutoffs) {
                let want = vals.iter().filter(|&&v| v < c).count() as f64 / vals.len() as f64;
                prop_assert_eq!(a.fraction, want);
                prop_assert!((0.0..=1.0).contains(&a.fraction));
            }
            prop_assert!(mine.windows(2).all(|w| w[0].fraction <= w[1].fraction));
        }
        let top = area_under_density(&rows, &[1.0]);
        prop_assert!(top.iter().all(|a| a.fraction == 1.0));
    }
}
