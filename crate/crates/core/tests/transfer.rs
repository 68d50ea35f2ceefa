mod common;

use std::sync::OnceLock;

use gridkernel::gpr::{cold_start, fit, FitOptions, GpModel};
use gridkernel::kernels::KernelSpec;
use gridkernel::netcase::{case30, neighborhoods, Topology};
use gridkernel::transfer::{
    htl_init, train_htl, train_mt, Averaging, SourceRegistry, TransferOptions, WeightInit,
};
use gridkernel::Error;
use proptest::prelude::*;

use common::solved_set;

const NODE: u32 = 4;

fn sources() -> &'static Vec<GpModel> {
    static S: OnceLock<Vec<GpModel>> = OnceLock::new();
    S.get_or_init(|| {
        let c = case30();
        [vec![], vec![10], vec![15], vec![36]]
            .iter()
            .enumerate()
            .map(|(i, out)| {
                let topo = Topology::with_outages(&c, out).unwrap();
                let data = solved_set(&c, &topo, NODE, 30, 100 + i as u64);
                let spec = KernelSpec::vdk(neighborhoods(&c, &topo));
                let mut m = fit(&data, &spec, &cold_start(&spec), &FitOptions::iters(10)).unwrap();
                m.case_fingerprint = c.fingerprint();
                m
            })
            .collect()
    })
}

fn registry() -> SourceRegistry {
    SourceRegistry::new(sources().clone()).unwrap()
}

fn opts(iters: usize) -> TransferOptions {
    TransferOptions {
        fit: FitOptions::iters(iters),
        ..TransferOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn htl_average_ignores_source_order(perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
        let base = htl_init(&registry(), Averaging::Log).unwrap();
        let shuffled: Vec<GpModel> = perm.iter().map(|&i| sources()[i].clone()).collect();
        let got = htl_init(&SourceRegistry::new(shuffled).unwrap(), Averaging::Log).unwrap();
        for (a, b) in base.iter().zip(&got) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn htl_average_by_hand() {
    let reg = registry();
    let avg = htl_init(&reg, Averaging::Log).unwrap();
    assert_eq!(avg.len(), 61);
    for i in [0, 17, 60] {
        let want = sources().iter().map(|m| m.theta_log[i]).sum::<f64>() / 4.0;
        assert!((avg[i] - want).abs() < 1e-14);
    }
    let raw = htl_init(&reg, Averaging::Raw).unwrap();
    // arithmetic mean dominates the geometric one
    assert!(raw.iter().zip(&avg).all(|(r, l)| *r >= l - 1e-14));

    let one = SourceRegistry::new(vec![sources()[2].clone()]).unwrap();
    assert_eq!(htl_init(&one, Averaging::Log).unwrap(), sources()[2].theta_log);
}

#[test]
fn switched_off_weight_reduces_to_htl() {
    let c = case30();
    let topo = Topology::with_outages(&c, &[12]).unwrap();
    let data = solved_set(&c, &topo, NODE, 25, 7);
    let reg = registry();
    let htl = train_htl(&c, &data, &topo, &reg, &opts(8)).unwrap();
    let off = TransferOptions {
        fixed_log_weight: Some(f64::NEG_INFINITY),
        ..opts(8)
    };
    let mt = train_mt(&c, &data, &topo, &reg, &off).unwrap();
    assert_eq!(mt.theta_log[60], f64::NEG_INFINITY);
    for (i, (a, b)) in htl.theta_log[..60].iter().zip(&mt.theta_log[..60]).enumerate() {
        assert!((a - b).abs() < 1e-10, "param {i}");
    }
    assert!((htl.theta_log[60] - mt.theta_log[61]).abs() < 1e-10);
    let probe = solved_set(&c, &topo, NODE, 5, 8);
    let (hm, hv) = htl.predict_batch(&probe.features()).unwrap();
    let (mm, mv) = mt.predict_batch(&probe.features()).unwrap();
    for j in 0..5 {
        assert!((hm[j] - mm[j]).abs() < 1e-10);
        assert!((hv[j] - mv[j]).abs() < 1e-10);
    }
    let back = GpModel::from_json(&mt.to_json().unwrap()).unwrap();
    assert_eq!(back.theta_log[60], f64::NEG_INFINITY);
}

#[test]
fn mt_model_shape_and_frozen_sources() {
    let c = case30();
    let topo = Topology::with_outages(&c, &[12]).unwrap();
    let data = solved_set(&c, &topo, NODE, 25, 9);
    let reg = registry();
    let before: Vec<String> = reg.entries().iter().map(|m| m.to_json().unwrap()).collect();

    for (per, want) in [(false, 62), (true, 65)] {
        let o = TransferOptions {
            per_source_weights: per,
            weight_init: WeightInit::Unit,
            ..opts(5)
        };
        let mt = train_mt(&c, &data, &topo, &reg, &o).unwrap();
        assert_eq!(mt.theta_log.len(), want);
        assert!(mt.theta_log.iter().all(|v| v.is_finite()));
        for (src, m) in mt.spec.sources.iter().zip(reg.entries()) {
            assert_eq!(src.label, m.label);
            assert_eq!(
                serde_json::to_string(&src.theta_log).unwrap(),
                serde_json::to_string(&m.theta_log[..60]).unwrap()
            );
        }
    }
    let after: Vec<String> = reg.entries().iter().map(|m| m.to_json().unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn lml_grid_start_never_loses_to_unit_start_at_step_zero() {
    let c = case30();
    let topo = Topology::with_outages(&c, &[12]).unwrap();
    let data = solved_set(&c, &topo, NODE, 25, 10);
    let reg = registry();
    let unit = train_mt(&c, &data, &topo, &reg, &TransferOptions { weight_init: WeightInit::Unit, ..opts(0) }).unwrap();
    let grid = train_mt(&c, &data, &topo, &reg, &opts(0)).unwrap();
    assert!(grid.lml >= unit.lml);
}

#[test]
fn transfer_rejects_bad_targets() {
    let c = case30();
    let reg = registry();
    let base = Topology::base(&c);
    let data = solved_set(&c, &base, NODE, 10, 1);
    // target is one of the sources
    assert!(matches!(train_htl(&c, &data, &base, &reg, &opts(1)), Err(Error::Registry(_))));
    let topo = Topology::with_outages(&c, &[12]).unwrap();
    let other = solved_set(&c, &topo, 6, 10, 1);
    assert!(matches!(train_mt(&c, &other, &topo, &reg, &opts(1)), Err(Error::Registry(_))));
}

#[test]
fn registry_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry();
    reg.save(dir.path()).unwrap();
    let back = SourceRegistry::load(dir.path()).unwrap();
    let mut want = reg.labels();
    want.sort();
    let mut got = back.labels();
    got.sort();
    assert_eq!(got, want);
    for m in back.entries() {
        let orig = reg.entries().iter().find(|o| o.label == m.label).unwrap();
        assert_eq!(m.to_json().unwrap(), orig.to_json().unwrap());
    }

    std::fs::write(dir.path().join("node4_zz.json"), "{ not json").unwrap();
    assert!(matches!(SourceRegistry::load(dir.path()), Err(Error::Registry(_))));
    assert!(SourceRegistry::load(&dir.path().join("missing")).is_err());
}
