use gridkernel::acpf::{
    bus_powers, enumerate_feasible, solve_nr, InjectionVector, PfOptions, StartMode,
};
use gridkernel::netcase::{build_ybus, is_connected, GridCase, Topology};

fn case30() -> GridCase {
    GridCase::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case30_ieee.m")).unwrap()
}

// Independent reference solution (PYPOWER, tolerance 1e-12, reactive limits off).
const VM_BASE: [f64; 30] = [
    1.060000000000, 1.045000000000, 1.021177684135, 1.012300430170, 1.010000000000,
    1.010625749226, 1.002597083884, 1.010000000000, 1.051131711902, 1.045378953425,
    1.082000000000, 1.057338929804, 1.071000000000, 1.042507806007, 1.037915881008,
    1.044625843625, 1.040150253348, 1.028396289129, 1.025899932931, 1.029986729666,
    1.032982193896, 1.033513631585, 1.027428984143, 1.021845771547, 1.017618613712,
    0.999946402710, 1.023538510550, 1.007101046060, 1.003705784796, 0.992234798676,
];

const VA_BASE_DEG: [f64; 30] = [
    0.0, -5.378243015619, -7.528659584353, -9.279432399523, -14.148767109546,
    -11.055023317903, -12.852318770452, -11.797385380803, -14.097969021391, -15.688173167380,
    -14.097969021391, -14.932907713920, -14.932907713920, -15.824522006505, -15.916363335483,
    -15.515424120396, -15.849947862007, -16.530188850114, -16.703722306740, -16.507192504285,
    -16.130666842582, -16.116437390579, -16.306625944723, -16.482787148844, -16.054559129443,
    -16.473980987802, -15.530080043320, -11.677296739010, -16.759313030760, -17.641613100183,
];

const VM_N1_12: [f64; 30] = [
    1.060000000000, 1.045000000000, 1.020710083976, 1.011735448252, 1.010000000000,
    1.010522225843, 1.002536335819, 1.010000000000, 1.049312906959, 1.042574459795,
    1.082000000000, 1.057378054814, 1.071000000000, 1.042432424410, 1.037231043132,
    1.042863547450, 1.037815309641, 1.026880976454, 1.023928813001, 1.027781979094,
    1.030325679187, 1.030922083545, 1.026506885057, 1.020649624193, 1.018010292985,
    1.000345147603, 1.024844569164, 1.006881806087, 1.005039864716, 0.993584973793,
];

#[test]
fn case30_shape() {
    let case = case30();
    assert_eq!(case.bus_count(), 30);
    assert_eq!(case.branch_count(), 41);
    assert_eq!(case.buses[case.slack_index()].id, 1);
    let n1 = Topology::base(&case).apply_outage(&[12]).unwrap();
    assert_eq!(n1.label, "N-1:12");
    assert_eq!(n1.in_service_count(), 40);
    let n2 = Topology::base(&case).apply_outage(&[12, 15]).unwrap();
    assert_eq!(n2.label, "N-2:12,15");
    assert_eq!(n2.in_service_count(), 39);
}

#[test]
fn case30_base_matches_reference_solution() {
    let case = case30();
    let topo = Topology::base(&case);
    let inj = InjectionVector::base_case(&case);
    let sol = solve_nr(&case, &topo, &inj, &PfOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.iterations <= 10);
    assert!(sol.max_mismatch < 1e-8);
    assert_eq!(sol.v_ang[0], 0.0);
    for i in 0..30 {
        assert!((sol.v_mag[i] - VM_BASE[i]).abs() < 1e-8, "bus {}", i + 1);
        assert!((sol.v_ang[i].to_degrees() - VA_BASE_DEG[i]).abs() < 1e-6, "bus {}", i + 1);
    }
}

#[test]
fn case30_outage_matches_reference_solution() {
    let case = case30();
    let topo = Topology::with_outages(&case, &[12]).unwrap();
    let inj = InjectionVector::base_case(&case);
    let sol = solve_nr(&case, &topo, &inj, &PfOptions::default()).unwrap();
    assert!(sol.converged);
    for i in 0..30 {
        assert!((sol.v_mag[i] - VM_N1_12[i]).abs() < 1e-8, "bus {}", i + 1);
    }
}

#[test]
fn power_balance_closes() {
    let case = case30();
    let topo = Topology::base(&case);
    let inj = InjectionVector::base_case(&case);
    let sol = solve_nr(&case, &topo, &inj, &PfOptions::default()).unwrap();
    let (g, b) = build_ybus(&case, &topo).unwrap().split();
    let (p, _) = bus_powers(&g, &b, &sol.v_mag, &sol.v_ang);
    // Losses computed branch by branch from the solved voltages.
    let n = case.bus_count();
    let v: Vec<num_complex::Complex64> = (0..n)
        .map(|i| num_complex::Complex64::from_polar(sol.v_mag[i], sol.v_ang[i]))
        .collect();
    let mut losses = 0.0;
    for (br, (f, t)) in case.branches.iter().zip(case.branch_ends()) {
        let ys = num_complex::Complex64::new(br.r, br.x).inv();
        let i_series = (v[f] / br.tap - v[t]) * ys;
        losses += i_series.norm_sqr() * br.r;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        losses += bus.g_shunt / case.base_mva * sol.v_mag[i].powi(2);
    }
    let slack = case.slack_index();
    let others: f64 = (0..n).filter(|&i| i != slack).map(|i| inj.p[i]).sum();
    assert!((p[slack] + others - losses).abs() < 1e-6);
}

#[test]
fn flat_and_case_starts_agree() {
    let case = case30();
    let inj = InjectionVector::base_case(&case);
    let mut warm = case.clone();
    let base = solve_nr(&case, &Topology::base(&case), &inj, &PfOptions::default()).unwrap();
    for (bus, (vm, va)) in warm.buses.iter_mut().zip(base.v_mag.iter().zip(&base.v_ang)) {
        bus.vm_init = *vm * 0.99;
        bus.va_init = va.to_degrees() * 0.9;
    }
    let topos = enumerate_feasible(&case, 1, &PfOptions::default()).unwrap();
    let case_start = PfOptions {
        start: StartMode::Case,
        ..PfOptions::default()
    };
    for topo in topos {
        let wt = Topology {
            case_fingerprint: warm.fingerprint(),
            ..topo.clone()
        };
        let a = solve_nr(&case, &topo, &inj, &PfOptions::default()).unwrap();
        let b = solve_nr(&warm, &wt, &inj, &case_start).unwrap();
        assert!(a.converged && b.converged, "{}", topo.label);
        for i in 0..30 {
            assert!((a.v_mag[i] - b.v_mag[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn n1_feasible_count() {
    let case = case30();
    let topos = enumerate_feasible(&case, 1, &PfOptions::default()).unwrap();
    assert_eq!(topos.len(), 38);
    let feasible: Vec<usize> = topos.iter().map(|t| t.out_of_service()[0]).collect();
    let missing: Vec<usize> = (1..=41).filter(|id| !feasible.contains(id)).collect();
    assert_eq!(missing, vec![13, 16, 34]);
}

#[test]
fn radial_leaf_outage_disconnects() {
    let case = case30();
    let ends = case.branch_ends();
    let mut degree = vec![0; case.bus_count()];
    for &(f, t) in &ends {
        degree[f] += 1;
        degree[t] += 1;
    }
    let leaf_branch = ends
        .iter()
        .position(|&(f, t)| degree[f] == 1 || degree[t] == 1)
        .expect("case30 has a radial bus")
        + 1;
    let topo = Topology::with_outages(&case, &[leaf_branch]).unwrap();
    assert!(!is_connected(&case, &topo));
    assert!(is_connected(&case, &Topology::base(&case)));
}

#[test]
fn solve_time_budget() {
    let case = case30();
    let topo = Topology::base(&case);
    let inj = InjectionVector::base_case(&case);
    let start = std::time::Instant::now();
    for _ in 0..20 {
        solve_nr(&case, &topo, &inj, &PfOptions::default()).unwrap();
    }
    assert!(start.elapsed().as_secs_f64() / 20.0 < 0.1);
}
