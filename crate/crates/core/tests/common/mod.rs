#![allow(dead_code)]

use gridkernel::acpf::{generate_dataset, sample_injections, PfOptions, SolveCounter};
use gridkernel::gpr::TrainingSet;
use gridkernel::netcase::{Branch, Bus, BusType, Generator, GridCase, Topology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn bus(id: u32, kind: BusType, p: f64, q: f64) -> Bus {
    Bus {
        id,
        kind,
        p_load: p,
        q_load: q,
        v_setpoint: 1.0,
        base_kv: 100.0,
        g_shunt: 0.0,
        b_shunt: 0.0,
        vm_init: 1.0,
        va_init: 0.0,
    }
}

pub fn line(id: usize, from: u32, to: u32, r: f64, x: f64) -> Branch {
    Branch {
        id,
        from,
        to,
        r,
        x,
        b_charging: 0.0,
        tap: 1.0,
        in_service: true,
    }
}

fn slack_gen() -> Generator {
    Generator {
        bus: 1,
        p_set: 0.0,
        v_set: 1.0,
        q_min: -100.0,
        q_max: 100.0,
    }
}

/// Slack bus 1 feeding PQ bus 2 over one lossless line, x = 0.1.
pub fn two_bus(p_mw: f64, q_mvar: f64) -> GridCase {
    GridCase::new(
        100.0,
        vec![bus(1, BusType::Slack, 0.0, 0.0), bus(2, BusType::Pq, p_mw, q_mvar)],
        vec![line(1, 1, 2, 0.0, 0.1)],
        vec![slack_gen()],
    )
    .unwrap()
}

/// Three buses in a ring.
pub fn triangle() -> GridCase {
    GridCase::new(
        100.0,
        vec![
            bus(1, BusType::Slack, 0.0, 0.0),
            bus(2, BusType::Pq, 30.0, 10.0),
            bus(3, BusType::Pq, 20.0, 5.0),
        ],
        vec![
            line(1, 1, 2, 0.01, 0.1),
            line(2, 2, 3, 0.01, 0.1),
            line(3, 1, 3, 0.01, 0.1),
        ],
        vec![slack_gen()],
    )
    .unwrap()
}

/// Five-bus meshed case with a tap changer, line charging and a shunt.
pub fn five_bus() -> GridCase {
    let mut buses = vec![
        bus(1, BusType::Slack, 0.0, 0.0),
        bus(2, BusType::Pq, 20.0, 8.0),
        bus(3, BusType::Pq, 35.0, 12.0),
        bus(4, BusType::Pq, 15.0, 5.0),
        bus(5, BusType::Pq, 25.0, 9.0),
    ];
    buses[3].b_shunt = 10.0;
    let mut branches = vec![
        line(1, 1, 2, 0.02, 0.06),
        line(2, 1, 3, 0.05, 0.19),
        line(3, 2, 3, 0.06, 0.17),
        line(4, 2, 4, 0.06, 0.18),
        line(5, 3, 4, 0.01, 0.04),
        line(6, 4, 5, 0.05, 0.12),
        line(7, 3, 5, 0.04, 0.10),
    ];
    branches[0].b_charging = 0.05;
    branches[4].tap = 0.97;
    GridCase::new(100.0, buses, branches, vec![slack_gen()]).unwrap()
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn solved_set(case: &GridCase, topo: &Topology, node: u32, n: usize, seed: u64) -> TrainingSet {
    let set = sample_injections(case, 0.1, n, seed).unwrap();
    generate_dataset(case, topo, &set.samples, &[node], &PfOptions::default(), &SolveCounter::new())
        .unwrap()
        .training_set(node)
        .unwrap()
}
