#![allow(dead_code)]

use opf_core::netmodel::{Branch, Bus, BusKind, Case, CostPoly, Generator};

pub fn bus(id: u32, kind: BusKind, p_load: f64, q_load: f64) -> Bus {
    Bus { id, kind, p_load, q_load, v_min: 0.9, v_max: 1.1, shunt_g: 0.0, shunt_b: 0.0 }
}

pub fn line(from_bus: u32, to_bus: u32, r: f64, x: f64, b_sh: f64) -> Branch {
    Branch { from_bus, to_bus, r, x, b_sh, tap: 1.0, shift: 0.0, s_max: 0.0 }
}

pub fn generator(bus: u32, p_max: f64, q_lim: f64) -> Generator {
    Generator { bus, p_min: 0.0, p_max, q_min: -q_lim, q_max: q_lim }
}

/// Slack at bus 1 feeding a load at bus 2 through one line.
pub fn two_bus(r: f64, x: f64, b_sh: f64, p_load: f64, q_load: f64) -> Case {
    Case {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Ref, 0.0, 0.0), bus(2, BusKind::Pq, p_load, q_load)],
        gens: vec![generator(1, 1000.0, 1000.0)],
        branches: vec![line(1, 2, r, x, b_sh)],
        costs: vec![CostPoly { c2: 0.0, c1: 1.0, c0: 0.0 }],
    }
}

/// Slack at 1, generator at 2, load at 3; meshed.
pub fn three_bus() -> Case {
    Case {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Ref, 0.0, 0.0), bus(2, BusKind::Pv, 20.0, 5.0), bus(3, BusKind::Pq, 90.0, 30.0)],
        gens: vec![generator(1, 200.0, 200.0), generator(2, 200.0, 200.0)],
        branches: vec![line(1, 2, 0.02, 0.2, 0.02), line(2, 3, 0.03, 0.25, 0.02), line(1, 3, 0.01, 0.15, 0.01)],
        costs: vec![CostPoly { c2: 0.1, c1: 20.0, c0: 0.0 }, CostPoly { c2: 0.2, c1: 10.0, c0: 0.0 }],
    }
}

pub fn ieee(name: &str) -> Case {
    let path = format!("{}/data/{}.m", env!("CARGO_MANIFEST_DIR"), name);
    let text = std::fs::read_to_string(path).unwrap();
    opf_core::netmodel::parse_mfile(&text).unwrap()
}

/// Loads scaled down, voltage band narrowed and reactive lower limits relaxed
/// toward zero, all by the given percentages.
pub fn tightened(name: &str, load_pct: f64, v_pct: f64, q_pct: f64) -> Case {
    let mut case = ieee(name);
    for b in &mut case.buses {
        b.p_load *= 1.0 - load_pct / 100.0;
        b.q_load *= 1.0 - load_pct / 100.0;
        b.v_max *= 1.0 - v_pct / 100.0;
        b.v_min *= 1.0 + v_pct / 100.0;
    }
    for g in &mut case.gens {
        g.q_min *= 1.0 - q_pct / 100.0;
    }
    case
}

/// Acyclic three-bus network with heavy line charging: load bus 1 between
/// generators at 2 (reference) and 3. `q2` and `q3` are the reactive lower limits.
pub fn acyclic_three_bus(q2: f64, q3: f64) -> Case {
    let mut buses =
        vec![bus(1, BusKind::Pq, 30.0, 10.0), bus(2, BusKind::Ref, 30.0, 10.0), bus(3, BusKind::Pv, 30.0, 10.0)];
    for b in &mut buses {
        b.v_min = 0.81;
        b.v_max = 1.21;
    }
    Case {
        base_mva: 100.0,
        buses,
        gens: vec![
            Generator { bus: 2, p_min: 0.0, p_max: 220.0, q_min: q2, q_max: 110.0 },
            Generator { bus: 3, p_min: 0.0, p_max: 220.0, q_min: q3, q_max: 110.0 },
        ],
        branches: vec![line(1, 2, 0.40, 0.44, 0.4617), line(1, 3, 0.40, 0.44, 0.4774)],
        costs: vec![CostPoly { c2: 0.5240, c1: 19.3591, c0: 0.0 }, CostPoly { c2: 0.5480, c1: 16.6615, c0: 0.0 }],
    }
}
