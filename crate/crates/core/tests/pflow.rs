mod common;

use common::{three_bus, two_bus};
use num_complex::Complex64;
use opf_core::netmodel::{build_admittance, evaluate_point, Case};
use opf_core::pflow::{build_system, enumerate_solutions, newton_solve, BusRole, PfError, PowerFlowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pq_spec(case: &Case, vm: f64) -> PowerFlowSpec {
    let (pd, qd) = case.loads_pu();
    let mut roles = vec![BusRole::Slack { vm }];
    roles.extend((1..case.n_buses()).map(|k| BusRole::Pq { p: -pd[k], q: -qd[k] }));
    PowerFlowSpec { roles }
}

/// Closed-form solutions of a slack + PQ two-bus network.
fn two_bus_oracle(r: f64, x: f64, b_sh: f64, vm: f64, s: Complex64) -> Vec<Complex64> {
    let ys = Complex64::new(r, x).inv();
    let y22 = ys + Complex64::new(0.0, b_sh / 2.0);
    let c = -ys * vm;
    let sb = s.conj();
    // |conj(S) - Y22 r|^2 = |Y21 V1|^2 r with r = |V2|^2
    let qa = y22.norm_sqr();
    let qb = -(2.0 * (sb * y22.conj()).re + c.norm_sqr());
    let qc = s.norm_sqr();
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    let mut roots = vec![(-qb + disc.sqrt()) / (2.0 * qa), (-qb - disc.sqrt()) / (2.0 * qa)];
    roots.retain(|&r| r >= 0.0);
    roots.iter().map(|&rr| ((sb - y22 * rr) / c).conj()).collect()
}

#[test]
fn system_sizes() {
    let case = two_bus(0.01, 0.1, 0.0, 50.0, 10.0);
    let model = build_admittance(&case).unwrap();
    let sys = build_system(&case, &model, &pq_spec(&case, 1.0)).unwrap();
    assert_eq!((sys.eqs.len(), sys.n_vars()), (2, 2));

    let case = three_bus();
    let model = build_admittance(&case).unwrap();
    let spec = PowerFlowSpec::from_setpoints(&case, &[1.0, 1.02, 0.0], &[0.0, 0.6, 0.0]);
    let sys = build_system(&case, &model, &spec).unwrap();
    assert_eq!((sys.eqs.len(), sys.n_vars()), (4, 4));
    assert!(sys.eqs.iter().all(|e| e.degree() == 2));
}

#[test]
fn spec_mismatch_is_rejected() {
    let case = three_bus();
    let model = build_admittance(&case).unwrap();
    let spec = PowerFlowSpec { roles: vec![BusRole::Slack { vm: 1.0 }, BusRole::Pq { p: 0.0, q: 0.0 }] };
    assert!(matches!(build_system(&case, &model, &spec), Err(PfError::SpecMismatch(_))));
    let spec = PowerFlowSpec { roles: vec![BusRole::Pq { p: 0.0, q: 0.0 }; 3] };
    assert!(matches!(build_system(&case, &model, &spec), Err(PfError::SpecMismatch(_))));
}

#[test]
fn residuals_match_injections() {
    let case = three_bus();
    let model = build_admittance(&case).unwrap();
    let (p2, vm2) = (0.6, 1.02);
    let spec = PowerFlowSpec::from_setpoints(&case, &[1.01, vm2, 0.0], &[0.0, p2, 0.0]);
    let sys = build_system(&case, &model, &spec).unwrap();
    let (pd, qd) = case.loads_pu();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.2..1.2)).collect();
        let v = sys.voltages(&x);
        let ev = evaluate_point(&case, &model, &v);
        let f = sys.residual(&x);
        assert!((f[0] - (ev.p[1] - (p2 - pd[1]))).abs() < 1e-12);
        assert!((f[1] - (v[1].norm_sqr() - vm2 * vm2)).abs() < 1e-12);
        assert!((f[2] - (ev.p[2] + pd[2])).abs() < 1e-12);
        assert!((f[3] - (ev.q[2] + qd[2])).abs() < 1e-12);
    }
}

#[test]
fn newton_zero_load_two_bus() {
    let case = two_bus(0.0, 0.1, 0.0, 0.0, 0.0);
    let model = build_admittance(&case).unwrap();
    let sys = build_system(&case, &model, &pq_spec(&case, 1.0)).unwrap();
    let x = newton_solve(&sys, &[1.0, 0.0]).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-10 && x[1].abs() < 1e-10);
    let x = newton_solve(&sys, &[0.05, 0.02]).unwrap();
    assert!(x[0].abs() < 1e-9 && x[1].abs() < 1e-9);
}

#[test]
fn newton_fails_beyond_loadability() {
    // lossless line x = 0.5 carries at most V^2/(2x) = 1 p.u. at unity power factor
    let case = two_bus(0.0, 0.5, 0.0, 150.0, 0.0);
    assert!(two_bus_oracle(0.0, 0.5, 0.0, 1.0, Complex64::new(-1.5, 0.0)).is_empty());
    let model = build_admittance(&case).unwrap();
    let sys = build_system(&case, &model, &pq_spec(&case, 1.0)).unwrap();
    assert!(newton_solve(&sys, &[1.0, 0.0]).is_err());
    assert_eq!(newton_solve(&sys, &[f64::NAN, 0.0]), Err(PfError::BadInit));
}

#[test]
fn newton_solves_ieee14() {
    let case = common::ieee("ieee14");
    let model = build_admittance(&case).unwrap();
    let limits = case.bus_limits();
    let vm: Vec<f64> = (0..14).map(|k| if limits[k].has_gen { 1.03 } else { 1.0 }).collect();
    let pg: Vec<f64> = (0..14).map(|k| if limits[k].has_gen { 0.4 } else { 0.0 }).collect();
    let spec = PowerFlowSpec::from_setpoints(&case, &vm, &pg);
    let sys = build_system(&case, &model, &spec).unwrap();
    let flat: Vec<f64> = (0..sys.unknown_buses.len()).flat_map(|_| [1.0, 0.0]).collect();
    let x = newton_solve(&sys, &flat).unwrap();
    assert!(sys.residual(&x).iter().all(|r| r.abs() < 1e-10));
}

#[test]
fn zero_load_lossless_enumeration() {
    let case = two_bus(0.0, 0.1, 0.0, 0.0, 0.0);
    let model = build_admittance(&case).unwrap();
    let sys = build_system(&case, &model, &pq_spec(&case, 1.0)).unwrap();
    let set = enumerate_solutions(&sys, 11).unwrap();
    assert_eq!(set.paths, 4);
    assert!(set.certified);
    assert_eq!(set.len(), 2);
    let mut mags: Vec<f64> = set.voltages.iter().map(|v| v[1].norm()).collect();
    mags.sort_by(f64::total_cmp);
    assert!(mags[0] < 1e-8 && (mags[1] - 1.0).abs() < 1e-8);
}

#[test]
fn random_two_bus_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut empty = 0;
    for i in 0..100 {
        let (r, x, b) = (rng.random_range(0.0..0.05), rng.random_range(0.05..0.5), rng.random_range(0.0..0.1));
        let vm = rng.random_range(0.9..1.1);
        let (pd, qd) = (rng.random_range(-100.0..300.0), rng.random_range(-50.0..150.0));
        let case = two_bus(r, x, b, pd, qd);
        let model = build_admittance(&case).unwrap();
        let sys = build_system(&case, &model, &pq_spec(&case, vm)).unwrap();
        let set = enumerate_solutions(&sys, i).unwrap();
        let expected = two_bus_oracle(r, x, b, vm, Complex64::new(-pd / 100.0, -qd / 100.0));
        assert!(set.certified, "case {i}: {set:?}");
        assert_eq!(set.len(), expected.len(), "case {i}");
        empty += expected.is_empty() as usize;
        for e in &expected {
            assert!(set.voltages.iter().any(|v| (v[1] - e).norm() < 1e-8), "case {i}");
        }
    }
    assert!(empty > 0);
}

#[test]
fn three_bus_tracks_sixteen_paths_and_is_gamma_invariant() {
    let case = three_bus();
    let model = build_admittance(&case).unwrap();
    let spec = PowerFlowSpec::from_setpoints(&case, &[1.0, 1.02, 0.0], &[0.0, 0.6, 0.0]);
    let sys = build_system(&case, &model, &spec).unwrap();
    let sets: Vec<_> = (0..4).map(|seed| enumerate_solutions(&sys, seed).unwrap()).collect();
    for set in &sets {
        assert_eq!(set.paths, 16);
        assert!(set.certified);
        assert!(!set.is_empty());
        assert!(set.residuals.iter().all(|&r| r < 1e-10));
        assert_eq!(set.len(), sets[0].len());
        for v in &set.voltages {
            assert!(sets[0].voltages.iter().any(|w| v.iter().zip(w).all(|(a, b)| (a - b).norm() < 1e-6)));
            assert!((v[1].norm() - 1.02).abs() < 1e-9);
        }
    }
}

#[test]
fn enumeration_size_guard() {
    let case = common::ieee("ieee14");
    let model = build_admittance(&case).unwrap();
    let (pd, qd) = case.loads_pu();
    let mut roles = vec![BusRole::Slack { vm: 1.0 }];
    roles.extend((1..14).map(|k| BusRole::Pq { p: -pd[k], q: -qd[k] }));
    let sys = build_system(&case, &model, &PowerFlowSpec { roles }).unwrap();
    assert_eq!(enumerate_solutions(&sys, 0), Err(PfError::TooLarge(26)));
}
