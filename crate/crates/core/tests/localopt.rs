mod common;

use approx::assert_relative_eq;
use num_complex::Complex64;
use opf_core::localopt::{kkt_residual, multistart, solve_local, OpfNlp, OpfPoint, OpfStatus, FEAS_TOL};
use opf_core::netmodel::{build_admittance, evaluate_point, BusKind, Case, CostPoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(nlp: &OpfNlp, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = nlp.n;
    let x = (0..nlp.n_vars())
        .map(|j| {
            if j < n {
                rng.random_range(-0.5..0.5)
            } else if j < 2 * n {
                rng.random_range(0.9..1.1)
            } else {
                rng.random_range(-1.0..2.0)
            }
        })
        .collect();
    let lam = (0..nlp.n_eq()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu = (0..nlp.n_ineq()).map(|_| rng.random_range(0.0..1.0)).collect();
    (x, lam, mu)
}

fn with_ratings(mut case: Case, s_max: f64) -> Case {
    for b in &mut case.branches {
        b.s_max = s_max;
    }
    case
}

#[test]
fn derivatives_match_central_differences() {
    let cases =
        [with_ratings(common::three_bus(), 5.0), with_ratings(common::ieee("ieee14"), 30.0), common::ieee("ieee24")];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in &cases {
        let nlp = OpfNlp::new(case).unwrap();
        assert!(!nlp.flow_limits().is_empty());
        for _ in 0..20 {
            let (x, lam, mu) = random_point(&nlp, &mut rng);
            let check = nlp.check_derivatives(&x, &lam, &mu, 1e-6);
            assert!(check.gradient < 1e-5, "gradient error {}", check.gradient);
            assert!(check.hessian < 1e-5, "hessian error {}", check.hessian);
        }
    }
}

#[test]
fn zero_load_dispatches_nothing() {
    let mut case = common::two_bus(0.01, 0.1, 0.0, 0.0, 0.0);
    case.costs[0] = CostPoly { c2: 0.01, c1: 20.0, c0: 7.0 };
    let p = solve_local(&case, None).unwrap();
    assert_eq!(p.status, OpfStatus::LocalOptimum);
    assert!(p.pg[0].abs() < 1e-6, "pg = {}", p.pg[0]);
    assert_relative_eq!(p.objective, 7.0, epsilon = 1e-4);
}

#[test]
fn single_bus_serves_its_own_load() {
    let case = Case {
        base_mva: 100.0,
        buses: vec![common::bus(1, BusKind::Ref, 50.0, 10.0)],
        gens: vec![common::generator(1, 200.0, 100.0)],
        branches: vec![],
        costs: vec![CostPoly { c2: 0.1, c1: 20.0, c0: 3.0 }],
    };
    let p = solve_local(&case, None).unwrap();
    assert_eq!(p.status, OpfStatus::LocalOptimum);
    assert_relative_eq!(p.pg[0], 0.5, epsilon = 1e-9);
    assert_relative_eq!(p.qg[0], 0.1, epsilon = 1e-9);
    assert_relative_eq!(p.objective, 0.1 * 2500.0 + 20.0 * 50.0 + 3.0, epsilon = 1e-6);
}

#[test]
fn standard_cases_reach_known_optima() {
    for (name, expected) in [("ieee14", 8081.53), ("ieee57", 41737.79), ("ieee118", 129660.69)] {
        let p = solve_local(&common::ieee(name), None).unwrap();
        assert_eq!(p.status, OpfStatus::LocalOptimum, "{name}");
        assert!((p.objective - expected).abs() < 0.01, "{name}: {}", p.objective);
    }
}

#[test]
fn tightened_ieee14_matches_published_optimum() {
    let case = common::tightened("ieee14", 60.0, 0.06, 95.0);
    let p = solve_local(&case, None).unwrap();
    assert!(p.is_local_optimum());
    assert!((p.objective - 2529.87).abs() < 0.005, "{}", p.objective);
}

#[test]
fn solution_satisfies_kkt_and_limits() {
    let case = common::ieee("ieee14");
    let p = solve_local(&case, None).unwrap();
    assert!(p.binding.is_feasible_within(FEAS_TOL));
    let m = p.multipliers.clone().unwrap();
    let kkt = kkt_residual(&case, &p, &m).unwrap();
    assert!(kkt.max() < 1e-6, "{kkt:?}");

    let mut moved = p.clone();
    let v = moved.voltages[4];
    moved.voltages[4] = Complex64::from_polar(v.norm() + 1e-3, v.arg());
    let kkt = kkt_residual(&case, &moved, &m).unwrap();
    assert!(kkt.stationarity > 1e-6, "{kkt:?}");
}

#[test]
fn reported_objective_is_the_network_cost() {
    let case = common::three_bus();
    let p = solve_local(&case, None).unwrap();
    let model = build_admittance(&case).unwrap();
    let eval = evaluate_point(&case, &model, &p.voltages);
    let nlp = OpfNlp::new(&case).unwrap();
    let internal = nlp.cost(&nlp.pack(&p.voltages, &p.pg, &p.qg));
    assert_relative_eq!(eval.objective, p.objective, max_relative = 1e-12);
    assert_relative_eq!(internal, p.objective, max_relative = 1e-8);
}

#[test]
fn wrong_sized_start_is_rejected() {
    let case = common::three_bus();
    let mut init = OpfPoint::flat(&case);
    init.voltages.push(Complex64::new(1.0, 0.0));
    assert!(solve_local(&case, Some(&init)).is_err());
}

#[test]
fn infeasible_load_fails() {
    let mut case = common::two_bus(0.01, 0.1, 0.0, 500.0, 0.0);
    case.gens[0].p_max = 100.0;
    let p = solve_local(&case, None).unwrap();
    assert_eq!(p.status, OpfStatus::Failed);
}

#[test]
fn mildly_loaded_case_has_one_optimum() {
    let case = common::three_bus();
    let set = multistart(&case, 20, 3).unwrap();
    assert_eq!(set.optima.len(), 1);
    assert_eq!(set.basin_counts.iter().sum::<usize>() + set.failures + set.stationary_only, 20);
    assert_eq!(set.spread_percent(), 0.0);
}

#[test]
fn multistart_is_deterministic() {
    let case = common::tightened("ieee14", 60.0, 0.06, 95.0);
    let a = multistart(&case, 8, 42).unwrap();
    let b = multistart(&case, 8, 42).unwrap();
    assert_eq!(a, b);
    for p in &a.optima {
        assert!(p.binding.is_feasible_within(FEAS_TOL));
    }
}
