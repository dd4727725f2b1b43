//! End-to-end acceptance checks. Prints one PASS/FAIL line per check.
//!
//! Run with `cargo test -p opf-core --test acceptance`. Pass substrings as
//! arguments to run a subset. Failures only change the exit status when
//! `ACCEPTANCE_STRICT` is set, so the rest of the workspace suite still runs.

mod common;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use opf_core::casegen::{generate_indexed, Family, GenerationParams};
use opf_core::fspace::{label_components, map_feasible_space, midpoint_check, parse_axes, GridSpec};
use opf_core::localopt::{multistart, LocalOptimaSet, OpfNlp};
use opf_core::netmodel::{build_admittance, Case};
use opf_core::pflow::{build_system, enumerate_solutions, BusRole, PowerFlowSpec};
use opf_core::pipeline::{nmwc_case, screen_batch, ScreenStatus, ScreeningOptions, ScreeningResult, ScreeningSummary};
use opf_core::sdprelax::{optimality_gap, relax, SdpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Check {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks = [
        Check { name: "two-bus oracle", limit: Some(Duration::from_secs(30)), run: two_bus_oracle },
        Check { name: "path count and gamma invariance", limit: Some(Duration::from_secs(120)), run: path_count },
        Check { name: "bound ordering", limit: Some(Duration::from_secs(600)), run: bound_ordering },
        Check { name: "gradient checks", limit: None, run: gradient_checks },
        Check { name: "published gap arithmetic", limit: None, run: gap_arithmetic },
        Check { name: "tightened IEEE cases", limit: Some(Duration::from_secs(3600)), run: tightened_ieee },
        Check { name: "screening rarity", limit: None, run: screening_rarity },
        Check { name: "disconnected feasible space", limit: None, run: disconnected_space },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for check in &checks {
        if !filters.is_empty() && !filters.iter().any(|f| check.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut out = (check.run)();
        let elapsed = start.elapsed();
        if let Some(limit) = check.limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over the {} s limit", limit.as_secs()));
            }
        }
        failed += !out.pass as usize;
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({:.1} s): {}", check.name, elapsed.as_secs_f64(), out.detail);
    }
    println!("acceptance: {} of {ran} checks passed", ran - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

/// Closed-form voltages at the load bus of a slack + PQ two-bus network.
fn closed_form(r: f64, x: f64, b_sh: f64, vm: f64, s: Complex64) -> Vec<Complex64> {
    let ys = Complex64::new(r, x).inv();
    let y22 = ys + Complex64::new(0.0, b_sh / 2.0);
    let c = -ys * vm;
    let sb = s.conj();
    // |conj(S) - Y22 u|^2 = |Y21 V1|^2 u with u = |V2|^2
    let qa = y22.norm_sqr();
    let qb = -(2.0 * (sb * y22.conj()).re + c.norm_sqr());
    let qc = s.norm_sqr();
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    let mut roots = vec![(-qb + disc.sqrt()) / (2.0 * qa), (-qb - disc.sqrt()) / (2.0 * qa)];
    roots.retain(|&u| u >= 0.0);
    roots.iter().map(|&u| ((sb - y22 * u) / c).conj()).collect()
}

fn two_bus_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let (mut mismatched, mut empty, mut worst) = (Vec::new(), 0, 0.0f64);
    for i in 0..500u64 {
        let (r, x, b) = (rng.random_range(0.0..0.05), rng.random_range(0.05..0.5), rng.random_range(0.0..0.1));
        let vm = rng.random_range(0.9..1.1);
        let (pd, qd) = (rng.random_range(-100.0..400.0), rng.random_range(-50.0..200.0));
        let case = common::two_bus(r, x, b, pd, qd);
        let model = build_admittance(&case).unwrap();
        let spec = PowerFlowSpec { roles: vec![BusRole::Slack { vm }, BusRole::Pq { p: -pd / 100.0, q: -qd / 100.0 }] };
        let sys = build_system(&case, &model, &spec).unwrap();
        let expected = closed_form(r, x, b, vm, Complex64::new(-pd / 100.0, -qd / 100.0));
        empty += expected.is_empty() as usize;
        let ok = match enumerate_solutions(&sys, i) {
            Ok(set) if set.certified && set.len() == expected.len() => expected.iter().all(|e| {
                let d = set.voltages.iter().map(|v| (v[1] - e).norm()).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
                d < 1e-8
            }),
            _ => false,
        };
        if !ok {
            mismatched.push(i);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{} of 500 mismatched {mismatched:?}, {empty} certified empty, worst distance {worst:.1e}",
            mismatched.len()
        ),
    )
}

fn path_count() -> Outcome {
    let params = GenerationParams::family(Family::ThreeBusCyclic);
    let mut rng = ChaCha8Rng::seed_from_u64(316);
    let (mut wrong_paths, mut differing, mut uncertified, mut solutions) = (0, 0, 0, 0);
    for i in 0..100 {
        let case = generate_indexed(&params, 77, i).unwrap().case;
        let model = build_admittance(&case).unwrap();
        let limits = case.bus_limits();
        let vm: Vec<f64> = (0..3).map(|_| rng.random_range(0.95..1.05)).collect();
        let pg: Vec<f64> = (0..3).map(|k| if limits[k].has_gen { rng.random_range(0.0..1.5) } else { 0.0 }).collect();
        let sys = build_system(&case, &model, &PowerFlowSpec::from_setpoints(&case, &vm, &pg)).unwrap();
        let sets: Vec<_> = (0..3).map(|g| enumerate_solutions(&sys, 1000 * i + g).unwrap()).collect();
        wrong_paths += sets.iter().filter(|s| s.paths != 16).count();
        uncertified += sets.iter().filter(|s| !s.certified).count();
        solutions += sets[0].len();
        let same = |a: &[Vec<Complex64>], b: &[Vec<Complex64>]| {
            a.len() == b.len()
                && a.iter().all(|v| b.iter().any(|w| v.iter().zip(w).all(|(x, y)| (x - y).norm() < 1e-6)))
        };
        if !sets.iter().all(|s| same(&s.voltages, &sets[0].voltages)) {
            differing += 1;
        }
    }
    outcome(
        wrong_paths == 0 && differing == 0,
        format!(
            "{wrong_paths} runs without 16 paths, {differing} of 100 systems differ across seeds, \
             {uncertified} uncertified runs, {solutions} real solutions in total"
        ),
    )
}

/// Screen `count` generated cases of a family; keeps those that got a gap.
fn screened(family: Family, count: usize, opts: &ScreeningOptions) -> (Vec<ScreeningResult>, ScreeningSummary) {
    let params = GenerationParams::family(family);
    let all = screen_batch(&params, count, opts).unwrap();
    let summary = ScreeningSummary::of(&all);
    (all.into_iter().filter(|r| r.status == ScreenStatus::Screened).collect(), summary)
}

fn bound_ordering() -> Outcome {
    let opts = ScreeningOptions { starts: 10, escalated_starts: 10, threshold: 1.0, seed: 41 };
    let mut cases = Vec::new();
    let mut failed = 0;
    for family in [Family::ThreeBusAcyclic, Family::ThreeBusCyclic] {
        let mut batch = 110;
        loop {
            let (rows, summary) = screened(family, batch, &opts);
            if rows.len() >= 100 || batch > 2000 {
                failed += summary.failed;
                cases.extend(rows.into_iter().take(100));
                break;
            }
            batch *= 2;
        }
    }
    let above: Vec<_> =
        cases.iter().filter(|r| r.bound.unwrap() > r.best.unwrap() * (1.0 + 1e-6)).map(|r| r.case_id).collect();
    let rank_one: Vec<_> = cases.iter().filter(|r| r.rank == Some(1)).collect();
    let loose: Vec<_> = rank_one.iter().filter(|r| r.gap_percent.unwrap() >= 0.1).map(|r| r.case_id).collect();
    outcome(
        cases.len() == 200 && above.is_empty() && loose.is_empty(),
        format!(
            "{} cases, {} bounds above the best optimum, {} rank-one cases of which {} have gap >= 0.1%, \
             {failed} cases without a local optimum or a bound skipped",
            cases.len(),
            above.len(),
            rank_one.len(),
            loose.len()
        ),
    )
}

fn random_point(nlp: &OpfNlp, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = nlp.n;
    let x = (0..nlp.n_vars())
        .map(|j| match j {
            j if j < n => rng.random_range(-0.5..0.5),
            j if j < 2 * n => rng.random_range(0.9..1.1),
            _ => rng.random_range(-1.0..2.0),
        })
        .collect();
    let lam = (0..nlp.n_eq()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu = (0..nlp.n_ineq()).map(|_| rng.random_range(0.0..1.0)).collect();
    (x, lam, mu)
}

fn rated(mut case: Case, s_max: f64) -> Case {
    case.branches.iter_mut().for_each(|b| b.s_max = s_max);
    case
}

fn gradient_checks() -> Outcome {
    let cases = [
        ("3-bus", rated(common::three_bus(), 5.0)),
        ("ieee14", rated(common::ieee("ieee14"), 30.0)),
        ("ieee24", common::ieee("ieee24")),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut details = Vec::new();
    let mut pass = true;
    for (name, case) in &cases {
        let nlp = OpfNlp::new(case).unwrap();
        let worst = (0..100)
            .map(|_| {
                let (x, lam, mu) = random_point(&nlp, &mut rng);
                nlp.check_derivatives(&x, &lam, &mu, 1e-6).gradient
            })
            .fold(0.0, f64::max);
        pass &= worst < 1e-5;
        details.push(format!("{name} worst {worst:.1e}"));
    }
    outcome(pass, format!("100 points per case; {}", details.join(", ")))
}

fn gap_arithmetic() -> Outcome {
    let rows = [
        ("nmwc14", 2529.87, 2529.49, 0.01),
        ("nmwc24", 39773.02, 39773.02, 0.00),
        ("nmwc57", 9128.72, 9030.70, 1.09),
        ("nmwc118", 34663.69, 30413.10, 14.00),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, local, bound, expected) in rows {
        let gap = optimality_gap(local, bound).unwrap().gap_percent;
        pass &= (gap - expected).abs() <= 0.05;
        details.push(format!("{name} {gap:.2}%"));
    }
    outcome(pass, details.join(", "))
}

fn gap_percent(optima: &LocalOptimaSet, case: &Case) -> Result<(f64, f64, usize), String> {
    let best = optima.best().ok_or("no local optimum")?.objective;
    let sdp = relax(case).map_err(|e| e.to_string())?;
    if sdp.status != SdpStatus::Optimal {
        return Err(format!("relaxation {:?}", sdp.status));
    }
    let gap = optimality_gap(best, sdp.lower_bound).map_err(|e| e.to_string())?.gap_percent;
    Ok((best, gap, sdp.rank))
}

fn tightened_ieee() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for buses in [57, 118] {
        let case = nmwc_case(buses).unwrap();
        let optima = match multistart(&case, 200, buses as u64) {
            Ok(o) => o,
            Err(e) => return outcome(false, format!("nmwc{buses} multistart: {e}")),
        };
        if buses == 118 {
            let spread = optima.spread_percent();
            pass &= optima.optima.len() >= 2 && spread >= 1.0;
            details.push(format!("nmwc118 {} optima, spread {spread:.2}%", optima.optima.len()));
        }
        match gap_percent(&optima, &case) {
            Ok((best, gap, rank)) => {
                pass &= gap >= 1.0;
                details.push(format!("nmwc{buses} best {best:.2}, gap {gap:.2}%, rank {rank}"));
            }
            Err(e) => {
                pass = false;
                details.push(format!("nmwc{buses}: {e}"));
            }
        }
    }
    outcome(pass, details.join("; "))
}

fn screening_rarity() -> Outcome {
    let opts = ScreeningOptions { seed: 1000, ..ScreeningOptions::default() };
    let mut selected = Vec::new();
    let (mut screened_total, mut generated, mut unexplained) = (0, 0, Vec::new());
    for family in [Family::ThreeBusAcyclic, Family::ThreeBusCyclic] {
        let results = screen_batch(&GenerationParams::family(family), 500, &opts).unwrap();
        let summary = ScreeningSummary::of(&results);
        generated += summary.generated;
        screened_total += summary.screened;
        for r in results.into_iter().filter(|r| r.selected) {
            if !r.binding.iter().any(|b| b.starts_with("Vmin") || b.starts_with("Qmin")) {
                unexplained.push(format!("{family}#{}", r.case_id));
            }
            selected.push(r);
        }
    }
    // the fraction is taken over everything generated; the share of cases that
    // reached a gap is reported alongside
    let fraction = selected.len() as f64 / generated.max(1) as f64;
    let of_screened = selected.len() as f64 / screened_total.max(1) as f64;
    outcome(
        screened_total > 0 && fraction <= 0.01 && unexplained.is_empty(),
        format!(
            "{generated} generated, {screened_total} screened, {} selected ({:.2}% of generated, {:.2}% of screened), \
             {} selected without a binding lower voltage or reactive limit {unexplained:?}",
            selected.len(),
            100.0 * fraction,
            100.0 * of_screened,
            unexplained.len()
        ),
    )
}

fn disconnected_space() -> Outcome {
    let case = common::acyclic_three_bus(-15.7, -23.5);
    let mut space = match map_feasible_space(&case, &GridSpec::full(&case, 15), 15) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let axes = parse_axes("pg2,qg2").unwrap();
    let proj = label_components(&case, &mut space, &axes, None).unwrap();
    let components = space.points.iter().map(|p| p.component).max().unwrap_or(0);
    let mut sizes = vec![0; components];
    space.points.iter().for_each(|p| sizes[p.component - 1] += 1);
    if components != 2 {
        return outcome(false, format!("{} feasible points in {components} components {sizes:?}", proj.rows.len()));
    }
    let mid = match midpoint_check(&case, &space, 1, 2, 3) {
        Ok(m) => m,
        Err(e) => return outcome(false, e.to_string()),
    };
    outcome(
        mid.certifies_infeasible(),
        format!(
            "{} feasible points, components {sizes:?}, midpoint has {} solutions of which {} feasible, certified {}",
            space.points.len(),
            mid.solutions,
            mid.feasible,
            mid.certified
        ),
    )
}
