mod common;

use std::collections::BTreeSet;

use common::*;
use opf_core::fspace::{
    connectivity, csv_header, default_radius, label_components, map_feasible_space, midpoint_check, parse_axes,
    project, write_csv, Coord, FspaceError, GridAxis, GridSpec, GridVar,
};
use opf_core::netmodel::{check_feasibility, Case};

fn benign() -> Case {
    two_bus(0.01, 0.1, 0.02, 50.0, 20.0)
}

#[test]
fn grid_setpoints_cover_the_box() {
    let case = three_bus();
    let grid = GridSpec::full(&case, 3);
    assert_eq!(grid.axes.len(), 3);
    assert_eq!(grid.n_points(), 27);
    assert_eq!(grid.setpoints(0), vec![0.9, 0.9, 0.0]);
    assert_eq!(grid.setpoints(26), vec![1.1, 1.1, 200.0]);
    assert_eq!(grid.setpoints(1), vec![0.9, 0.9, 100.0]);
    grid.validate(&case).unwrap();
}

#[test]
fn grid_validation() {
    let case = three_bus();
    let mut g = GridSpec::full(&case, 3);
    g.axes[0].points = 1;
    assert!(matches!(g.validate(&case), Err(FspaceError::Grid(_))));
    let mut g = GridSpec::full(&case, 3);
    g.axes[2].hi = 300.0;
    assert!(g.validate(&case).is_err());
    let mut g = GridSpec::full(&case, 3);
    g.axes.pop();
    assert!(g.validate(&case).is_err());
    let mut g = GridSpec::full(&case, 3);
    g.axes[2].var = GridVar::Pg { bus: 1 };
    assert!(g.validate(&case).is_err());
}

#[test]
fn benign_points_pass_an_independent_check() {
    let case = benign();
    let space = map_feasible_space(&case, &GridSpec::full(&case, 9), 3).unwrap();
    assert!(space.certified);
    assert!(!space.points.is_empty());
    for p in &space.points {
        let report = check_feasibility(&case, &p.voltages);
        assert!(report.worst_violation() <= 1e-6);
        let cost = case.costs[0].eval(p.pg[0]);
        assert!((cost - p.cost).abs() < 1e-9 * cost.abs().max(1.0));
    }
}

#[test]
fn grid_outside_reachable_voltages_is_empty() {
    let mut case = benign();
    // the load bus cannot sit above a slack held at 0.9 to 0.95
    case.buses[1].v_min = 1.08;
    let grid = GridSpec { axes: vec![GridAxis { var: GridVar::Vm { bus: 1 }, lo: 0.9, hi: 0.95, points: 6 }] };
    let space = map_feasible_space(&case, &grid, 1).unwrap();
    assert!(space.points.is_empty());
    assert!(space.certified);
}

#[test]
fn projection_rows_and_costs() {
    let case = three_bus();
    let space = map_feasible_space(&case, &GridSpec::full(&case, 4), 5).unwrap();
    assert!(!space.points.is_empty());
    let axes = parse_axes("pg2,qg2").unwrap();
    let proj = project(&case, &space.points, &axes).unwrap();
    assert_eq!(proj.rows.len(), space.points.len());
    for (row, p) in proj.rows.iter().zip(&space.points) {
        assert_eq!(row.coords, vec![p.pg[1], p.qg[1]]);
        let cost = case.costs[0].eval(p.pg[0]) + case.costs[1].eval(p.pg[1]);
        assert!((row.cost - cost).abs() < 1e-8 * cost);
    }
    let empty = project(&case, &[], &axes).unwrap();
    assert!(empty.rows.is_empty());
}

#[test]
fn axis_parsing_and_errors() {
    assert_eq!(parse_axes("pg2, qg_3,vm1").unwrap(), vec![Coord::Pg(2), Coord::Qg(3), Coord::Vm(1)]);
    assert!(matches!("xx2".parse::<Coord>(), Err(FspaceError::UnknownAxis(_))));
    assert!("pg".parse::<Coord>().is_err());
    let case = three_bus();
    // bus 3 carries no generator, bus 9 does not exist
    for bad in ["pg3,qg2", "vm9,vm1"] {
        assert!(matches!(project(&case, &[], &parse_axes(bad).unwrap()), Err(FspaceError::UnknownAxis(_))));
    }
    assert!(matches!(project(&case, &[], &parse_axes("vm1").unwrap()), Err(FspaceError::AxisCount(1))));
}

#[test]
fn connectivity_clusters() {
    let mut pts = Vec::new();
    for i in 0..5 {
        pts.push(vec![i as f64 * 0.5, 0.0]);
    }
    for i in 0..3 {
        pts.push(vec![10.0 + i as f64 * 0.5, 0.0]);
    }
    assert_eq!(connectivity(&pts, 1.0).unwrap(), vec![1, 1, 1, 1, 1, 2, 2, 2]);
    assert_eq!(connectivity(&pts, 20.0).unwrap(), vec![1; 8]);
    // labels follow component size, not position
    let rev: Vec<Vec<f64>> = pts.iter().map(|p| vec![-p[0], p[1]]).collect();
    assert_eq!(connectivity(&rev, 1.0).unwrap(), vec![1, 1, 1, 1, 1, 2, 2, 2]);
    assert!(connectivity(&pts, 0.0).is_err());
    assert!(connectivity(&[], 1.0).unwrap().is_empty());
    assert!((default_radius(&pts) - 1.0).abs() < 1e-12);
}

#[test]
fn csv_contract() {
    let case = three_bus();
    let mut space = map_feasible_space(&case, &GridSpec::full(&case, 3), 2).unwrap();
    label_components(&case, &mut space, &parse_axes("pg2,qg2").unwrap(), None).unwrap();
    let header = csv_header(&case);
    assert_eq!(header, ["vm_1", "vm_2", "vm_3", "pg_1", "pg_2", "qg_1", "qg_2", "cost", "binding", "component"]);
    let mut buf = Vec::new();
    write_csv(&case, &space.points, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), header);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), space.points.len());
    for (r, p) in rows.iter().zip(&space.points) {
        assert_eq!(r[4].parse::<f64>().unwrap(), p.pg[1]);
        assert_eq!(r[7].parse::<f64>().unwrap(), p.cost);
        assert_eq!(&r[8], p.binding.join(";"));
        assert!(r[9].parse::<usize>().unwrap() >= 1);
    }
}

#[test]
fn output_independent_of_threads() {
    let case = three_bus();
    let grid = GridSpec::full(&case, 3);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| map_feasible_space(&case, &grid, 9).unwrap());
    let b = four.install(|| map_feasible_space(&case, &grid, 9).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

fn kinds(space: &opf_core::fspace::FeasibleSpace) -> BTreeSet<String> {
    space.points.iter().flat_map(|p| p.binding.iter().map(|b| b.split('@').next().unwrap().to_string())).collect()
}

/// The tightened network splits into two components, the midpoint between them
/// has no feasible power flow solution, and a finer grid keeps every feature
/// of the coarse one.
#[test]
fn tightened_three_bus_is_disconnected() {
    let case = acyclic_three_bus(-15.7, -23.5);
    let axes = parse_axes("pg2,qg2").unwrap();

    let coarse_grid = GridSpec::full(&case, 6);
    let mut coarse = map_feasible_space(&case, &coarse_grid, 1).unwrap();
    let coarse_proj = label_components(&case, &mut coarse, &axes, None).unwrap();
    let coarse_radius = default_radius(&coarse_proj.coords());
    let coarse_k = coarse.points.iter().map(|p| p.component).max().unwrap_or(0);

    let fine_grid = GridSpec::full(&case, 11);
    let mut fine = map_feasible_space(&case, &fine_grid, 1).unwrap();
    assert!(fine.certified);
    label_components(&case, &mut fine, &axes, Some(coarse_radius / 2.0)).unwrap();
    let fine_k = fine.points.iter().map(|p| p.component).max().unwrap();
    assert!(fine_k >= coarse_k);
    assert!(kinds(&fine).is_superset(&kinds(&coarse)));

    label_components(&case, &mut fine, &axes, None).unwrap();
    assert_eq!(fine.points.iter().map(|p| p.component).max(), Some(2));
    let mid = midpoint_check(&case, &fine, 1, 2, 7).unwrap();
    assert!(mid.certifies_infeasible(), "{mid:?}");

    let allowed: BTreeSet<String> = ["Vmin", "Vmax", "Qmin", "Qmax", "Pmin", "Pmax"].map(String::from).into();
    assert!(kinds(&fine).is_subset(&allowed));
    for p in &fine.points {
        assert!(check_feasibility(&case, &p.voltages).worst_violation() <= 1e-6);
    }
}
