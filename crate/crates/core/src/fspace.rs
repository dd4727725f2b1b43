//! Discretized feasible spaces of small cases: every power flow solution on a
//! grid of generator setpoints is enumerated and screened against the OPF
//! limits, then projected onto two or three coordinates and split into
//! connected components.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{build_admittance, check_feasibility_with, evaluate_point, AdmittanceModel, Case, NetError};
use crate::pflow::{build_system, enumerate_solutions, PfError, PowerFlowSpec};

/// Points per axis when none is given.
pub const DEFAULT_POINTS: usize = 25;
/// Largest violation (per unit) tolerated in an emitted point.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FspaceError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unknown axis `{0}` (expected vm<bus>, pg<bus> or qg<bus> for a bus of the case)")]
    UnknownAxis(String),
    #[error("projection needs 2 or 3 axes, got {0}")]
    AxisCount(usize),
    #[error("connectivity radius must be positive, got {0}")]
    Radius(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Setpoint varied along one grid axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GridVar {
    /// Voltage magnitude setpoint of a generator bus, per unit.
    Vm { bus: u32 },
    /// Active generation of a non-slack generator bus, MW.
    Pg { bus: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub var: GridVar,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn value(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    /// One axis per degree of freedom over its full limits: the voltage of every
    /// generator bus and the dispatch of every generator bus except the slack.
    pub fn full(case: &Case, points: usize) -> GridSpec {
        let slack = case.slack_index();
        let mut axes = Vec::new();
        for g in case.gen_buses() {
            let bus = &case.buses[g.bus];
            axes.push(GridAxis { var: GridVar::Vm { bus: bus.id }, lo: bus.v_min, hi: bus.v_max, points });
        }
        for g in case.gen_buses() {
            if g.bus != slack {
                let id = case.buses[g.bus].id;
                let base = case.base_mva;
                axes.push(GridAxis { var: GridVar::Pg { bus: id }, lo: g.p_min * base, hi: g.p_max * base, points });
            }
        }
        GridSpec { axes }
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    /// Setpoints of grid point `index`; the first axis varies slowest.
    pub fn setpoints(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            out[k] = axis.value(index % axis.points);
            index /= axis.points;
        }
        out
    }

    /// Every degree of freedom of `case` has exactly one axis, inside its limits.
    pub fn validate(&self, case: &Case) -> Result<(), FspaceError> {
        let bad = |m: String| Err(FspaceError::Grid(m));
        let slack = case.slack_index();
        let limits = case.bus_limits();
        let mut seen = BTreeSet::new();
        let tol = 1e-9;
        for a in &self.axes {
            if a.points < 2 {
                return bad(format!("{} needs at least 2 points", Coord::from(a.var)));
            }
            if !(a.lo <= a.hi) {
                return bad(format!("{} has range [{}, {}]", Coord::from(a.var), a.lo, a.hi));
            }
            if !seen.insert(a.var) {
                return bad(format!("{} appears twice", Coord::from(a.var)));
            }
            let (GridVar::Vm { bus: id } | GridVar::Pg { bus: id }) = a.var;
            let Some(k) = case.bus_index(id) else { return bad(format!("no bus {id}")) };
            if !limits[k].has_gen {
                return bad(format!("bus {id} has no generator"));
            }
            let (lo, hi) = match a.var {
                GridVar::Vm { .. } => (case.buses[k].v_min, case.buses[k].v_max),
                GridVar::Pg { .. } if k == slack => return bad(format!("slack bus {id} dispatch is not a setpoint")),
                GridVar::Pg { .. } => (limits[k].p_min * case.base_mva, limits[k].p_max * case.base_mva),
            };
            if a.lo < lo - tol || a.hi > hi + tol {
                return bad(format!(
                    "{} range [{}, {}] leaves the limits [{lo}, {hi}]",
                    Coord::from(a.var),
                    a.lo,
                    a.hi
                ));
            }
        }
        let expected = GridSpec::full(case, 2).axes.len();
        if seen.len() != expected {
            return bad(format!("{} axes given, the case has {expected} degrees of freedom", seen.len()));
        }
        Ok(())
    }

    /// Power flow spec for setpoints `values`, loads from the case.
    pub fn power_flow_spec(&self, case: &Case, values: &[f64]) -> PowerFlowSpec {
        let n = case.n_buses();
        let mut vm = vec![1.0; n];
        let mut pg = vec![0.0; n];
        for (a, &v) in self.axes.iter().zip(values) {
            match a.var {
                GridVar::Vm { bus } => vm[case.bus_index(bus).expect("validated")] = v,
                GridVar::Pg { bus } => pg[case.bus_index(bus).expect("validated")] = v / case.base_mva,
            }
        }
        PowerFlowSpec::from_setpoints(case, &vm, &pg)
    }
}

/// A feasible operating point found on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub grid_index: usize,
    pub setpoints: Vec<f64>,
    pub voltages: Vec<Complex64>,
    /// Net generation per bus in MW, zero at buses without generators.
    pub pg: Vec<f64>,
    /// MVAr, as `pg`.
    pub qg: Vec<f64>,
    /// $/hr.
    pub cost: f64,
    /// Binding limit codes such as `Vmin@2`.
    pub binding: Vec<String>,
    /// Connected component, 1-based; 0 until assigned.
    pub component: usize,
}

impl FeasiblePoint {
    fn coordinate(&self, case: &Case, c: Coord) -> f64 {
        let k = case.bus_index(c.bus()).expect("validated axis");
        match c {
            Coord::Vm(_) => self.voltages[k].norm(),
            Coord::Pg(_) => self.pg[k],
            Coord::Qg(_) => self.qg[k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSpace {
    pub grid: GridSpec,
    pub points: Vec<FeasiblePoint>,
    /// Grid points whose enumeration failed.
    pub failed_grid_points: Vec<usize>,
    /// Every grid point was enumerated with all paths classified.
    pub certified: bool,
}

struct Screened {
    points: Vec<FeasiblePoint>,
    certified: bool,
    solutions: usize,
}

fn screen_grid_point(
    case: &Case,
    model: &AdmittanceModel,
    grid: &GridSpec,
    index: usize,
    setpoints: Vec<f64>,
    seed: u64,
) -> Result<Screened, PfError> {
    let spec = grid.power_flow_spec(case, &setpoints);
    let sys = build_system(case, model, &spec)?;
    let set = enumerate_solutions(&sys, seed)?;
    let base = case.base_mva;
    let mut points = Vec::new();
    for v in &set.voltages {
        let report = check_feasibility_with(case, model, v);
        if report.worst_violation() > FEASIBILITY_TOL {
            continue;
        }
        let eval = evaluate_point(case, model, v);
        let gen = case.bus_limits();
        let scale = |x: Vec<f64>| -> Vec<f64> {
            x.into_iter().zip(&gen).map(|(x, g)| if g.has_gen { x * base } else { 0.0 }).collect()
        };
        points.push(FeasiblePoint {
            grid_index: index,
            setpoints: setpoints.clone(),
            voltages: v.clone(),
            pg: scale(eval.p_gen(case)),
            qg: scale(eval.q_gen(case)),
            cost: eval.objective,
            binding: report.binding().map(|e| e.to_string()).collect(),
            component: 0,
        });
    }
    Ok(Screened { points, certified: set.certified, solutions: set.len() })
}

/// Enumerate every power flow solution at every grid point and keep the ones
/// satisfying all OPF limits. Output is ordered by grid index.
pub fn map_feasible_space(case: &Case, grid: &GridSpec, seed: u64) -> Result<FeasibleSpace, FspaceError> {
    case.validate()?;
    grid.validate(case)?;
    let model = build_admittance(case)?;
    let results: Vec<Result<Screened, PfError>> = (0..grid.n_points())
        .into_par_iter()
        .map(|i| screen_grid_point(case, &model, grid, i, grid.setpoints(i), seed))
        .collect();
    let mut space =
        FeasibleSpace { grid: grid.clone(), points: Vec::new(), failed_grid_points: Vec::new(), certified: true };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                space.certified &= s.certified;
                space.points.extend(s.points);
            }
            Err(e @ PfError::TooLarge(_)) => return Err(e.into()),
            Err(e) => {
                log::warn!("grid point {i}: {e}");
                space.failed_grid_points.push(i);
                space.certified = false;
            }
        }
    }
    Ok(space)
}

/// A projection coordinate: `vm<bus>`, `pg<bus>` or `qg<bus>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coord {
    Vm(u32),
    Pg(u32),
    Qg(u32),
}

impl Coord {
    pub fn bus(self) -> u32 {
        match self {
            Coord::Vm(b) | Coord::Pg(b) | Coord::Qg(b) => b,
        }
    }
}

impl From<GridVar> for Coord {
    fn from(v: GridVar) -> Coord {
        match v {
            GridVar::Vm { bus } => Coord::Vm(bus),
            GridVar::Pg { bus } => Coord::Pg(bus),
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Vm(b) => write!(f, "vm{b}"),
            Coord::Pg(b) => write!(f, "pg{b}"),
            Coord::Qg(b) => write!(f, "qg{b}"),
        }
    }
}

impl FromStr for Coord {
    type Err = FspaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.replace('_', "");
        let unknown = || FspaceError::UnknownAxis(s.to_string());
        let (kind, bus) = t.split_at_checked(2).ok_or_else(unknown)?;
        let bus: u32 = bus.parse().map_err(|_| unknown())?;
        match kind {
            "vm" => Ok(Coord::Vm(bus)),
            "pg" => Ok(Coord::Pg(bus)),
            "qg" => Ok(Coord::Qg(bus)),
            _ => Err(unknown()),
        }
    }
}

/// Parse a comma-separated axis list such as `pg2,qg2`.
pub fn parse_axes(s: &str) -> Result<Vec<Coord>, FspaceError> {
    s.split(',').map(str::parse).collect()
}

fn check_axes(case: &Case, axes: &[Coord]) -> Result<(), FspaceError> {
    if !(2..=3).contains(&axes.len()) {
        return Err(FspaceError::AxisCount(axes.len()));
    }
    let limits = case.bus_limits();
    for &a in axes {
        let ok = match case.bus_index(a.bus()) {
            None => false,
            Some(k) => matches!(a, Coord::Vm(_)) || limits[k].has_gen,
        };
        if !ok {
            return Err(FspaceError::UnknownAxis(a.to_string()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub coords: Vec<f64>,
    pub cost: f64,
    pub binding: Vec<String>,
    pub component: usize,
}

/// A local optimum placed in the projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumMarker {
    pub coords: Vec<f64>,
    pub cost: f64,
    pub global: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDataset {
    pub axes: Vec<Coord>,
    pub rows: Vec<ProjectionRow>,
    pub optima: Vec<OptimumMarker>,
}

impl ProjectionDataset {
    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.coords.clone()).collect()
    }

    /// Mark local optima given by their voltages; the cheapest is global.
    pub fn mark_optima(&mut self, case: &Case, optima: &[Vec<Complex64>]) -> Result<(), FspaceError> {
        let model = build_admittance(case)?;
        let base = case.base_mva;
        let mut markers: Vec<OptimumMarker> = optima
            .iter()
            .map(|v| {
                let eval = evaluate_point(case, &model, v);
                let (pg, qg) = (eval.p_gen(case), eval.q_gen(case));
                let coords = self
                    .axes
                    .iter()
                    .map(|&a| {
                        let k = case.bus_index(a.bus()).expect("validated axis");
                        match a {
                            Coord::Vm(_) => v[k].norm(),
                            Coord::Pg(_) => pg[k] * base,
                            Coord::Qg(_) => qg[k] * base,
                        }
                    })
                    .collect();
                OptimumMarker { coords, cost: eval.objective, global: false }
            })
            .collect();
        if let Some(best) = markers.iter_mut().min_by(|a, b| a.cost.total_cmp(&b.cost)) {
            best.global = true;
        }
        self.optima = markers;
        Ok(())
    }
}

/// Coordinates of `points` on `axes`, one row per point.
pub fn project(case: &Case, points: &[FeasiblePoint], axes: &[Coord]) -> Result<ProjectionDataset, FspaceError> {
    check_axes(case, axes)?;
    let rows = points
        .iter()
        .map(|p| ProjectionRow {
            coords: axes.iter().map(|&a| p.coordinate(case, a)).collect(),
            cost: p.cost,
            binding: p.binding.clone(),
            component: p.component,
        })
        .collect();
    Ok(ProjectionDataset { axes: axes.to_vec(), rows, optima: Vec::new() })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices sorted by first coordinate, for sweeps that stop once the first
/// coordinate alone exceeds a distance.
fn sweep_order(coords: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]).then(a.cmp(&b)));
    order
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage components: points within `radius` of each other are
/// connected. Labels run from 1 in order of decreasing component size, ties
/// broken by the smallest member index.
pub fn connectivity(coords: &[Vec<f64>], radius: f64) -> Result<Vec<usize>, FspaceError> {
    if !(radius > 0.0) {
        return Err(FspaceError::Radius(radius));
    }
    let n = coords.len();
    let order = sweep_order(coords);
    let mut parent: Vec<usize> = (0..n).collect();
    let r2 = radius * radius;
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if coords[j][0] - coords[i][0] > radius {
                break;
            }
            if dist2(&coords[i], &coords[j]) <= r2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &r in &roots {
        *sizes.entry(r).or_default() += 1;
    }
    let mut ranked: Vec<(usize, usize)> = sizes.into_iter().collect();
    // roots are the smallest member of each component
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let label: HashMap<usize, usize> = ranked.iter().enumerate().map(|(l, &(r, _))| (r, l + 1)).collect();
    Ok(roots.iter().map(|r| label[r]).collect())
}

/// Twice the largest nearest-neighbour distance; zero for fewer than two points.
pub fn default_radius(coords: &[Vec<f64>]) -> f64 {
    if coords.len() < 2 {
        return 0.0;
    }
    let order = sweep_order(coords);
    let mut worst: f64 = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        let mut best = f64::INFINITY;
        let check = |j: usize, best: &mut f64| -> bool {
            let dx = coords[j][0] - coords[i][0];
            if dx * dx > *best {
                return false;
            }
            *best = best.min(dist2(&coords[i], &coords[j]));
            true
        };
        for &j in &order[pos + 1..] {
            if !check(j, &mut best) {
                break;
            }
        }
        for &j in order[..pos].iter().rev() {
            if !check(j, &mut best) {
                break;
            }
        }
        worst = worst.max(best);
    }
    2.0 * worst.sqrt()
}

/// Assign component labels to `space.points` from their projection on `axes`.
/// Returns the projection with labels filled in.
pub fn label_components(
    case: &Case,
    space: &mut FeasibleSpace,
    axes: &[Coord],
    radius: Option<f64>,
) -> Result<ProjectionDataset, FspaceError> {
    let mut proj = project(case, &space.points, axes)?;
    if proj.rows.is_empty() {
        return Ok(proj);
    }
    let coords = proj.coords();
    let r = match radius {
        Some(r) => r,
        None => default_radius(&coords).max(f64::MIN_POSITIVE),
    };
    let labels = connectivity(&coords, r)?;
    for ((p, row), l) in space.points.iter_mut().zip(&mut proj.rows).zip(labels) {
        p.component = l;
        row.component = l;
    }
    Ok(proj)
}

/// Outcome of enumerating the power flow between two components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidpointCheck {
    /// Setpoints halfway between the setpoint centroids of the two components.
    pub setpoints: Vec<f64>,
    pub solutions: usize,
    /// Solutions within all limits.
    pub feasible: usize,
    pub certified: bool,
}

impl MidpointCheck {
    /// Enumeration was complete and no solution is feasible.
    pub fn certifies_infeasible(&self) -> bool {
        self.certified && self.feasible == 0
    }
}

/// Enumerate the power flow at the midpoint between the setpoint centroids of
/// components `a` and `b`. A complete enumeration with no feasible solution
/// shows the feasible set is not convex.
pub fn midpoint_check(
    case: &Case,
    space: &FeasibleSpace,
    a: usize,
    b: usize,
    seed: u64,
) -> Result<MidpointCheck, FspaceError> {
    let centroid = |c: usize| -> Result<Vec<f64>, FspaceError> {
        let members: Vec<&FeasiblePoint> = space.points.iter().filter(|p| p.component == c).collect();
        if members.is_empty() {
            return Err(FspaceError::Grid(format!("component {c} is empty")));
        }
        let dim = space.grid.axes.len();
        let mut m = vec![0.0; dim];
        for p in &members {
            for (acc, v) in m.iter_mut().zip(&p.setpoints) {
                *acc += v / members.len() as f64;
            }
        }
        Ok(m)
    };
    let (ca, cb) = (centroid(a)?, centroid(b)?);
    let setpoints: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| 0.5 * (x + y)).collect();
    let model = build_admittance(case)?;
    let s = screen_grid_point(case, &model, &space.grid, usize::MAX, setpoints.clone(), seed)?;
    Ok(MidpointCheck { setpoints, solutions: s.solutions, feasible: s.points.len(), certified: s.certified })
}

/// CSV header: `vm_<bus>` for every bus, then `pg_<bus>` and `qg_<bus>` for
/// generator buses, then `cost`, `binding` and `component`.
pub fn csv_header(case: &Case) -> Vec<String> {
    let gen_ids = generator_bus_ids(case);
    let mut h: Vec<String> = case.buses.iter().map(|b| format!("vm_{}", b.id)).collect();
    h.extend(gen_ids.iter().map(|id| format!("pg_{id}")));
    h.extend(gen_ids.iter().map(|id| format!("qg_{id}")));
    h.extend(["cost", "binding", "component"].map(String::from));
    h
}

fn generator_bus_ids(case: &Case) -> Vec<u32> {
    let limits = case.bus_limits();
    case.buses.iter().zip(&limits).filter(|(_, l)| l.has_gen).map(|(b, _)| b.id).collect()
}

/// One row per point, columns as in [`csv_header`]. Floats use the shortest
/// representation that round-trips.
pub fn write_csv<W: Write>(case: &Case, points: &[FeasiblePoint], out: W) -> Result<(), FspaceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(case))?;
    let gens: Vec<usize> = case.bus_limits().iter().enumerate().filter(|(_, l)| l.has_gen).map(|(k, _)| k).collect();
    for p in points {
        let mut rec: Vec<String> = p.voltages.iter().map(|v| v.norm().to_string()).collect();
        rec.extend(gens.iter().map(|&k| p.pg[k].to_string()));
        rec.extend(gens.iter().map(|&k| p.qg[k].to_string()));
        rec.push(p.cost.to_string());
        rec.push(p.binding.join(";"));
        rec.push(p.component.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
