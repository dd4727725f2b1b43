use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::admittance::{build_admittance, AdmittanceModel};
use super::case::Case;

/// Tolerance (per unit) under which a limit is labelled binding.
pub const EPS_BIND: f64 = 1e-4;

/// Injections, flows and cost at one voltage vector.
#[derive(Clone, Debug)]
pub struct PointEval {
    /// Net active injection `tr(H_k W)`, per unit.
    pub p: Vec<f64>,
    /// Net reactive injection `tr(H~_k W)`, per unit.
    pub q: Vec<f64>,
    /// `{tr[(F+F^H)W]}^2 + {tr[j(F^H-F)W]}^2 = 4|S|^2` at the from end, per unit squared.
    pub flow_sq_fwd: Vec<f64>,
    pub flow_sq_rev: Vec<f64>,
    /// Generation cost in $/hr.
    pub objective: f64,
}

impl PointEval {
    pub fn p_gen(&self, case: &Case) -> Vec<f64> {
        let (pd, _) = case.loads_pu();
        self.p.iter().zip(pd).map(|(p, d)| p + d).collect()
    }

    pub fn q_gen(&self, case: &Case) -> Vec<f64> {
        let (_, qd) = case.loads_pu();
        self.q.iter().zip(qd).map(|(q, d)| q + d).collect()
    }
}

/// Evaluate injections, squared branch flows and the objective at `v`.
pub fn evaluate_point(case: &Case, model: &AdmittanceModel, v: &[Complex64]) -> PointEval {
    assert_eq!(v.len(), model.n(), "voltage vector length must equal the bus count");
    let p: Vec<f64> = model.h.iter().map(|h| h.quad_form(v)).collect();
    let q: Vec<f64> = model.h_tilde.iter().map(|h| h.quad_form(v)).collect();
    let four_s2 = |f: &super::BranchFlow| 4.0 * f.power(v).norm_sqr();
    let flow_sq_fwd = model.f_fwd.iter().map(four_s2).collect();
    let flow_sq_rev = model.f_rev.iter().map(four_s2).collect();
    let (pd, _) = case.loads_pu();
    let base = case.base_mva;
    let objective = case.gen_buses().iter().map(|g| g.cost.eval((p[g.bus] + pd[g.bus]) * base)).sum();
    PointEval { p, q, flow_sq_fwd, flow_sq_rev, objective }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    PLower,
    PUpper,
    QLower,
    QUpper,
    VLower,
    VUpper,
    FlowFwd,
    FlowRev,
}

impl ConstraintKind {
    /// Short label used in binding-constraint codes such as `Vmin@2`.
    pub fn code(self) -> &'static str {
        match self {
            ConstraintKind::PLower => "Pmin",
            ConstraintKind::PUpper => "Pmax",
            ConstraintKind::QLower => "Qmin",
            ConstraintKind::QUpper => "Qmax",
            ConstraintKind::VLower => "Vmin",
            ConstraintKind::VUpper => "Vmax",
            ConstraintKind::FlowFwd => "Sf",
            ConstraintKind::FlowRev => "St",
        }
    }
}

/// Where a constraint lives: a bus id or a branch index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Bus(u32),
    Branch(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintStatus {
    Violated,
    Binding,
    Interior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub kind: ConstraintKind,
    pub location: Location,
    /// Signed distance to the limit in per unit; negative when violated.
    pub slack: f64,
    pub status: ConstraintStatus,
    /// True for the zero generation limits of buses without a generator.
    pub fixed: bool,
}

impl fmt::Display for ConstraintEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Location::Bus(id) => write!(f, "{}@{}", self.kind.code(), id),
            Location::Branch(i) => write!(f, "{}@{}", self.kind.code(), i + 1),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub entries: Vec<ConstraintEntry>,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.entries.iter().all(|e| e.status != ConstraintStatus::Violated)
    }

    /// Feasibility at a tolerance other than the labelling one.
    pub fn is_feasible_within(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.slack >= -tol)
    }

    pub fn worst_violation(&self) -> f64 {
        self.entries.iter().map(|e| (-e.slack).max(0.0)).fold(0.0, f64::max)
    }

    /// Binding limits, excluding the fixed zero limits at buses without generators.
    pub fn binding(&self) -> impl Iterator<Item = &ConstraintEntry> {
        self.entries.iter().filter(|e| e.status == ConstraintStatus::Binding && !e.fixed)
    }

    /// Semicolon-joined binding codes, e.g. `Vmin@2;Qmin@3`.
    pub fn binding_codes(&self) -> String {
        self.binding().map(|e| e.to_string()).collect::<Vec<_>>().join(";")
    }

    pub fn has_binding(&self, kind: ConstraintKind) -> bool {
        self.binding().any(|e| e.kind == kind)
    }
}

fn classify(slack: f64) -> ConstraintStatus {
    if slack < -EPS_BIND {
        ConstraintStatus::Violated
    } else if slack.abs() <= EPS_BIND {
        ConstraintStatus::Binding
    } else {
        ConstraintStatus::Interior
    }
}

pub fn check_feasibility(case: &Case, v: &[Complex64]) -> ConstraintReport {
    let model = build_admittance(case).expect("valid case");
    check_feasibility_with(case, &model, v)
}

/// Classify every generation, voltage and flow limit at `v`.
pub fn check_feasibility_with(case: &Case, model: &AdmittanceModel, v: &[Complex64]) -> ConstraintReport {
    let eval = evaluate_point(case, model, v);
    let (pd, qd) = case.loads_pu();
    let limits = case.bus_limits();
    let mut entries = Vec::new();
    let mut push = |kind, location, slack: f64, fixed| {
        entries.push(ConstraintEntry { kind, location, slack, status: classify(slack), fixed });
    };
    for (k, bus) in case.buses.iter().enumerate() {
        let lim = &limits[k];
        let fixed = !lim.has_gen;
        let pg = eval.p[k] + pd[k];
        let qg = eval.q[k] + qd[k];
        let loc = Location::Bus(bus.id);
        push(ConstraintKind::PLower, loc, pg - lim.p_min, fixed);
        push(ConstraintKind::PUpper, loc, lim.p_max - pg, fixed);
        push(ConstraintKind::QLower, loc, qg - lim.q_min, fixed);
        push(ConstraintKind::QUpper, loc, lim.q_max - qg, fixed);
        let vm = v[k].norm();
        push(ConstraintKind::VLower, loc, vm - bus.v_min, false);
        push(ConstraintKind::VUpper, loc, bus.v_max - vm, false);
    }
    for (i, br) in case.branches.iter().enumerate() {
        if br.s_max <= 0.0 {
            continue;
        }
        let s_max = br.s_max / case.base_mva;
        let loc = Location::Branch(i);
        push(ConstraintKind::FlowFwd, loc, s_max - eval.flow_sq_fwd[i].sqrt() / 2.0, false);
        push(ConstraintKind::FlowRev, loc, s_max - eval.flow_sq_rev[i].sqrt() / 2.0, false);
    }
    ConstraintReport { entries }
}
