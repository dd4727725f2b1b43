//! Local OPF solutions by a primal-dual interior-point method, and multistart search.

mod ipm;
mod multistart;
mod nlp;

pub use ipm::IpmOptions;
pub use multistart::{multistart, multistart_with, LocalOptimaSet, MultistartOptions, DEDUP_RADIUS};
pub use nlp::{BoundSide, DerivativeCheck, OpfNlp, SparseRow};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{check_feasibility_with, evaluate_point, Case, ConstraintReport, NetError};
use crate::pflow::{build_system, newton_solve, PowerFlowSpec};

/// Negative-curvature threshold for the reduced Hessian.
pub const NEG_CURVATURE_TOL: f64 = -1e-6;
/// Constraint tolerance of an accepted local solution (per unit).
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LocalOptError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("initial point has {got} buses, case has {want}")]
    InitMismatch { got: usize, want: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpfStatus {
    LocalOptimum,
    StationaryOnly,
    Failed,
}

/// Lagrange multipliers of the scaled NLP built by [`OpfNlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Equalities in [`OpfNlp`] order.
    pub lam: Vec<f64>,
    /// Inequalities in [`OpfNlp`] order.
    pub mu: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// A candidate OPF solution. Dispatch is per aggregated generator bus, per unit,
/// in [`Case::gen_buses`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfPoint {
    pub voltages: Vec<Complex64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// $/hr.
    pub objective: f64,
    pub status: OpfStatus,
    pub binding: ConstraintReport,
    pub multipliers: Option<Multipliers>,
    pub kkt: Option<KktResiduals>,
    pub iterations: usize,
}

impl OpfPoint {
    /// Zero angles, unit magnitudes clamped into the bounds, generation at the
    /// middle of its limits.
    pub fn flat(case: &Case) -> OpfPoint {
        let gens = case.gen_buses();
        OpfPoint {
            voltages: case.buses.iter().map(|b| Complex64::new(1.0_f64.clamp(b.v_min, b.v_max), 0.0)).collect(),
            pg: gens.iter().map(|g| 0.5 * (g.p_min + g.p_max)).collect(),
            qg: gens.iter().map(|g| 0.5 * (g.q_min + g.q_max)).collect(),
            objective: f64::NAN,
            status: OpfStatus::Failed,
            binding: ConstraintReport::default(),
            multipliers: None,
            kkt: None,
            iterations: 0,
        }
    }

    /// Point at given voltages with dispatch implied by the network equations.
    pub fn from_voltages(case: &Case, nlp: &OpfNlp, voltages: Vec<Complex64>) -> OpfPoint {
        let eval = evaluate_point(case, &nlp.model, &voltages);
        let (pg_bus, qg_bus) = (eval.p_gen(case), eval.q_gen(case));
        OpfPoint {
            pg: nlp.gens.iter().map(|g| pg_bus[g.bus]).collect(),
            qg: nlp.gens.iter().map(|g| qg_bus[g.bus]).collect(),
            objective: eval.objective,
            binding: check_feasibility_with(case, &nlp.model, &voltages),
            voltages,
            status: OpfStatus::Failed,
            multipliers: None,
            kkt: None,
            iterations: 0,
        }
    }

    pub fn is_local_optimum(&self) -> bool {
        self.status == OpfStatus::LocalOptimum
    }
}

/// Solve the OPF locally from `init` (flat start when `None`).
pub fn solve_local(case: &Case, init: Option<&OpfPoint>) -> Result<OpfPoint, LocalOptError> {
    case.validate()?;
    let nlp = OpfNlp::new(case)?;
    solve_local_with(case, &nlp, init, &IpmOptions::default())
}

pub fn solve_local_with(
    case: &Case,
    nlp: &OpfNlp,
    init: Option<&OpfPoint>,
    opts: &IpmOptions,
) -> Result<OpfPoint, LocalOptError> {
    let flat;
    let init = match init {
        Some(p) => p,
        None => {
            flat = OpfPoint::flat(case);
            &flat
        }
    };
    if init.voltages.len() != nlp.n {
        return Err(LocalOptError::InitMismatch { got: init.voltages.len(), want: nlp.n });
    }
    let x0 = nlp.pack(&init.voltages, &init.pg, &init.qg);
    let mut out = ipm::run_ipm(nlp, x0, opts);
    if !out.converged {
        log::debug!("local solve failed after {} iterations: {}", out.iterations, out.message);
        if let Some(restored) = restore(case, nlp, init) {
            let retry = ipm::run_ipm(nlp, nlp.pack(&restored.voltages, &restored.pg, &restored.qg), opts);
            out = if retry.converged {
                retry
            } else {
                ipm::IpmOutcome { message: format!("restoration failure: {}", retry.message), ..retry }
            };
        }
    }
    let voltages = nlp.voltages(&out.x);
    let multipliers = Multipliers { lam: out.lam, mu: out.mu };
    let kkt = kkt_from(nlp, &out.x, &multipliers);
    let eval = evaluate_point(case, &nlp.model, &voltages);
    let binding = check_feasibility_with(case, &nlp.model, &voltages);
    let status = if !out.converged || !binding.is_feasible_within(FEAS_TOL) {
        OpfStatus::Failed
    } else if ipm::reduced_hessian_min_eig(nlp, &out.x, &multipliers.lam, &multipliers.mu) < NEG_CURVATURE_TOL {
        OpfStatus::StationaryOnly
    } else {
        OpfStatus::LocalOptimum
    };
    Ok(OpfPoint {
        pg: nlp.pg(&out.x).to_vec(),
        qg: nlp.qg(&out.x).to_vec(),
        voltages,
        objective: eval.objective,
        status,
        binding,
        multipliers: Some(multipliers),
        kkt: Some(kkt),
        iterations: out.iterations,
    })
}

/// Power flow at the generator setpoints of `init`, with the dispatch it implies.
fn restore(case: &Case, nlp: &OpfNlp, init: &OpfPoint) -> Option<OpfPoint> {
    let mut vm_set: Vec<f64> = init.voltages.iter().map(|v| v.norm()).collect();
    let mut pg_set = vec![0.0; nlp.n];
    for (k, g) in nlp.gens.iter().enumerate() {
        let b = &case.buses[g.bus];
        vm_set[g.bus] = vm_set[g.bus].clamp(b.v_min, b.v_max);
        pg_set[g.bus] = init.pg[k].clamp(g.p_min, g.p_max);
    }
    let spec = PowerFlowSpec::from_setpoints(case, &vm_set, &pg_set);
    let sys = build_system(case, &nlp.model, &spec).ok()?;
    let x = newton_solve(&sys, &sys.unknowns(&init.voltages)).ok()?;
    Some(OpfPoint::from_voltages(case, nlp, sys.voltages(&x)))
}

fn kkt_from(nlp: &OpfNlp, x: &[f64], m: &Multipliers) -> KktResiduals {
    let grad = nlp.lagrangian_gradient(x, &m.lam, &m.mu);
    let (g, _) = nlp.equalities(x);
    let (h, _) = nlp.inequalities(x);
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let scale = 1.0 + norm(&m.lam).max(norm(&m.mu));
    KktResiduals {
        stationarity: norm(&grad) / scale,
        primal: norm(&g).max(h.iter().fold(0.0_f64, |a, &b| a.max(b))),
        complementarity: m.mu.iter().zip(&h).fold(0.0_f64, |a, (mu, hi)| a.max((mu * hi).abs())),
    }
}

/// First-order optimality residuals of `point` for the scaled NLP of `case`.
///
/// Stationarity is the infinity norm of the Lagrangian gradient divided by
/// `1 + max |multiplier|`.
pub fn kkt_residual(case: &Case, point: &OpfPoint, multipliers: &Multipliers) -> Result<KktResiduals, LocalOptError> {
    let nlp = OpfNlp::new(case)?;
    if point.voltages.len() != nlp.n {
        return Err(LocalOptError::InitMismatch { got: point.voltages.len(), want: nlp.n });
    }
    let x = nlp.pack(&point.voltages, &point.pg, &point.qg);
    Ok(kkt_from(&nlp, &x, multipliers))
}
