//! Semidefinite relaxation of the OPF: lower bounds, rank-one detection and
//! voltage recovery, and optimality gaps.

mod problem;
mod solver;

pub use problem::{build_sdp, Block, BlockRole, Entry, LinearConstraint, SdpProblem};
pub use solver::SdpOptions;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{build_admittance, Case, NetError};
use solver::{Mat, Outcome};

/// Eigenvalues of `W` above this fraction of the largest count toward the rank.
pub const RANK_TOL: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum SdpError {
    #[error("optimality gap needs a positive lower bound, got {0}")]
    NonPositiveBound(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    /// Hermitian `n x n` matrix reassembled from the real embedding.
    pub w: DMatrix<Complex64>,
    /// $/hr; infinite when infeasible.
    pub lower_bound: f64,
    /// Eigenvalues of `w` in decreasing order.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Present iff the rank is one.
    pub voltages: Option<Vec<Complex64>>,
    pub status: SdpStatus,
    /// Relative primal-dual gap of the scaled problem.
    pub gap: f64,
    pub iterations: usize,
    pub slack: usize,
}

/// Local objective, lower bound and `100 (local - bound) / bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub local: f64,
    pub bound: f64,
    pub gap_percent: f64,
}

pub fn optimality_gap(local: f64, bound: f64) -> Result<GapReport, SdpError> {
    if !(bound > 0.0) {
        return Err(SdpError::NonPositiveBound(bound));
    }
    Ok(GapReport { local, bound, gap_percent: 100.0 * (local - bound) / bound })
}

/// `[[A, -B], [B, A]]` to `A + jB`, averaging the duplicated parts.
fn reassemble(x: &DMatrix<f64>, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}

/// Eigenvalues of `w` (decreasing), its numerical rank, and when the rank is one
/// the voltages `sqrt(lambda_max) u` rotated to a zero angle at `slack`.
pub fn analyze_w(w: &DMatrix<Complex64>, slack: usize) -> (Vec<f64>, usize, Option<Vec<Complex64>>) {
    let eig = SymmetricEigen::new(w.clone());
    let mut order: Vec<usize> = (0..w.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let Some(&top) = values.first().filter(|&&t| t > 0.0) else {
        return (values, 0, None);
    };
    let rank = values.iter().filter(|&&l| l / top > RANK_TOL).count();
    if rank != 1 {
        return (values, rank, None);
    }
    let u = eig.eigenvectors.column(order[0]);
    let mut v: Vec<Complex64> = u.iter().map(|z| z * top.sqrt()).collect();
    let s = v[slack];
    if s.norm() > 0.0 {
        let rot = s.conj() / s.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
    (values, rank, Some(v))
}

pub fn rank_and_recovery(sol: &SdpSolution) -> (usize, Option<Vec<Complex64>>) {
    let (_, rank, v) = analyze_w(&sol.w, sol.slack);
    (rank, v)
}

pub fn solve_sdp(prob: &SdpProblem) -> SdpSolution {
    solve_sdp_with(prob, &SdpOptions::default())
}

pub fn solve_sdp_with(prob: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let n = prob.n;
    if prob.capacity_shortfall {
        return SdpSolution {
            w: DMatrix::zeros(n, n),
            lower_bound: f64::INFINITY,
            eigenvalues: vec![0.0; n],
            rank: 0,
            voltages: None,
            status: SdpStatus::Infeasible,
            gap: f64::NAN,
            iterations: 0,
            slack: prob.slack,
        };
    }
    let raw = solver::solve_blocks(prob, opts);
    let w = match &raw.x[0] {
        Mat::Dense(x) => reassemble(x, n),
        Mat::Diag(_) => unreachable!("voltage block is dense"),
    };
    let (eigenvalues, rank, voltages) = analyze_w(&w, prob.slack);
    let status = match raw.outcome {
        Outcome::Optimal => SdpStatus::Optimal,
        Outcome::Infeasible => SdpStatus::Infeasible,
        Outcome::Trouble => SdpStatus::NumericalTrouble,
    };
    let lower_bound = match status {
        SdpStatus::Infeasible => f64::INFINITY,
        _ => raw.dobj / prob.scale + prob.offset,
    };
    log::debug!("sdp {:?} after {} iterations, primal {:e}, dual {:e}", status, raw.iterations, raw.pobj, raw.dobj);
    SdpSolution {
        w,
        lower_bound,
        eigenvalues,
        rank,
        voltages: if status == SdpStatus::Optimal { voltages } else { None },
        status,
        gap: raw.rel_gap,
        iterations: raw.iterations,
        slack: prob.slack,
    }
}

/// Build and solve the relaxation of `case`.
pub fn relax(case: &Case) -> Result<SdpSolution, NetError> {
    case.validate()?;
    let model = build_admittance(case)?;
    Ok(solve_sdp(&build_sdp(case, &model)))
}
