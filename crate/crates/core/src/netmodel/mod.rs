//! Network data model, case ingestion, admittance and lifted matrices, and
//! constraint evaluation for the AC OPF problem.

mod admittance;
mod case;
mod evaluate;
mod hermitian;
pub mod mfile;

pub use admittance::{build_admittance, enforced_flow_limits, AdmittanceModel, BranchFlow, FlowLimit};
pub use case::{Branch, Bus, BusKind, BusLimits, Case, CostPoly, GenBus, Generator};
pub use evaluate::{
    check_feasibility, check_feasibility_with, evaluate_point, ConstraintEntry, ConstraintKind, ConstraintReport,
    ConstraintStatus, Location, PointEval, EPS_BIND,
};
pub use hermitian::SparseHermitian;
pub use mfile::{emit_mfile, parse_mfile};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("syntax error on line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required matrix `{0}`")]
    MissingMatrix(&'static str),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("reference to unknown bus {0}")]
    UnknownBus(u32),
    #[error("branch {0} has zero impedance")]
    SingularBranch(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Case file formats understood by [`parse_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseFormat {
    MFile,
    NativeJson,
}

impl CaseFormat {
    /// Guess from a file name: `.json` is native JSON, anything else an m-file.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => CaseFormat::NativeJson,
            _ => CaseFormat::MFile,
        }
    }
}

pub fn parse_case(text: &str, format: CaseFormat) -> Result<Case, NetError> {
    match format {
        CaseFormat::MFile => parse_mfile(text),
        CaseFormat::NativeJson => {
            let case: Case = serde_json::from_str(text)?;
            case.validate()?;
            Ok(case)
        }
    }
}

/// Native JSON: a direct serialization of [`Case`].
pub fn emit_case_json(case: &Case) -> String {
    serde_json::to_string_pretty(case).expect("case serializes")
}
