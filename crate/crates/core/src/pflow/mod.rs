//! Power flow equations: construction, Newton-Raphson and homotopy enumeration.

mod homotopy;
mod newton;
mod system;

pub use homotopy::{enumerate_solutions, SolutionSet, MAX_ENUM_UNKNOWNS};
pub use newton::{newton_solve, MAX_NEWTON_ITERS, TOL_PF};
pub use system::{build_system, BusRole, PowerFlowSpec, QuadPoly, QuadraticSystem};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("power flow spec does not match the network: {0}")]
    SpecMismatch(String),
    #[error("initial point has the wrong length or is not finite")]
    BadInit,
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("Newton-Raphson did not converge")]
    NoConvergence,
    #[error("{0} real unknowns exceed the enumeration limit of {MAX_ENUM_UNKNOWNS}")]
    TooLarge(usize),
}
