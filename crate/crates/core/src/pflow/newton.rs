use nalgebra::{DMatrix, DVector};

use super::system::QuadraticSystem;
use super::PfError;

/// Residual tolerance of the power flow corrector (infinity norm, per unit).
pub const TOL_PF: f64 = 1e-10;
pub const MAX_NEWTON_ITERS: usize = 50;

/// Plain Newton-Raphson on the real system.
pub fn newton_solve(sys: &QuadraticSystem, init: &[f64]) -> Result<Vec<f64>, PfError> {
    if init.len() != sys.n_vars() || init.iter().any(|v| !v.is_finite()) {
        return Err(PfError::BadInit);
    }
    let n = sys.n_vars();
    let mut x = init.to_vec();
    for _ in 0..=MAX_NEWTON_ITERS {
        let f = sys.residual(&x);
        let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() {
            return Err(PfError::NoConvergence);
        }
        if norm < TOL_PF {
            return Ok(x);
        }
        let jac = sys.jacobian(&x);
        let j = DMatrix::from_fn(n, n, |r, c| jac[r][c]);
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let dx = j.lu().solve(&rhs).ok_or(PfError::SingularJacobian)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(PfError::SingularJacobian);
        }
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
    }
    Err(PfError::NoConvergence)
}
