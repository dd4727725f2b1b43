use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::nlp::{add_transpose_product, dot, OpfNlp, SparseRow};

/// Settings of the primal-dual interior-point method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpmOptions {
    pub max_iter: usize,
    /// Applies to the scaled feasibility, gradient and complementarity tests.
    pub tol: f64,
    /// Fraction-to-boundary factor.
    pub xi: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { max_iter: 200, tol: 1e-8, xi: 0.995 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest step in `(0, 1]` keeping `v + a dv` positive, scaled by `xi`.
fn max_step(v: &[f64], dv: &[f64], xi: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(xi * x / -d);
        }
    }
    a
}

fn sparse_dot(row: &SparseRow, x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

/// Primal-dual interior point with Mehrotra-style centring from `x0`.
pub(crate) fn run_ipm(nlp: &OpfNlp, x0: Vec<f64>, opts: &IpmOptions) -> IpmOutcome {
    let nx = nlp.n_vars();
    let neq = nlp.n_eq();
    let niq = nlp.n_ineq();
    let mut x = x0;
    let mut df = nlp.objective(&x).1;
    let (mut g, mut jg) = nlp.equalities(&x);
    let (mut h, mut jh) = nlp.inequalities(&x);

    let mut z: Vec<f64> = h.iter().map(|&hi| if hi < -1.0 { -hi } else { 1.0 }).collect();
    let mut mu: Vec<f64> = z.iter().map(|&zi| (1.0 / zi).max(1.0)).collect();
    let mut lam = vec![0.0; neq];
    let mut last_shift = 0.0_f64;

    let fail = |x: Vec<f64>, lam, mu, it, msg: &str| IpmOutcome {
        x,
        lam,
        mu,
        iterations: it,
        converged: false,
        message: msg.to_string(),
    };

    for it in 0..=opts.max_iter {
        let mut lx = df.clone();
        add_transpose_product(&jg, &lam, &mut lx);
        add_transpose_product(&jh, &mu, &mut lx);

        let maxh = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let feascond = inf_norm(&g).max(maxh) / (1.0 + inf_norm(&x).max(inf_norm(&z)));
        let gradcond = inf_norm(&lx) / (1.0 + inf_norm(&lam).max(inf_norm(&mu)));
        let compcond = dot(&z, &mu) / (1.0 + inf_norm(&x));
        if !(feascond.is_finite() && gradcond.is_finite() && compcond.is_finite()) {
            return fail(x, lam, mu, it, "non-finite iterate");
        }
        if feascond < opts.tol && gradcond < opts.tol && compcond < opts.tol {
            return IpmOutcome { x, lam, mu, iterations: it, converged: true, message: "converged".into() };
        }
        if it == opts.max_iter {
            break;
        }

        // reduced KKT system [M Jg^T; Jg 0]
        let hess = nlp.lagrangian_hessian(&x, &lam, &mu);
        let dim = nx + neq;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        kkt.view_mut((0, 0), (nx, nx)).copy_from(&hess);
        for (j, row) in jh.iter().enumerate() {
            let w = mu[j] / z[j];
            for &(a, va) in row {
                for &(b, vb) in row {
                    kkt[(a, b)] += w * va * vb;
                }
            }
        }
        for (i, row) in jg.iter().enumerate() {
            for &(j, v) in row {
                kkt[(nx + i, j)] += v;
                kkt[(j, nx + i)] += v;
            }
        }
        let direction = |lu: &nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
                         gamma: f64|
         -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
            let mut n_vec = lx.clone();
            for (j, row) in jh.iter().enumerate() {
                let w = (mu[j] * h[j] + gamma) / z[j];
                for &(a, va) in row {
                    n_vec[a] += w * va;
                }
            }
            let rhs = DVector::from_iterator(dim, n_vec.iter().map(|v| -v).chain(g.iter().map(|v| -v)));
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dx: Vec<f64> = sol.rows(0, nx).iter().copied().collect();
            let dlam: Vec<f64> = sol.rows(nx, neq).iter().copied().collect();
            let dz: Vec<f64> = (0..niq).map(|j| -h[j] - z[j] - sparse_dot(&jh[j], &dx)).collect();
            let dmu: Vec<f64> = (0..niq).map(|j| -mu[j] + (gamma - mu[j] * dz[j]) / z[j]).collect();
            Some((dx, dlam, dz, dmu))
        };

        // regularise the Hessian block until the affine step has positive curvature
        let mut shift = 0.0;
        let (lu, affine) = loop {
            let mut reg = kkt.clone();
            for j in 0..nx {
                reg[(j, j)] += shift;
            }
            let lu = reg.lu();
            let affine = if lu.is_invertible() { direction(&lu, 0.0) } else { None };
            if let Some(d) = &affine {
                let mdx = kkt.view((0, 0), (nx, nx)) * DVector::from_column_slice(&d.0);
                let curv: f64 = mdx.iter().zip(&d.0).map(|(a, b)| a * b).sum::<f64>() + shift * dot(&d.0, &d.0);
                if curv >= 1e-8 * dot(&d.0, &d.0) {
                    break (lu, d.clone());
                }
            }
            shift = if shift == 0.0 { (last_shift / 3.0).max(1e-4) } else { shift * 8.0 };
            if shift > 1e20 {
                return fail(x, lam, mu, it, "singular KKT system");
            }
        };
        last_shift = shift;

        let gamma = if niq > 0 {
            let mean = dot(&z, &mu) / niq as f64;
            let (_, _, dz, dmu) = &affine;
            let ap = max_step(&z, dz, 1.0);
            let ad = max_step(&mu, dmu, 1.0);
            let aff: f64 = (0..niq).map(|j| (z[j] + ap * dz[j]) * (mu[j] + ad * dmu[j])).sum::<f64>() / niq as f64;
            let sigma = (aff / mean).powi(3).clamp(1e-3, 0.1);
            sigma * mean
        } else {
            0.0
        };
        let Some((dx, dlam, dz, dmu)) = direction(&lu, gamma) else {
            return fail(x, lam, mu, it, "singular KKT system");
        };
        let ap = max_step(&z, &dz, opts.xi);
        let ad = max_step(&mu, &dmu, opts.xi);
        for j in 0..nx {
            x[j] += ap * dx[j];
        }
        for j in 0..niq {
            z[j] += ap * dz[j];
            mu[j] += ad * dmu[j];
        }
        for i in 0..neq {
            lam[i] += ad * dlam[i];
        }

        df = nlp.objective(&x).1;
        (g, jg) = nlp.equalities(&x);
        (h, jh) = nlp.inequalities(&x);
    }
    fail(x, lam, mu, opts.max_iter, "iteration limit")
}

/// Smallest eigenvalue of the Lagrangian Hessian on the null space of the
/// equality and active inequality Jacobian.
pub(crate) fn reduced_hessian_min_eig(nlp: &OpfNlp, x: &[f64], lam: &[f64], mu: &[f64]) -> f64 {
    let nx = nlp.n_vars();
    let (_, jg) = nlp.equalities(x);
    let (h, jh) = nlp.inequalities(x);
    let mut jtj = DMatrix::<f64>::zeros(nx, nx);
    let mut add_row = |row: &SparseRow| {
        for &(a, va) in row {
            for &(b, vb) in row {
                jtj[(a, b)] += va * vb;
            }
        }
    };
    jg.iter().for_each(&mut add_row);
    for (j, row) in jh.iter().enumerate() {
        if mu[j] > -h[j] {
            add_row(row);
        }
    }
    let eig = SymmetricEigen::new(jtj);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1.0);
    let null: Vec<usize> = (0..nx).filter(|&i| eig.eigenvalues[i] < 1e-10 * top).collect();
    if null.is_empty() {
        return 0.0;
    }
    let z = eig.eigenvectors.select_columns(&null);
    let hess = nlp.lagrangian_hessian(x, lam, mu);
    let reduced = z.transpose() * hess * &z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    SymmetricEigen::new(reduced).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
