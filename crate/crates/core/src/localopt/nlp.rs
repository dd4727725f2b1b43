use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::netmodel::{
    build_admittance, enforced_flow_limits, AdmittanceModel, Case, FlowLimit, GenBus, NetError, SparseHermitian,
};

/// Sparse gradient row.
pub type SparseRow = Vec<(usize, f64)>;

/// Value of `Re(V^H M V)` in polar coordinates, with its gradient and a weighted
/// Hessian accumulated into the leading `2n` block (`theta` first, then `|V|`).
pub(crate) fn polar_form(
    m: &SparseHermitian,
    theta: &[f64],
    vm: &[f64],
    mut grad: Option<&mut [f64]>,
    mut hess: Option<(&mut DMatrix<f64>, f64)>,
) -> f64 {
    let n = theta.len();
    let mut value = 0.0;
    for &(i, k, mik) in m.entries() {
        if i == k {
            let a = mik.re;
            value += vm[i] * vm[i] * a;
            if let Some(g) = grad.as_deref_mut() {
                g[n + i] += 2.0 * vm[i] * a;
            }
            if let Some((h, w)) = hess.as_mut() {
                h[(n + i, n + i)] += *w * 2.0 * a;
            }
            continue;
        }
        let rot = mik * Complex64::from_polar(1.0, theta[k] - theta[i]);
        let (c, cp) = (rot.re, -rot.im);
        let (vi, vk) = (vm[i], vm[k]);
        value += vi * vk * c;
        if let Some(g) = grad.as_deref_mut() {
            g[n + i] += vk * c;
            g[n + k] += vi * c;
            g[k] += vi * vk * cp;
            g[i] -= vi * vk * cp;
        }
        if let Some((h, w)) = hess.as_mut() {
            let w = *w;
            let (ti, tk, ui, uk) = (i, k, n + i, n + k);
            let mut add = |r: usize, s: usize, val: f64| {
                h[(r, s)] += w * val;
                h[(s, r)] += w * val;
            };
            add(ui, uk, c);
            add(ui, tk, vk * cp);
            add(ui, ti, -vk * cp);
            add(uk, tk, vi * cp);
            add(uk, ti, -vi * cp);
            add(ti, tk, vi * vk * c);
            h[(tk, tk)] -= w * vi * vk * c;
            h[(ti, ti)] -= w * vi * vk * c;
        }
    }
    value
}

struct FlowTerm {
    limit: FlowLimit,
    re: SparseHermitian,
    im: SparseHermitian,
}

/// Which side of a variable bound an inequality row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// The OPF as a smooth NLP in polar coordinates.
///
/// Variables are `[theta (n), |V| (n), P_G (ng), Q_G (ng)]` in per unit over
/// aggregated generator buses. Equalities are the active then reactive balance at
/// every bus, the reference angle, and any variable with equal bounds.
/// Inequalities are the enforced flow limits `|S|^2 <= s_max^2` followed by the
/// finite variable bounds.
pub struct OpfNlp {
    pub n: usize,
    pub gens: Vec<GenBus>,
    pub model: AdmittanceModel,
    pub slack: usize,
    /// Multiplies the $/hr cost inside the solver.
    pub obj_scale: f64,
    base: f64,
    pd: Vec<f64>,
    qd: Vec<f64>,
    gen_at: Vec<Option<usize>>,
    flows: Vec<FlowTerm>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<usize>,
    bounds: Vec<(usize, BoundSide)>,
}

const FIXED_TOL: f64 = 1e-10;

impl OpfNlp {
    pub fn new(case: &Case) -> Result<OpfNlp, NetError> {
        let model = build_admittance(case)?;
        Ok(Self::with_model(case, model))
    }

    pub fn with_model(case: &Case, model: AdmittanceModel) -> OpfNlp {
        let n = case.n_buses();
        let gens = case.gen_buses();
        let ng = gens.len();
        let base = case.base_mva;
        let (pd, qd) = case.loads_pu();
        let mut gen_at = vec![None; n];
        for (g, gb) in gens.iter().enumerate() {
            gen_at[gb.bus] = Some(g);
        }
        let flows = enforced_flow_limits(case, &model)
            .into_iter()
            .map(|limit| {
                let f = if limit.forward { &model.f_fwd[limit.branch] } else { &model.f_rev[limit.branch] };
                FlowTerm { limit, re: f.real_part(), im: f.imag_part() }
            })
            .collect();

        let nx = 2 * n + 2 * ng;
        let mut lower = vec![f64::NEG_INFINITY; nx];
        let mut upper = vec![f64::INFINITY; nx];
        for (k, b) in case.buses.iter().enumerate() {
            lower[n + k] = b.v_min;
            upper[n + k] = b.v_max;
        }
        for (g, gb) in gens.iter().enumerate() {
            lower[2 * n + g] = gb.p_min;
            upper[2 * n + g] = gb.p_max;
            lower[2 * n + ng + g] = gb.q_min;
            upper[2 * n + ng + g] = gb.q_max;
        }
        let mut fixed = Vec::new();
        let mut bounds = Vec::new();
        for j in 0..nx {
            if (upper[j] - lower[j]).abs() <= FIXED_TOL {
                fixed.push(j);
                continue;
            }
            if lower[j].is_finite() {
                bounds.push((j, BoundSide::Lower));
            }
            if upper[j].is_finite() {
                bounds.push((j, BoundSide::Upper));
            }
        }

        // bring marginal costs near one
        let max_grad = gens
            .iter()
            .map(|g| {
                let p = g.p_max.abs().max(g.p_min.abs()) * base;
                (2.0 * g.cost.c2 * p).abs() + g.cost.c1.abs()
            })
            .fold(0.0, f64::max);
        let obj_scale = 1.0 / (max_grad * base).max(1.0);

        OpfNlp {
            n,
            gens,
            model,
            slack: case.slack_index(),
            obj_scale,
            base,
            pd,
            qd,
            gen_at,
            flows,
            lower,
            upper,
            fixed,
            bounds,
        }
    }

    pub fn ng(&self) -> usize {
        self.gens.len()
    }

    pub fn n_vars(&self) -> usize {
        2 * self.n + 2 * self.ng()
    }

    pub fn n_eq(&self) -> usize {
        2 * self.n + 1 + self.fixed.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.flows.len() + self.bounds.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn flow_limits(&self) -> Vec<FlowLimit> {
        self.flows.iter().map(|f| f.limit).collect()
    }

    /// Inequality rows after the flow limits, as `(variable, side)`.
    pub fn bound_rows(&self) -> &[(usize, BoundSide)] {
        &self.bounds
    }

    pub fn pack(&self, v: &[Complex64], pg: &[f64], qg: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        x.extend(v.iter().map(|z| z.arg()));
        x.extend(v.iter().map(|z| z.norm()));
        x.extend_from_slice(pg);
        x.extend_from_slice(qg);
        x
    }

    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.n).map(|k| Complex64::from_polar(x[self.n + k], x[k])).collect()
    }

    pub fn pg<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[2 * self.n..2 * self.n + self.ng()]
    }

    pub fn qg<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[2 * self.n + self.ng()..]
    }

    /// Generation cost in $/hr (unscaled).
    pub fn cost(&self, x: &[f64]) -> f64 {
        self.gens.iter().zip(self.pg(x)).map(|(g, &p)| g.cost.eval(p * self.base)).sum()
    }

    /// Scaled objective and its gradient.
    pub fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_vars()];
        let off = 2 * self.n;
        for (g, gb) in self.gens.iter().enumerate() {
            let p = x[off + g] * self.base;
            grad[off + g] = self.obj_scale * self.base * (2.0 * gb.cost.c2 * p + gb.cost.c1);
        }
        (self.obj_scale * self.cost(x), grad)
    }

    /// Equality values and sparse Jacobian rows.
    pub fn equalities(&self, x: &[f64]) -> (Vec<f64>, Vec<SparseRow>) {
        let n = self.n;
        let ng = self.ng();
        let (theta, vm) = (&x[..n], &x[n..2 * n]);
        let mut g = Vec::with_capacity(self.n_eq());
        let mut rows = Vec::with_capacity(self.n_eq());
        let mut scratch = vec![0.0; 2 * n];
        for (forms, loads, off) in [(&self.model.h, &self.pd, 2 * n), (&self.model.h_tilde, &self.qd, 2 * n + ng)] {
            for k in 0..n {
                scratch.iter_mut().for_each(|s| *s = 0.0);
                let mut val = polar_form(&forms[k], theta, vm, Some(&mut scratch), None) + loads[k];
                let mut row: SparseRow =
                    scratch.iter().enumerate().filter(|&(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).collect();
                if let Some(gi) = self.gen_at[k] {
                    val -= x[off + gi];
                    row.push((off + gi, -1.0));
                }
                g.push(val);
                rows.push(row);
            }
        }
        g.push(theta[self.slack]);
        rows.push(vec![(self.slack, 1.0)]);
        for &j in &self.fixed {
            g.push(x[j] - self.lower[j]);
            rows.push(vec![(j, 1.0)]);
        }
        (g, rows)
    }

    /// Inequality values (`<= 0` when satisfied) and sparse Jacobian rows.
    pub fn inequalities(&self, x: &[f64]) -> (Vec<f64>, Vec<SparseRow>) {
        let n = self.n;
        let (theta, vm) = (&x[..n], &x[n..2 * n]);
        let mut h = Vec::with_capacity(self.n_ineq());
        let mut rows = Vec::with_capacity(self.n_ineq());
        let mut ga = vec![0.0; 2 * n];
        let mut gb = vec![0.0; 2 * n];
        for f in &self.flows {
            ga.iter_mut().for_each(|s| *s = 0.0);
            gb.iter_mut().for_each(|s| *s = 0.0);
            let a = polar_form(&f.re, theta, vm, Some(&mut ga), None);
            let b = polar_form(&f.im, theta, vm, Some(&mut gb), None);
            h.push(a * a + b * b - f.limit.s_max * f.limit.s_max);
            rows.push(
                (0..2 * n)
                    .filter(|&j| ga[j] != 0.0 || gb[j] != 0.0)
                    .map(|j| (j, 2.0 * a * ga[j] + 2.0 * b * gb[j]))
                    .collect(),
            );
        }
        for &(j, side) in &self.bounds {
            match side {
                BoundSide::Lower => {
                    h.push(self.lower[j] - x[j]);
                    rows.push(vec![(j, -1.0)]);
                }
                BoundSide::Upper => {
                    h.push(x[j] - self.upper[j]);
                    rows.push(vec![(j, 1.0)]);
                }
            }
        }
        (h, rows)
    }

    /// Scaled Lagrangian `f + lam^T g + mu^T h`.
    pub fn lagrangian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> f64 {
        let (f, _) = self.objective(x);
        let (g, _) = self.equalities(x);
        let (h, _) = self.inequalities(x);
        f + dot(lam, &g) + dot(mu, &h)
    }

    pub fn lagrangian_gradient(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Vec<f64> {
        let (_, mut grad) = self.objective(x);
        let (_, jg) = self.equalities(x);
        let (_, jh) = self.inequalities(x);
        add_transpose_product(&jg, lam, &mut grad);
        add_transpose_product(&jh, mu, &mut grad);
        grad
    }

    /// Dense Hessian of the scaled Lagrangian.
    pub fn lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let nx = self.n_vars();
        let (theta, vm) = (&x[..n], &x[n..2 * n]);
        let mut hess = DMatrix::zeros(nx, nx);
        for (g, gb) in self.gens.iter().enumerate() {
            hess[(2 * n + g, 2 * n + g)] += self.obj_scale * 2.0 * gb.cost.c2 * self.base * self.base;
        }
        let combined = SparseHermitian::from_triplets((0..n).flat_map(|k| {
            let (lp, lq) = (lam[k], lam[n + k]);
            self.model.h[k]
                .entries()
                .iter()
                .map(move |&(i, j, v)| (i, j, v * lp))
                .chain(self.model.h_tilde[k].entries().iter().map(move |&(i, j, v)| (i, j, v * lq)))
        }));
        polar_form(&combined, theta, vm, None, Some((&mut hess, 1.0)));

        let mut ga = vec![0.0; 2 * n];
        let mut gb = vec![0.0; 2 * n];
        for (f, &m) in self.flows.iter().zip(mu) {
            if m == 0.0 {
                continue;
            }
            ga.iter_mut().for_each(|s| *s = 0.0);
            gb.iter_mut().for_each(|s| *s = 0.0);
            let a = polar_form(&f.re, theta, vm, Some(&mut ga), None);
            let b = polar_form(&f.im, theta, vm, Some(&mut gb), None);
            polar_form(&f.re, theta, vm, None, Some((&mut hess, 2.0 * m * a)));
            polar_form(&f.im, theta, vm, None, Some((&mut hess, 2.0 * m * b)));
            let nz: Vec<usize> = (0..2 * n).filter(|&j| ga[j] != 0.0 || gb[j] != 0.0).collect();
            for &r in &nz {
                for &s in &nz {
                    hess[(r, s)] += 2.0 * m * (ga[r] * ga[s] + gb[r] * gb[s]);
                }
            }
        }
        hess
    }
}

/// Largest disagreement between analytic derivatives and central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeCheck {
    pub gradient: f64,
    pub hessian: f64,
}

impl OpfNlp {
    /// Compare the Lagrangian gradient and Hessian at `x` with central differences
    /// of step `step`. Errors are relative, `|fd - exact| / max(1, |exact|)`.
    pub fn check_derivatives(&self, x: &[f64], lam: &[f64], mu: &[f64], step: f64) -> DerivativeCheck {
        let grad = self.lagrangian_gradient(x, lam, mu);
        let hess = self.lagrangian_hessian(x, lam, mu);
        let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
        let mut out = DerivativeCheck { gradient: 0.0, hessian: 0.0 };
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            xp[j] = x[j] + step;
            let (lp, gp) = (self.lagrangian(&xp, lam, mu), self.lagrangian_gradient(&xp, lam, mu));
            xp[j] = x[j] - step;
            let (lm, gm) = (self.lagrangian(&xp, lam, mu), self.lagrangian_gradient(&xp, lam, mu));
            xp[j] = x[j];
            out.gradient = out.gradient.max(rel((lp - lm) / (2.0 * step), grad[j]));
            for i in 0..x.len() {
                out.hessian = out.hessian.max(rel((gp[i] - gm[i]) / (2.0 * step), hess[(i, j)]));
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += J^T w` for sparse rows `J`.
pub(crate) fn add_transpose_product(rows: &[SparseRow], w: &[f64], out: &mut [f64]) {
    for (row, &wi) in rows.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        for &(j, v) in row {
            out[j] += wi * v;
        }
    }
}
