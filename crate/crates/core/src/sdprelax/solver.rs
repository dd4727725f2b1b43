use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::problem::SdpProblem;

/// Settings of the primal-dual path-following SDP solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Target for the relative gap and the scaled primal and dual residuals.
    pub tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { max_iter: 200, tol: 1e-8 }
    }
}

/// Accept a stalled solve whose measures are all below this.
const STALL_ACCEPT: f64 = 1e-7;

/// Block of a symmetric block-diagonal matrix.
#[derive(Clone, Debug)]
pub(crate) enum Mat {
    Dense(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl Mat {
    fn scaled_identity(size: usize, diagonal: bool, s: f64) -> Mat {
        if diagonal {
            Mat::Diag(DVector::from_element(size, s))
        } else {
            Mat::Dense(DMatrix::identity(size, size) * s)
        }
    }

    fn dot(&self, other: &Mat) -> f64 {
        match (self, other) {
            (Mat::Dense(a), Mat::Dense(b)) => a.dot(b),
            (Mat::Diag(a), Mat::Diag(b)) => a.dot(b),
            _ => unreachable!("block shapes differ"),
        }
    }

    fn axpy(&mut self, a: f64, x: &Mat) {
        match (self, x) {
            (Mat::Dense(s), Mat::Dense(x)) => *s += x * a,
            (Mat::Diag(s), Mat::Diag(x)) => *s += x * a,
            _ => unreachable!("block shapes differ"),
        }
    }

    fn add_entry(&mut self, r: usize, c: usize, v: f64) {
        match self {
            Mat::Dense(d) => {
                d[(r, c)] += v;
                if r != c {
                    d[(c, r)] += v;
                }
            }
            Mat::Diag(d) => d[r] += v,
        }
    }

    fn inverse(&self) -> Option<Mat> {
        match self {
            Mat::Dense(d) => Cholesky::new(d.clone()).map(|c| Mat::Dense(c.inverse())),
            Mat::Diag(d) => d.iter().all(|&v| v > 0.0).then(|| Mat::Diag(d.map(|v| 1.0 / v))),
        }
    }

    /// Largest `a` with `self + a d` positive semidefinite (infinite if unbounded).
    fn max_step(&self, d: &Mat) -> f64 {
        match (self, d) {
            (Mat::Dense(x), Mat::Dense(d)) => {
                let Some(chol) = Cholesky::<f64, Dyn>::new(x.clone()) else { return 0.0 };
                let l = chol.l();
                let Some(a) = l.solve_lower_triangular(d) else { return 0.0 };
                let Some(s) = l.solve_lower_triangular(&a.transpose()) else { return 0.0 };
                let s = (&s + s.transpose()) * 0.5;
                let min = s.symmetric_eigenvalues().min();
                if min < 0.0 {
                    -1.0 / min
                } else {
                    f64::INFINITY
                }
            }
            (Mat::Diag(x), Mat::Diag(d)) => x
                .iter()
                .zip(d.iter())
                .filter(|(_, &dv)| dv < 0.0)
                .map(|(&xv, &dv)| -xv / dv)
                .fold(f64::INFINITY, f64::min),
            _ => unreachable!("block shapes differ"),
        }
    }
}

pub(crate) type BlockMat = Vec<Mat>;

fn bdot(a: &BlockMat, b: &BlockMat) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn baxpy(s: &mut BlockMat, a: f64, x: &BlockMat) {
    s.iter_mut().zip(x).for_each(|(s, x)| s.axpy(a, x));
}

fn max_step(x: &BlockMat, d: &BlockMat) -> f64 {
    x.iter().zip(d).map(|(x, d)| x.max_step(d)).fold(f64::INFINITY, f64::min)
}

type Entries = Vec<(usize, usize, f64)>;

/// Constraint data with every symmetric entry listed in full.
struct Prepared {
    sizes: Vec<usize>,
    diagonal: Vec<bool>,
    /// Per constraint, the blocks it touches and its entries there.
    cons: Vec<Vec<(usize, Entries)>>,
    /// Per block, `(constraint, part)` pairs indexing into `cons`.
    touching: Vec<Vec<(usize, usize)>>,
    b: Vec<f64>,
    c: BlockMat,
}

impl Prepared {
    fn new(p: &SdpProblem) -> Prepared {
        let sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
        let diagonal: Vec<bool> = p.blocks.iter().map(|b| b.diagonal).collect();
        let mut touching = vec![Vec::new(); sizes.len()];
        let mut cons = Vec::with_capacity(p.constraints.len());
        for (i, con) in p.constraints.iter().enumerate() {
            let mut parts: Vec<(usize, Entries)> = Vec::new();
            for e in &con.entries {
                let k = match parts.iter().position(|(b, _)| *b == e.block) {
                    Some(k) => k,
                    None => {
                        parts.push((e.block, Vec::new()));
                        parts.len() - 1
                    }
                };
                parts[k].1.push((e.row, e.col, e.value));
                if e.row != e.col {
                    parts[k].1.push((e.col, e.row, e.value));
                }
            }
            for (k, (b, _)) in parts.iter().enumerate() {
                touching[*b].push((i, k));
            }
            cons.push(parts);
        }
        let mut prep =
            Prepared { sizes, diagonal, cons, touching, b: p.constraints.iter().map(|c| c.rhs).collect(), c: vec![] };
        prep.c = prep.zeros();
        for e in &p.objective {
            prep.c[e.block].add_entry(e.row, e.col, e.value);
        }
        prep
    }

    fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn zeros(&self) -> BlockMat {
        self.sizes.iter().zip(&self.diagonal).map(|(&s, &d)| Mat::scaled_identity(s, d, 0.0)).collect()
    }

    fn identity(&self, s: f64) -> BlockMat {
        self.sizes.iter().zip(&self.diagonal).map(|(&n, &d)| Mat::scaled_identity(n, d, s)).collect()
    }

    /// `A(X)`.
    fn apply(&self, x: &BlockMat) -> Vec<f64> {
        self.cons
            .iter()
            .map(|parts| {
                parts
                    .iter()
                    .map(|(b, ents)| match &x[*b] {
                        Mat::Dense(m) => ents.iter().map(|&(r, c, v)| v * m[(c, r)]).sum::<f64>(),
                        Mat::Diag(d) => ents.iter().map(|&(r, _, v)| v * d[r]).sum::<f64>(),
                    })
                    .sum()
            })
            .collect()
    }

    /// `sum_i y_i A_i`.
    fn adjoint(&self, y: &[f64]) -> BlockMat {
        let mut out = self.zeros();
        for (parts, &yi) in self.cons.iter().zip(y) {
            for (b, ents) in parts {
                match &mut out[*b] {
                    Mat::Dense(m) => ents.iter().for_each(|&(r, c, v)| m[(r, c)] += yi * v),
                    Mat::Diag(d) => ents.iter().for_each(|&(r, _, v)| d[r] += yi * v),
                }
            }
        }
        out
    }

    /// Schur complement `M_ij = tr(A_i X A_j Z^{-1})`.
    fn schur(&self, x: &BlockMat, zinv: &BlockMat) -> DMatrix<f64> {
        let m = self.cons.len();
        let mut out = DMatrix::<f64>::zeros(m, m);
        for (b, touch) in self.touching.iter().enumerate() {
            match (&x[b], &zinv[b]) {
                (Mat::Diag(xd), Mat::Diag(zd)) => {
                    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.sizes[b]];
                    for &(i, k) in touch {
                        for &(r, _, v) in &self.cons[i][k].1 {
                            by_row[r].push((i, v));
                        }
                    }
                    for (r, row) in by_row.iter().enumerate() {
                        let w = xd[r] * zd[r];
                        for &(i, vi) in row {
                            for &(j, vj) in row {
                                out[(i, j)] += w * vi * vj;
                            }
                        }
                    }
                }
                (Mat::Dense(xm), Mat::Dense(zm)) => {
                    let nb = self.sizes[b];
                    for &(i, k) in touch {
                        let ents = &self.cons[i][k].1;
                        let mut rows: Vec<usize> = ents.iter().map(|e| e.0).collect();
                        rows.sort_unstable();
                        rows.dedup();
                        // transposed rows of A_i X that are not identically zero
                        let mut xa = DMatrix::<f64>::zeros(nb, rows.len());
                        for &(r, c, v) in ents {
                            let p = rows.binary_search(&r).unwrap();
                            xa.column_mut(p).axpy(v, &xm.column(c), 1.0);
                        }
                        let t = zm.select_columns(&rows) * xa.transpose();
                        for &(j, kj) in touch {
                            out[(i, j)] += self.cons[j][kj].1.iter().map(|&(c, d, v)| v * t[(d, c)]).sum::<f64>();
                        }
                    }
                }
                _ => unreachable!("block shapes differ"),
            }
        }
        (&out + out.transpose()) * 0.5
    }
}

/// Solves `M dy = r`, by Cholesky when possible.
enum SchurSolver {
    Chol(Cholesky<f64, Dyn>),
    Lu(nalgebra::LU<f64, Dyn, Dyn>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<SchurSolver> {
        match Cholesky::new(m.clone()) {
            Some(c) => Some(SchurSolver::Chol(c)),
            None => {
                let lu = m.lu();
                lu.is_invertible().then_some(SchurSolver::Lu(lu))
            }
        }
    }

    fn solve(&self, r: &[f64]) -> Option<Vec<f64>> {
        let rhs = DVector::from_column_slice(r);
        let sol = match self {
            SchurSolver::Chol(c) => Some(c.solve(&rhs)),
            SchurSolver::Lu(lu) => lu.solve(&rhs),
        }?;
        sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Trouble,
}

pub(crate) struct RawSolution {
    pub x: BlockMat,
    /// Scaled primal and dual objectives.
    pub pobj: f64,
    pub dobj: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub outcome: Outcome,
}

/// `sigma_mu Z^{-1} - X - (Q + X R) Z^{-1}` per block, symmetrized.
fn newton_part(x: &BlockMat, zinv: &BlockMat, r: &BlockMat, q: Option<&BlockMat>, sigma_mu: f64) -> BlockMat {
    (0..x.len())
        .map(|b| match (&x[b], &zinv[b], &r[b]) {
            (Mat::Dense(x), Mat::Dense(zi), Mat::Dense(r)) => {
                let mut inner = x * r;
                if let Some(Mat::Dense(q)) = q.map(|q| &q[b]) {
                    inner += q;
                }
                let d = zi * sigma_mu - x - inner * zi;
                Mat::Dense((&d + d.transpose()) * 0.5)
            }
            (Mat::Diag(x), Mat::Diag(zi), Mat::Diag(r)) => {
                let mut inner = x.component_mul(r);
                if let Some(Mat::Diag(q)) = q.map(|q| &q[b]) {
                    inner += q;
                }
                Mat::Diag(zi * sigma_mu - x - inner.component_mul(zi))
            }
            _ => unreachable!("block shapes differ"),
        })
        .collect()
}

fn product(a: &BlockMat, b: &BlockMat) -> BlockMat {
    a.iter()
        .zip(b)
        .map(|(a, b)| match (a, b) {
            (Mat::Dense(a), Mat::Dense(b)) => Mat::Dense(a * b),
            (Mat::Diag(a), Mat::Diag(b)) => Mat::Diag(a.component_mul(b)),
            _ => unreachable!("block shapes differ"),
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Infeasible-start primal-dual interior point for
/// `min C.X  s.t.  A_i.X = b_i, X psd`, with HKM directions and Mehrotra
/// predictor-corrector steps.
pub(crate) fn solve_blocks(p: &SdpProblem, opts: &SdpOptions) -> RawSolution {
    let prep = Prepared::new(p);
    let m = prep.cons.len();
    let dim = prep.dim() as f64;
    let norm_b = norm(&prep.b);
    let norm_c = bdot(&prep.c, &prep.c).sqrt();
    let norm_a: Vec<f64> = prep
        .cons
        .iter()
        .map(|parts| norm(&parts.iter().flat_map(|(_, e)| e.iter().map(|t| t.2)).collect::<Vec<_>>()))
        .collect();
    let xi = (0..m).map(|i| (1.0 + prep.b[i].abs()) / (1.0 + norm_a[i])).fold(dim.sqrt().max(10.0), f64::max);
    let eta = norm_a.iter().fold(norm_c, |a, &b| a.max(b)).max(dim.sqrt()).max(10.0);

    let mut x = prep.identity(xi);
    let mut z = prep.identity(eta);
    let mut y = vec![0.0; m];

    let finish = |x: BlockMat, pobj: f64, dobj: f64, rel_gap: f64, it: usize, outcome: Outcome| RawSolution {
        x,
        pobj,
        dobj,
        rel_gap,
        iterations: it,
        outcome,
    };

    let mut it = 0;
    loop {
        let ax = prep.apply(&x);
        let rp: Vec<f64> = prep.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut rd = prep.c.clone();
        baxpy(&mut rd, -1.0, &z);
        baxpy(&mut rd, -1.0, &prep.adjoint(&y));
        let pobj = bdot(&prep.c, &x);
        let dobj = prep.b.iter().zip(&y).map(|(b, y)| b * y).sum::<f64>();
        let mu = bdot(&x, &z) / dim;
        let pinf = norm(&rp) / (1.0 + norm_b);
        let dinf = bdot(&rd, &rd).sqrt() / (1.0 + norm_c);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        log::trace!("sdp it={it} pobj={pobj:.8e} dobj={dobj:.8e} gap={rel_gap:.1e} pinf={pinf:.1e} dinf={dinf:.1e}");

        if pinf < opts.tol && dinf < opts.tol && rel_gap < opts.tol {
            return finish(x, pobj, dobj, rel_gap, it, Outcome::Optimal);
        }
        // an unbounded dual ray certifies primal infeasibility
        if dobj > 1e8 * (1.0 + norm_c) && dinf * (1.0 + norm_c) < 1e-6 * dobj {
            return finish(x, pobj, dobj, rel_gap, it, Outcome::Infeasible);
        }
        let stalled = |x: BlockMat, it| {
            let ok = pinf < STALL_ACCEPT && dinf < STALL_ACCEPT && rel_gap < STALL_ACCEPT;
            finish(x, pobj, dobj, rel_gap, it, if ok { Outcome::Optimal } else { Outcome::Trouble })
        };
        if it == opts.max_iter {
            return stalled(x, it);
        }

        let Some(zinv) = z.iter().map(Mat::inverse).collect::<Option<BlockMat>>() else {
            return stalled(x, it);
        };
        let Some(schur) = SchurSolver::new(prep.schur(&x, &zinv)) else {
            return stalled(x, it);
        };
        let direction = |sigma_mu: f64, q: Option<&BlockMat>| -> Option<(BlockMat, Vec<f64>, BlockMat)> {
            let g = newton_part(&x, &zinv, &rd, q, sigma_mu);
            let ag = prep.apply(&g);
            let rhs: Vec<f64> = rp.iter().zip(&ag).map(|(r, a)| r - a).collect();
            let dy = schur.solve(&rhs)?;
            let mut dz = rd.clone();
            baxpy(&mut dz, -1.0, &prep.adjoint(&dy));
            let dx = newton_part(&x, &zinv, &dz, q, sigma_mu);
            Some((dx, dy, dz))
        };

        let Some((dxa, _, dza)) = direction(0.0, None) else {
            return stalled(x, it);
        };
        let ap = max_step(&x, &dxa).min(1.0);
        let ad = max_step(&z, &dza).min(1.0);
        let mut xa = x.clone();
        baxpy(&mut xa, ap, &dxa);
        let mut za = z.clone();
        baxpy(&mut za, ad, &dza);
        let mu_aff = bdot(&xa, &za) / dim;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let q = product(&dxa, &dza);
        let Some((dx, dy, dz)) = direction(sigma * mu, Some(&q)) else {
            return stalled(x, it);
        };
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step(&x, &dx)).min(1.0);
        let ad = (gamma * max_step(&z, &dz)).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            return stalled(x, it);
        }
        baxpy(&mut x, ap, &dx);
        baxpy(&mut z, ad, &dz);
        y.iter_mut().zip(&dy).for_each(|(y, d)| *y += ad * d);
        it += 1;
    }
}
