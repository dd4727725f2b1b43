use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::netmodel::{enforced_flow_limits, AdmittanceModel, Case, SparseHermitian};

/// What a block of the matrix variable represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockRole {
    /// `[[Re W, -Im W], [Im W, Re W]]`.
    Voltage,
    /// `[[1, P], [P, t]]` for a generator bus, so `t >= P^2`.
    CostEpigraph { gen: usize },
    /// `[[s, Re S, Im S], [Re S, s, 0], [Im S, 0, s]]` for one branch end.
    FlowLimit { branch: usize, forward: bool },
    /// Nonnegative slack and generation variables.
    Slacks,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub role: BlockRole,
    pub size: usize,
    pub diagonal: bool,
}

/// Entry of a symmetric matrix; `row <= col`, and an off-diagonal value stands
/// for both mirrored positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `sum_k A_k . X_k = rhs` over the blocks `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

/// Standard-form SDP `min C.X  s.t.  A_i.X = b_i,  X psd` for the relaxed OPF.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub n: usize,
    pub slack: usize,
    pub blocks: Vec<Block>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<LinearConstraint>,
    /// Constant $/hr not represented in `objective`.
    pub offset: f64,
    /// `objective` is the $/hr cost multiplied by this.
    pub scale: f64,
    /// Total generation capacity is below the total load on a network that
    /// cannot generate power, so the relaxation is infeasible.
    pub capacity_shortfall: bool,
}

const FIXED_TOL: f64 = 1e-10;

/// Upper-triangle entries of `k/2 [[Re M, -Im M], [Im M, Re M]]`, whose trace
/// with the embedded `W` is `k tr(M W)`.
fn embedded(m: &SparseHermitian, n: usize, k: f64) -> Vec<Entry> {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, v) in m.entries() {
        for (r, c, val) in [(i, j, v.re), (i + n, j + n, v.re), (i, j + n, -v.im), (i + n, j, v.im)] {
            if r <= c {
                *acc.entry((r, c)).or_default() += 0.5 * k * val;
            }
        }
    }
    acc.into_iter().filter(|(_, v)| *v != 0.0).map(|((row, col), value)| Entry { block: 0, row, col, value }).collect()
}

fn diag_entry(k: usize, n: usize) -> Vec<Entry> {
    vec![Entry { block: 0, row: k, col: k, value: 0.5 }, Entry { block: 0, row: k + n, col: k + n, value: 0.5 }]
}

struct Builder {
    lp_block: usize,
    n_slacks: usize,
    constraints: Vec<LinearConstraint>,
}

impl Builder {
    fn var(&mut self) -> usize {
        self.n_slacks += 1;
        self.n_slacks - 1
    }

    fn lp(&self, var: usize, value: f64) -> Entry {
        Entry { block: self.lp_block, row: var, col: var, value }
    }

    fn push(&mut self, entries: Vec<Entry>, rhs: f64) {
        self.constraints.push(LinearConstraint { entries, rhs });
    }

    /// `lo <= expr <= hi`. Returns the variable `expr - lo` when one is created.
    fn range(&mut self, expr: Vec<Entry>, lo: f64, hi: f64) -> Option<usize> {
        if lo.is_finite() && hi.is_finite() && hi - lo <= FIXED_TOL {
            self.push(expr, lo);
            return None;
        }
        let mut low_var = None;
        if lo.is_finite() {
            let s = self.var();
            let mut e = expr.clone();
            e.push(self.lp(s, -1.0));
            self.push(e, lo);
            low_var = Some(s);
            if hi.is_finite() {
                let u = self.var();
                let e = vec![self.lp(s, 1.0), self.lp(u, 1.0)];
                self.push(e, hi - lo);
            }
        } else if hi.is_finite() {
            let u = self.var();
            let mut e = expr;
            e.push(self.lp(u, 1.0));
            self.push(e, hi);
        }
        low_var
    }
}

fn passive(model: &AdmittanceModel) -> bool {
    let n = model.n();
    let mut total = DMatrix::<Complex64>::zeros(n, n);
    for h in &model.h {
        total += h.to_dense(n);
    }
    let eig = SymmetricEigen::new(total).eigenvalues;
    eig.iter().all(|&l| l >= -1e-10)
}

/// Semidefinite relaxation of the OPF: the rank-one constraint on `W = V V^H`
/// is replaced by `W` positive semidefinite.
///
/// Quadratic costs use 2x2 epigraph blocks weighted by `c2`; flow limits that can bind inside
/// the voltage box use 3x3 second-order blocks. Balance, generation and voltage
/// limits are linear in `W` with nonnegative slacks.
pub fn build_sdp(case: &Case, model: &AdmittanceModel) -> SdpProblem {
    let n = case.n_buses();
    let base = case.base_mva;
    let gens = case.gen_buses();
    let (pd, qd) = case.loads_pu();
    let limits = enforced_flow_limits(case, model);

    let mut blocks = vec![Block { role: BlockRole::Voltage, size: 2 * n, diagonal: false }];
    let mut epigraph = vec![None; gens.len()];
    for (g, gb) in gens.iter().enumerate() {
        if gb.cost.c2 > 0.0 && gb.p_max - gb.p_min > FIXED_TOL {
            epigraph[g] = Some(blocks.len());
            blocks.push(Block { role: BlockRole::CostEpigraph { gen: g }, size: 2, diagonal: false });
        }
    }
    let first_arrow = blocks.len();
    for l in &limits {
        blocks.push(Block {
            role: BlockRole::FlowLimit { branch: l.branch, forward: l.forward },
            size: 3,
            diagonal: false,
        });
    }
    let mut b = Builder { lp_block: blocks.len(), n_slacks: 0, constraints: Vec::new() };

    let mut gen_at = vec![None; n];
    for (g, gb) in gens.iter().enumerate() {
        gen_at[gb.bus] = Some(g);
    }
    let mut p_var = vec![None; gens.len()];
    for k in 0..n {
        let p_expr = embedded(&model.h[k], n, 1.0);
        let q_expr = embedded(&model.h_tilde[k], n, 1.0);
        match gen_at[k] {
            Some(g) => {
                let gb = &gens[g];
                p_var[g] = b.range(p_expr, gb.p_min - pd[k], gb.p_max - pd[k]);
                b.range(q_expr, gb.q_min - qd[k], gb.q_max - qd[k]);
            }
            None => {
                b.push(p_expr, -pd[k]);
                b.push(q_expr, -qd[k]);
            }
        }
    }
    for (k, bus) in case.buses.iter().enumerate() {
        let lo = if bus.v_min > 0.0 { bus.v_min * bus.v_min } else { f64::NEG_INFINITY };
        b.range(diag_entry(k, n), lo, bus.v_max * bus.v_max);
    }

    let mut objective = Vec::new();
    let mut offset = 0.0;
    for (g, gb) in gens.iter().enumerate() {
        let c2 = gb.cost.c2 * base * base;
        let c1 = gb.cost.c1 * base;
        let Some(p) = p_var[g] else {
            let pg = gb.p_min;
            offset += c2 * pg * pg + c1 * pg + gb.cost.c0;
            continue;
        };
        offset += c1 * gb.p_min + gb.cost.c0;
        if c1 != 0.0 {
            objective.push(b.lp(p, c1));
        }
        if let Some(blk) = epigraph[g] {
            b.push(vec![Entry { block: blk, row: 0, col: 0, value: 1.0 }], 1.0);
            b.push(vec![Entry { block: blk, row: 0, col: 1, value: 0.5 }, b.lp(p, -1.0)], gb.p_min);
            objective.push(Entry { block: blk, row: 1, col: 1, value: c2 });
        }
    }

    for (a, l) in limits.iter().enumerate() {
        let blk = first_arrow + a;
        let f = if l.forward { &model.f_fwd[l.branch] } else { &model.f_rev[l.branch] };
        let at = |row, col, value| Entry { block: blk, row, col, value };
        for d in 0..3 {
            b.push(vec![at(d, d, 1.0)], l.s_max);
        }
        b.push(vec![at(1, 2, 0.5)], 0.0);
        let mut re = embedded(&f.real_part(), n, -1.0);
        re.push(at(0, 1, 0.5));
        b.push(re, 0.0);
        let mut im = embedded(&f.imag_part(), n, -1.0);
        im.push(at(0, 2, 0.5));
        b.push(im, 0.0);
    }

    if b.n_slacks > 0 {
        blocks.push(Block { role: BlockRole::Slacks, size: b.n_slacks, diagonal: true });
    }

    let largest = objective.iter().fold(1.0_f64, |m, e| m.max(e.value.abs()));
    let scale = 1.0 / largest;
    for e in &mut objective {
        e.value *= scale;
    }
    let capacity: f64 = gens.iter().map(|g| g.p_max).sum();
    let load: f64 = pd.iter().sum();

    SdpProblem {
        n,
        slack: case.slack_index(),
        blocks,
        objective,
        constraints: b.constraints,
        offset,
        scale,
        capacity_shortfall: capacity < load - FIXED_TOL && passive(model),
    }
}

impl SdpProblem {
    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// The problem in SDPA sparse format (`.dat-s`).
    ///
    /// SDPA states the primal as `max F0.Y  s.t.  Fi.Y = ci, Y psd`, so the file
    /// carries `F0 = -C`, `Fi = A_i` and `c = b`. Its optimal value is minus the
    /// scaled objective here, without the constant offset.
    pub fn to_sdpa(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "\"OPF semidefinite relaxation: {} buses, scale {:e}, offset {:e}",
            self.n, self.scale, self.offset
        );
        let _ = writeln!(s, "{}", self.constraints.len());
        let _ = writeln!(s, "{}", self.blocks.len());
        let sizes: Vec<String> =
            self.blocks.iter().map(|b| if b.diagonal { format!("-{}", b.size) } else { b.size.to_string() }).collect();
        let _ = writeln!(s, "{}", sizes.join(" "));
        let rhs: Vec<String> = self.constraints.iter().map(|c| format!("{:e}", c.rhs)).collect();
        let _ = writeln!(s, "{}", rhs.join(" "));
        for e in &self.objective {
            let _ = writeln!(s, "0 {} {} {} {:e}", e.block + 1, e.row + 1, e.col + 1, -e.value);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                let _ = writeln!(s, "{} {} {} {} {:e}", i + 1, e.block + 1, e.row + 1, e.col + 1, e.value);
            }
        }
        s
    }
}
