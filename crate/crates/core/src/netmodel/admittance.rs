use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::Case;
use super::hermitian::SparseHermitian;
use super::NetError;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Branch-end flow matrix `F` with nonzeros at `(from, from)` and `(to, from)`,
/// so that `tr(F V V^H)` is the complex power leaving `from` into the branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchFlow {
    pub from: usize,
    pub to: usize,
    pub self_coef: Complex64,
    pub mutual_coef: Complex64,
}

impl BranchFlow {
    /// Complex power `S` entering the branch at `from`.
    pub fn power(&self, v: &[Complex64]) -> Complex64 {
        let vl = v[self.from];
        self.self_coef * vl.norm_sqr() + self.mutual_coef * v[self.to].conj() * vl
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(n, n);
        d[(self.from, self.from)] += self.self_coef;
        d[(self.to, self.from)] += self.mutual_coef;
        d
    }

    /// `(F + F^H) / 2`, whose quadratic form is `Re S`.
    pub fn real_part(&self) -> SparseHermitian {
        let (l, m) = (self.from, self.to);
        SparseHermitian::from_triplets([
            (l, l, Complex64::new(self.self_coef.re, 0.0)),
            (m, l, self.mutual_coef * 0.5),
            (l, m, self.mutual_coef.conj() * 0.5),
        ])
    }

    /// `j (F^H - F) / 2`, whose quadratic form is `Im S`.
    pub fn imag_part(&self) -> SparseHermitian {
        let (l, m) = (self.from, self.to);
        SparseHermitian::from_triplets([
            (l, l, Complex64::new(self.self_coef.im, 0.0)),
            (m, l, J * (-self.mutual_coef) * 0.5),
            (l, m, J * self.mutual_coef.conj() * 0.5),
        ])
    }
}

/// Bus admittance matrix and the lifted matrices of the OPF formulation.
#[derive(Clone, Debug)]
pub struct AdmittanceModel {
    pub y_bus: DMatrix<Complex64>,
    /// `H_k`: `tr(H_k W)` is the net active injection at bus `k`.
    pub h: Vec<SparseHermitian>,
    /// `H~_k`: `tr(H~_k W)` is the net reactive injection at bus `k`.
    pub h_tilde: Vec<SparseHermitian>,
    pub f_fwd: Vec<BranchFlow>,
    pub f_rev: Vec<BranchFlow>,
}

impl AdmittanceModel {
    pub fn n(&self) -> usize {
        self.y_bus.nrows()
    }

    /// Complex power injections `V .* conj(Y V)`.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        (0..n)
            .map(|k| {
                let i_k: Complex64 = (0..n).map(|m| self.y_bus[(k, m)] * v[m]).sum();
                v[k] * i_k.conj()
            })
            .collect()
    }
}

/// One enforced apparent-power limit at a branch end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowLimit {
    pub branch: usize,
    pub forward: bool,
    /// Per unit.
    pub s_max: f64,
}

/// Flow limits that the voltage bounds alone do not already imply.
///
/// A limit is dropped when `|self| Vmax_l^2 + |mutual| Vmax_l Vmax_m <= s_max`,
/// which bounds `|S|` at every voltage inside the magnitude limits.
pub fn enforced_flow_limits(case: &Case, model: &AdmittanceModel) -> Vec<FlowLimit> {
    let mut out = Vec::new();
    for (i, br) in case.branches.iter().enumerate() {
        if br.s_max <= 0.0 {
            continue;
        }
        let s_max = br.s_max / case.base_mva;
        for (forward, f) in [(true, &model.f_fwd[i]), (false, &model.f_rev[i])] {
            let (vl, vm) = (case.buses[f.from].v_max, case.buses[f.to].v_max);
            if f.self_coef.norm() * vl * vl + f.mutual_coef.norm() * vl * vm > s_max {
                out.push(FlowLimit { branch: i, forward, s_max });
            }
        }
    }
    out
}

pub fn build_admittance(case: &Case) -> Result<AdmittanceModel, NetError> {
    let n = case.n_buses();
    let index = case.index_map();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let mut f_fwd = Vec::with_capacity(case.branches.len());
    let mut f_rev = Vec::with_capacity(case.branches.len());

    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.shunt_g, bus.shunt_b);
    }
    for (i, br) in case.branches.iter().enumerate() {
        let z = Complex64::new(br.r, br.x);
        if z.norm_sqr() == 0.0 {
            return Err(NetError::SingularBranch(i));
        }
        let l = *index.get(&br.from_bus).ok_or(NetError::UnknownBus(br.from_bus))?;
        let m = *index.get(&br.to_bus).ok_or(NetError::UnknownBus(br.to_bus))?;
        let ys = z.inv();
        let half_b = J * (br.b_sh / 2.0);
        let tau = br.tap;
        let rot = Complex64::from_polar(1.0, br.shift.to_radians());

        // I_l = (ys + jb/2)/tau^2 V_l - ys/(tau e^{j theta}) V_m
        // I_m = (ys + jb/2) V_m - ys/(tau e^{-j theta}) V_l
        let y_ll = (ys + half_b) / (tau * tau);
        let y_lm = -ys / (rot * tau);
        let y_ml = -ys / (rot.conj() * tau);
        let y_mm = ys + half_b;
        y[(l, l)] += y_ll;
        y[(l, m)] += y_lm;
        y[(m, l)] += y_ml;
        y[(m, m)] += y_mm;

        f_fwd.push(BranchFlow { from: l, to: m, self_coef: y_ll.conj(), mutual_coef: y_lm.conj() });
        f_rev.push(BranchFlow { from: m, to: l, self_coef: y_mm.conj(), mutual_coef: y_ml.conj() });
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut h = Vec::with_capacity(n);
    let mut h_tilde = Vec::with_capacity(n);
    for k in 0..n {
        let row: Vec<(usize, Complex64)> = (0..n).map(|j| (j, y[(k, j)])).filter(|&(_, v)| v != zero).collect();
        // (Y^H e_k e_k^T + e_k e_k^T Y) / 2
        h.push(SparseHermitian::from_triplets(
            row.iter().flat_map(|&(j, v)| [(j, k, v.conj() * 0.5), (k, j, v * 0.5)]),
        ));
        // (Y^H e_k e_k^T - e_k e_k^T Y) / 2j
        h_tilde.push(SparseHermitian::from_triplets(
            row.iter().flat_map(|&(j, v)| [(j, k, v.conj() / (J * 2.0)), (k, j, -v / (J * 2.0))]),
        ));
    }

    Ok(AdmittanceModel { y_bus: y, h, h_tilde, f_fwd, f_rev })
}
