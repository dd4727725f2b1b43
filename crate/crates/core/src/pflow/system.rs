use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PfError;
use crate::netmodel::{AdmittanceModel, BusKind, Case, SparseHermitian};

/// Role and fixed quantities of one bus in a power flow problem (per unit).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BusRole {
    /// Fixed magnitude, zero angle.
    Slack { vm: f64 },
    /// Fixed net active injection and voltage magnitude.
    Pv { p: f64, vm: f64 },
    /// Fixed net active and reactive injection.
    Pq { p: f64, q: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSpec {
    pub roles: Vec<BusRole>,
}

impl PowerFlowSpec {
    /// Spec with the case's loads, the slack at the reference bus and every other
    /// generator bus PV.
    ///
    /// `vm_set[k]` is the voltage setpoint of generator bus `k` and `pg_set[k]`
    /// its active generation; both are ignored at buses without generators, and
    /// `pg_set` is ignored at the slack.
    pub fn from_setpoints(case: &Case, vm_set: &[f64], pg_set: &[f64]) -> PowerFlowSpec {
        let (pd, qd) = case.loads_pu();
        let limits = case.bus_limits();
        let roles = case
            .buses
            .iter()
            .enumerate()
            .map(|(k, bus)| {
                if bus.kind == BusKind::Ref {
                    BusRole::Slack { vm: vm_set[k] }
                } else if limits[k].has_gen {
                    BusRole::Pv { p: pg_set[k] - pd[k], vm: vm_set[k] }
                } else {
                    BusRole::Pq { p: -pd[k], q: -qd[k] }
                }
            })
            .collect();
        PowerFlowSpec { roles }
    }

    pub fn slack(&self) -> Option<usize> {
        self.roles.iter().position(|r| matches!(r, BusRole::Slack { .. }))
    }
}

/// `sum quad_ab x_a x_b + sum lin_a x_a + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadPoly {
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadPoly {
    pub fn degree(&self) -> usize {
        if !self.quad.is_empty() {
            2
        } else if !self.lin.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn eval<T>(&self, x: &[T]) -> T
    where
        T: Copy + Add<Output = T> + Mul<Output = T> + Mul<f64, Output = T> + From<f64>,
    {
        let mut acc = T::from(self.constant);
        for &(a, c) in &self.lin {
            acc = acc + x[a] * c;
        }
        for &(a, b, c) in &self.quad {
            acc = acc + x[a] * x[b] * c;
        }
        acc
    }

    /// Adds the gradient of this polynomial at `x` into `row`.
    pub fn add_gradient<T>(&self, x: &[T], row: &mut [T])
    where
        T: Copy + Add<Output = T> + Mul<Output = T> + Mul<f64, Output = T> + From<f64>,
    {
        for &(a, c) in &self.lin {
            row[a] = row[a] + T::from(c);
        }
        for &(a, b, c) in &self.quad {
            if a == b {
                row[a] = row[a] + x[a] * (2.0 * c);
            } else {
                row[a] = row[a] + x[b] * c;
                row[b] = row[b] + x[a] * c;
            }
        }
    }
}

#[derive(Default)]
struct PolyBuilder {
    quad: BTreeMap<(usize, usize), f64>,
    lin: BTreeMap<usize, f64>,
    constant: f64,
}

#[derive(Clone, Copy)]
enum Comp {
    Var(usize),
    Const(f64),
}

impl PolyBuilder {
    fn add_product(&mut self, c: f64, a: Comp, b: Comp) {
        if c == 0.0 {
            return;
        }
        match (a, b) {
            (Comp::Var(i), Comp::Var(j)) => *self.quad.entry((i.min(j), i.max(j))).or_default() += c,
            (Comp::Var(i), Comp::Const(k)) | (Comp::Const(k), Comp::Var(i)) => *self.lin.entry(i).or_default() += c * k,
            (Comp::Const(k), Comp::Const(l)) => self.constant += c * k * l,
        }
    }

    /// Adds `v^H M v` expanded in rectangular components.
    fn add_hermitian_form(&mut self, m: &SparseHermitian, comps: &[(Comp, Comp)], scale: f64) {
        for &(i, j, mij) in m.entries() {
            let (ei, fi) = comps[i];
            let (ej, fj) = comps[j];
            let (a, b) = (mij.re * scale, mij.im * scale);
            // Re[(e_i - j f_i)(a + j b)(e_j + j f_j)]
            self.add_product(a, ei, ej);
            self.add_product(a, fi, fj);
            self.add_product(-b, ei, fj);
            self.add_product(b, fi, ej);
        }
    }

    fn finish(self) -> QuadPoly {
        QuadPoly {
            quad: self.quad.into_iter().filter(|&(_, c)| c != 0.0).map(|((a, b), c)| (a, b, c)).collect(),
            lin: self.lin.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }
}

/// Power flow as polynomial equations in the rectangular coordinates of the
/// non-slack bus voltages: `x[2i] = Re V`, `x[2i+1] = Im V` of `unknown_buses[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSystem {
    pub eqs: Vec<QuadPoly>,
    pub n_buses: usize,
    pub slack: usize,
    pub slack_voltage: Complex64,
    pub unknown_buses: Vec<usize>,
}

impl QuadraticSystem {
    pub fn n_vars(&self) -> usize {
        2 * self.unknown_buses.len()
    }

    pub fn residual<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Add<Output = T> + Mul<Output = T> + Mul<f64, Output = T> + From<f64>,
    {
        self.eqs.iter().map(|e| e.eval(x)).collect()
    }

    /// Dense row-major Jacobian.
    pub fn jacobian<T>(&self, x: &[T]) -> Vec<Vec<T>>
    where
        T: Copy + Add<Output = T> + Mul<Output = T> + Mul<f64, Output = T> + From<f64>,
    {
        let n = self.n_vars();
        self.eqs
            .iter()
            .map(|e| {
                let mut row = vec![T::from(0.0); n];
                e.add_gradient(x, &mut row);
                row
            })
            .collect()
    }

    /// Full complex voltage vector (slack included) from real unknowns.
    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.n_buses];
        v[self.slack] = self.slack_voltage;
        for (i, &k) in self.unknown_buses.iter().enumerate() {
            v[k] = Complex64::new(x[2 * i], x[2 * i + 1]);
        }
        v
    }

    /// Real unknowns from a full voltage vector.
    pub fn unknowns(&self, v: &[Complex64]) -> Vec<f64> {
        self.unknown_buses.iter().flat_map(|&k| [v[k].re, v[k].im]).collect()
    }
}

/// Assemble the power flow equations for `spec` on the network `model`.
///
/// PQ buses contribute active and reactive balance; PV buses active balance and
/// `|V_k|^2 = vm^2`.
pub fn build_system(case: &Case, model: &AdmittanceModel, spec: &PowerFlowSpec) -> Result<QuadraticSystem, PfError> {
    let n = case.n_buses();
    if spec.roles.len() != n || model.n() != n {
        return Err(PfError::SpecMismatch(format!(
            "spec has {} buses, case {}, admittance model {}",
            spec.roles.len(),
            n,
            model.n()
        )));
    }
    let slacks: Vec<usize> = (0..n).filter(|&k| matches!(spec.roles[k], BusRole::Slack { .. })).collect();
    if slacks.len() != 1 {
        return Err(PfError::SpecMismatch(format!("expected one slack bus, found {}", slacks.len())));
    }
    let slack = slacks[0];
    let BusRole::Slack { vm: slack_vm } = spec.roles[slack] else { unreachable!() };
    let slack_voltage = Complex64::new(slack_vm, 0.0);

    let unknown_buses: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
    let mut comps = vec![(Comp::Const(0.0), Comp::Const(0.0)); n];
    comps[slack] = (Comp::Const(slack_vm), Comp::Const(0.0));
    for (i, &k) in unknown_buses.iter().enumerate() {
        comps[k] = (Comp::Var(2 * i), Comp::Var(2 * i + 1));
    }

    let mut eqs = Vec::with_capacity(2 * unknown_buses.len());
    for &k in &unknown_buses {
        match spec.roles[k] {
            BusRole::Pq { p, q } => {
                let mut bp = PolyBuilder::default();
                bp.add_hermitian_form(&model.h[k], &comps, 1.0);
                bp.constant -= p;
                eqs.push(bp.finish());
                let mut bq = PolyBuilder::default();
                bq.add_hermitian_form(&model.h_tilde[k], &comps, 1.0);
                bq.constant -= q;
                eqs.push(bq.finish());
            }
            BusRole::Pv { p, vm } => {
                let mut bp = PolyBuilder::default();
                bp.add_hermitian_form(&model.h[k], &comps, 1.0);
                bp.constant -= p;
                eqs.push(bp.finish());
                let mut bv = PolyBuilder::default();
                bv.add_product(1.0, comps[k].0, comps[k].0);
                bv.add_product(1.0, comps[k].1, comps[k].1);
                bv.constant -= vm * vm;
                eqs.push(bv.finish());
            }
            BusRole::Slack { .. } => unreachable!(),
        }
    }
    Ok(QuadraticSystem { eqs, n_buses: n, slack, slack_voltage, unknown_buses })
}
