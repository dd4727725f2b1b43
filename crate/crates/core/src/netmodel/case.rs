use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::NetError;

/// Bus role as read from a case file. Exactly one bus of a valid case is `Ref`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Ref,
}

/// A network bus. Loads are in MW/MVAr, voltage limits and shunts in per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

/// Generator limits in MW/MVAr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

/// Pi-model branch with an ideal transformer on the `from_bus` side.
///
/// `shift` is in degrees; `s_max` in MVA with 0 meaning unlimited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_sh: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub s_max: f64,
}

fn unit_tap() -> f64 {
    1.0
}

/// Quadratic generation cost `c2 P^2 + c1 P + c0` with P in MW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostPoly {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }
}

/// A complete OPF instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub costs: Vec<CostPoly>,
}

/// Generators at one bus, aggregated, in per unit.
///
/// Limits are summed; the cost is the cheapest of the bus's polynomials
/// evaluated at the midpoint of the aggregated active range.
#[derive(Clone, Debug, PartialEq)]
pub struct GenBus {
    /// Internal bus index.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostPoly,
}

impl Case {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to internal index.
    pub fn index_map(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Internal index of the angle-reference bus.
    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Ref).expect("validated case has a reference bus")
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.base_mva > 0.0) {
            return Err(NetError::Invalid(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(NetError::Invalid("case has no buses".into()));
        }
        let mut seen = HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(NetError::DuplicateBus(b.id));
            }
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(NetError::Invalid(format!(
                    "bus {}: voltage limits must satisfy 0 < v_min <= v_max (got {}, {})",
                    b.id, b.v_min, b.v_max
                )));
            }
        }
        let refs = self.buses.iter().filter(|b| b.kind == BusKind::Ref).count();
        if refs != 1 {
            return Err(NetError::Invalid(format!("expected exactly one reference bus, found {refs}")));
        }
        for g in &self.gens {
            if !seen.contains(&g.bus) {
                return Err(NetError::UnknownBus(g.bus));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(NetError::Invalid(format!("generator at bus {} has crossed limits", g.bus)));
            }
        }
        if self.costs.len() != self.gens.len() {
            return Err(NetError::Invalid(format!(
                "{} cost polynomials for {} generators",
                self.costs.len(),
                self.gens.len()
            )));
        }
        if let Some(c) = self.costs.iter().find(|c| c.c2 < 0.0) {
            return Err(NetError::Invalid(format!("non-convex cost with c2 = {}", c.c2)));
        }
        for (i, br) in self.branches.iter().enumerate() {
            for id in [br.from_bus, br.to_bus] {
                if !seen.contains(&id) {
                    return Err(NetError::UnknownBus(id));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(NetError::Invalid(format!("branch {i} is a self-loop at bus {}", br.from_bus)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(NetError::SingularBranch(i));
            }
            if !(br.tap > 0.0) {
                return Err(NetError::Invalid(format!("branch {i} has non-positive tap {}", br.tap)));
            }
        }
        Ok(())
    }

    /// Generators aggregated per bus, in internal bus order.
    pub fn gen_buses(&self) -> Vec<GenBus> {
        let index = self.index_map();
        let base = self.base_mva;
        let mut per_bus: Vec<Vec<usize>> = vec![Vec::new(); self.buses.len()];
        for (g, gen) in self.gens.iter().enumerate() {
            per_bus[index[&gen.bus]].push(g);
        }
        per_bus
            .into_iter()
            .enumerate()
            .filter(|(_, gs)| !gs.is_empty())
            .map(|(bus, gs)| {
                let sum = |f: fn(&Generator) -> f64| gs.iter().map(|&g| f(&self.gens[g])).sum::<f64>();
                let (p_min, p_max) = (sum(|g| g.p_min), sum(|g| g.p_max));
                let (q_min, q_max) = (sum(|g| g.q_min), sum(|g| g.q_max));
                let mid = 0.5 * (p_min + p_max);
                let cost = gs
                    .iter()
                    .map(|&g| self.costs[g])
                    .min_by(|a, b| a.eval(mid).total_cmp(&b.eval(mid)))
                    .expect("non-empty");
                GenBus { bus, p_min: p_min / base, p_max: p_max / base, q_min: q_min / base, q_max: q_max / base, cost }
            })
            .collect()
    }

    /// Per-bus generation limits in per unit, zero where a bus has no generator.
    pub fn bus_limits(&self) -> Vec<BusLimits> {
        let mut limits = vec![BusLimits::default(); self.buses.len()];
        for g in self.gen_buses() {
            limits[g.bus] = BusLimits { has_gen: true, p_min: g.p_min, p_max: g.p_max, q_min: g.q_min, q_max: g.q_max };
        }
        limits
    }

    /// Active and reactive loads in per unit.
    pub fn loads_pu(&self) -> (Vec<f64>, Vec<f64>) {
        let base = self.base_mva;
        self.buses.iter().map(|b| (b.p_load / base, b.q_load / base)).unzip()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_pmax_mw(&self) -> f64 {
        self.gens.iter().map(|g| g.p_max).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BusLimits {
    pub has_gen: bool,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}
