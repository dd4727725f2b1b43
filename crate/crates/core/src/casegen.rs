//! Random small OPF cases: spanning-tree topologies with extra lines, Gaussian
//! line, generator and load parameters, and a capacity prescreen.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{Branch, Bus, BusKind, Case, CostPoly, Generator};

#[derive(Debug, Error, PartialEq)]
pub enum CaseGenError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("unknown case family `{0}` (expected 3-acyclic, 3-cyclic, 4 or 5)")]
    UnknownFamily(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, sd: f64) -> Gaussian {
        Gaussian { mean, sd }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.sd).expect("validated").sample(rng)
    }
}

/// Parameter columns of the random-case experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    ThreeBusAcyclic,
    ThreeBusCyclic,
    FourBus,
    FiveBus,
}

impl FromStr for Family {
    type Err = CaseGenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "3-acyclic" | "3" => Ok(Family::ThreeBusAcyclic),
            "3-cyclic" => Ok(Family::ThreeBusCyclic),
            "4" => Ok(Family::FourBus),
            "5" => Ok(Family::FiveBus),
            _ => Err(CaseGenError::UnknownFamily(s.to_string())),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::ThreeBusAcyclic => "3-acyclic",
            Family::ThreeBusCyclic => "3-cyclic",
            Family::FourBus => "4",
            Family::FiveBus => "5",
        })
    }
}

/// Sampling distributions. Line data in per unit on `base_mva`, angles in
/// degrees, powers in MW/MVAr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n_buses: usize,
    pub base_mva: f64,
    pub r: Gaussian,
    pub x: Gaussian,
    pub b: Gaussian,
    pub tau: Gaussian,
    pub theta: Gaussian,
    pub p_max: Gaussian,
    pub p_min: Gaussian,
    pub q_max: Gaussian,
    pub q_min: Gaussian,
    pub p_d: Gaussian,
    pub q_d: Gaussian,
    pub transformer_prob: f64,
    pub generator_prob: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Uniform range of `c2` in $/(MW^2 h).
    pub c2: (f64, f64),
    /// Uniform range of `c1` in $/(MW h).
    pub c1: (f64, f64),
}

impl GenerationParams {
    pub fn family(family: Family) -> GenerationParams {
        let g = Gaussian::new;
        let base = GenerationParams {
            n_buses: 3,
            base_mva: 100.0,
            r: g(0.40, 0.05),
            x: g(0.44, 0.01),
            b: g(0.45, 0.01),
            tau: g(1.0, 0.0),
            theta: g(0.0, 0.0),
            p_max: g(220.0, 2.0),
            p_min: g(0.0, 0.0),
            q_max: g(110.0, 2.0),
            q_min: g(-26.0, 1.0),
            p_d: g(30.0, 5.0),
            q_d: g(10.0, 1.0),
            transformer_prob: 0.08,
            generator_prob: 0.30,
            v_min: 0.81,
            v_max: 1.21,
            c2: (0.05, 1.0),
            c1: (10.0, 70.0),
        };
        match family {
            Family::ThreeBusAcyclic => base,
            Family::ThreeBusCyclic => GenerationParams {
                r: g(0.43, 0.02),
                x: g(0.46, 0.01),
                b: g(0.43, 0.01),
                p_max: g(200.0, 1.0),
                q_max: g(100.0, 2.0),
                q_min: g(-25.0, 1.0),
                p_d: g(39.0, 0.0),
                q_d: g(20.0, 1.0),
                v_min: 0.90,
                v_max: 1.10,
                ..base
            },
            Family::FourBus => GenerationParams {
                n_buses: 4,
                r: g(0.37, 0.02),
                x: g(0.38, 0.02),
                b: g(0.38, 0.02),
                tau: g(0.0, 0.0),
                p_max: g(24.0, 1.0),
                p_min: g(23.0, 1.0),
                q_max: g(57.0, 2.0),
                q_min: g(-54.0, 1.0),
                p_d: g(23.0, 3.0),
                q_d: g(16.0, 3.0),
                v_min: 0.90,
                v_max: 1.10,
                ..base
            },
            Family::FiveBus => GenerationParams {
                n_buses: 5,
                r: g(0.25, 0.01),
                x: g(0.44, 0.01),
                b: g(0.22, 0.02),
                tau: g(1.0, 0.01),
                theta: g(0.0, 3.0),
                p_max: g(5000.0, 5.0),
                p_min: g(100.0, 2.0),
                q_max: g(1800.0, 5.0),
                q_min: g(-30.0, 1.0),
                p_d: g(95.0, 5.0),
                q_d: g(14.0, 1.0),
                v_min: 0.90,
                v_max: 1.10,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), CaseGenError> {
        let bad = |name, msg: String| Err(CaseGenError::Param { name, msg });
        if self.n_buses < 2 {
            return bad("n_buses", format!("need at least 2 buses, got {}", self.n_buses));
        }
        let gaussians = [
            ("r", self.r),
            ("x", self.x),
            ("b", self.b),
            ("tau", self.tau),
            ("theta", self.theta),
            ("p_max", self.p_max),
            ("p_min", self.p_min),
            ("q_max", self.q_max),
            ("q_min", self.q_min),
            ("p_d", self.p_d),
            ("q_d", self.q_d),
        ];
        for (name, d) in gaussians {
            if !(d.sd >= 0.0 && d.sd.is_finite() && d.mean.is_finite()) {
                return bad(name, format!("mean {} and sd {} must be finite with sd >= 0", d.mean, d.sd));
            }
        }
        for (name, p) in [("transformer_prob", self.transformer_prob), ("generator_prob", self.generator_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(name, format!("probability {p} outside [0, 1]"));
            }
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max) {
            return bad("v_min", format!("need 0 < v_min <= v_max, got {} and {}", self.v_min, self.v_max));
        }
        for (name, (lo, hi)) in [("c2", self.c2), ("c1", self.c1)] {
            if !(lo <= hi) || (name == "c2" && lo < 0.0) {
                return bad(name, format!("bad range [{lo}, {hi}]"));
            }
        }
        if !(self.base_mva > 0.0) {
            return bad("base_mva", format!("must be positive, got {}", self.base_mva));
        }
        Ok(())
    }
}

/// Uniform random spanning tree on buses `1..=n` by the random-walk method:
/// walk until every bus is visited, keeping the edge of each first entrance.
pub fn random_spanning_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<(u32, u32)> {
    let mut visited = vec![false; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return edges;
    }
    let mut at = rng.random_range(0..n);
    visited[at] = true;
    while edges.len() + 1 < n {
        let next = rng.random_range(0..n - 1);
        let next = if next >= at { next + 1 } else { next };
        if !visited[next] {
            visited[next] = true;
            let (a, b) = (at.min(next), at.max(next));
            edges.push((a as u32 + 1, b as u32 + 1));
        }
        at = next;
    }
    edges
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Accepted,
    /// Total generation capacity is below total load.
    InsufficientCapacity {
        capacity_mw: f64,
        load_mw: f64,
    },
    /// Sampled data violates a case invariant.
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCase {
    pub case: Case,
    pub verdict: Verdict,
    /// True when no bus was drawn as a generator and one was assigned.
    pub fallback_generator: bool,
}

impl GeneratedCase {
    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    pub fn accepted(self) -> Option<Case> {
        self.is_accepted().then_some(self.case)
    }
}

const REDRAWS: usize = 10;

/// Draw `(lo, hi)` so that `lo <= hi`, redrawing `lo` a few times and then
/// clamping it.
fn ordered_pair<R: Rng>(lo: &Gaussian, hi: &Gaussian, rng: &mut R) -> (f64, f64) {
    let h = hi.sample(rng);
    let mut l = lo.sample(rng);
    for _ in 0..REDRAWS {
        if l <= h {
            return (l, h);
        }
        l = lo.sample(rng);
    }
    (l.min(h), h)
}

/// Random case from `params`, drawn from stream `index` of `seed`.
pub fn generate_indexed(params: &GenerationParams, seed: u64, index: u64) -> Result<GeneratedCase, CaseGenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let rng = &mut rng;
    let n = params.n_buses;

    let mut ends = random_spanning_tree(n, rng);
    let max_extra = n * (n - 1) / 2 - (n - 1);
    let extra = rng.random_range(0..=max_extra);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = (a + 1 + rng.random_range(0..n - 1)) % n;
        ends.push((a.min(b) as u32 + 1, a.max(b) as u32 + 1));
    }
    let branches = ends
        .into_iter()
        .map(|(from_bus, to_bus)| {
            let r = params.r.sample(rng).max(0.0);
            let x = params.x.sample(rng);
            let b_sh = params.b.sample(rng);
            let (tap, shift) = if rng.random_bool(params.transformer_prob) {
                let tau = params.tau.sample(rng);
                (if tau <= 0.0 { 0.9 } else { tau }, params.theta.sample(rng))
            } else {
                (1.0, 0.0)
            };
            Branch { from_bus, to_bus, r, x, b_sh, tap, shift, s_max: 0.0 }
        })
        .collect::<Vec<_>>();

    let mut is_gen: Vec<bool> = (0..n).map(|_| rng.random_bool(params.generator_prob)).collect();
    let fallback_generator = !is_gen.contains(&true);
    if fallback_generator {
        is_gen[rng.random_range(0..n)] = true;
    }
    let reference = is_gen.iter().position(|&g| g).expect("at least one generator");

    let mut gens = Vec::new();
    let mut costs = Vec::new();
    for (k, _) in is_gen.iter().enumerate().filter(|(_, &g)| g) {
        let (p_min, p_max) = ordered_pair(&params.p_min, &params.p_max, rng);
        let (q_min, q_max) = ordered_pair(&params.q_min, &params.q_max, rng);
        gens.push(Generator { bus: k as u32 + 1, p_min, p_max, q_min, q_max });
        let c2 = rng.random_range(params.c2.0..=params.c2.1);
        let c1 = rng.random_range(params.c1.0..=params.c1.1);
        costs.push(CostPoly { c2, c1, c0: 0.0 });
    }
    // loads sit at the buses without generators
    let buses = (0..n)
        .map(|k| {
            let (p_load, q_load) =
                if is_gen[k] { (0.0, 0.0) } else { (params.p_d.sample(rng), params.q_d.sample(rng)) };
            Bus {
                id: k as u32 + 1,
                kind: if k == reference {
                    BusKind::Ref
                } else if is_gen[k] {
                    BusKind::Pv
                } else {
                    BusKind::Pq
                },
                p_load,
                q_load,
                v_min: params.v_min,
                v_max: params.v_max,
                shunt_g: 0.0,
                shunt_b: 0.0,
            }
        })
        .collect();

    let case = Case { base_mva: params.base_mva, buses, gens, branches, costs };
    let capacity_mw: f64 = case.gens.iter().map(|g| g.p_max).sum();
    let load_mw = case.total_load_mw();
    let verdict = match case.validate() {
        Err(e) => Verdict::Invalid(e.to_string()),
        Ok(()) if capacity_mw < load_mw => Verdict::InsufficientCapacity { capacity_mw, load_mw },
        Ok(()) => Verdict::Accepted,
    };
    Ok(GeneratedCase { case, verdict, fallback_generator })
}

pub fn generate_case(params: &GenerationParams, seed: u64) -> Result<GeneratedCase, CaseGenError> {
    generate_indexed(params, seed, 0)
}

/// Cases `0..count` of `seed`; each depends only on its index.
pub fn generate_batch(params: &GenerationParams, seed: u64, count: usize) -> Result<Vec<GeneratedCase>, CaseGenError> {
    params.validate()?;
    (0..count as u64).into_par_iter().map(|i| generate_indexed(params, seed, i)).collect()
}
