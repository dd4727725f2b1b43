use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_local_with, IpmOptions, LocalOptError, OpfNlp, OpfPoint, OpfStatus};
use crate::netmodel::Case;
use crate::pflow::{build_system, newton_solve, PowerFlowSpec};

/// Two optima are the same when their voltage vectors differ by less than this
/// in every component.
pub const DEDUP_RADIUS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultistartOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub ipm: IpmOptions,
}

/// Distinct local optima in increasing objective order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimaSet {
    pub optima: Vec<OpfPoint>,
    /// Starts that converged to each optimum.
    pub basin_counts: Vec<usize>,
    pub n_starts: usize,
    pub failures: usize,
    pub stationary_only: usize,
}

impl LocalOptimaSet {
    pub fn best(&self) -> Option<&OpfPoint> {
        self.optima.first()
    }

    pub fn worst(&self) -> Option<&OpfPoint> {
        self.optima.last()
    }

    /// `100 (worst - best) / best`, zero with fewer than two optima.
    pub fn spread_percent(&self) -> f64 {
        match (self.best(), self.worst()) {
            (Some(b), Some(w)) if self.optima.len() > 1 => 100.0 * (w.objective - b.objective) / b.objective,
            _ => 0.0,
        }
    }
}

/// Random initial point: generator setpoints and dispatch drawn uniformly from
/// their limits, then a power flow; the raw sample if the power flow fails.
fn random_start(case: &Case, nlp: &OpfNlp, rng: &mut ChaCha8Rng) -> OpfPoint {
    let n = nlp.n;
    let mut vm_set = vec![1.0; n];
    let mut pg_set = vec![0.0; n];
    for g in &nlp.gens {
        let b = &case.buses[g.bus];
        vm_set[g.bus] = if b.v_max > b.v_min { rng.random_range(b.v_min..=b.v_max) } else { b.v_min };
        pg_set[g.bus] = if g.p_max > g.p_min { rng.random_range(g.p_min..=g.p_max) } else { g.p_min };
    }
    let spec = PowerFlowSpec::from_setpoints(case, &vm_set, &pg_set);
    let raw: Vec<Complex64> = (0..n).map(|k| Complex64::new(vm_set[k], 0.0)).collect();
    let solved = build_system(case, &nlp.model, &spec).ok().and_then(|sys| {
        let x = newton_solve(&sys, &sys.unknowns(&raw)).ok()?;
        Some(sys.voltages(&x))
    });
    match solved {
        Some(v) => OpfPoint::from_voltages(case, nlp, v),
        None => {
            let mut p = OpfPoint::flat(case);
            p.voltages = raw;
            p.pg = nlp.gens.iter().map(|g| pg_set[g.bus]).collect();
            p
        }
    }
}

/// Multistart local search: one flat start plus `n_starts - 1` random starts.
pub fn multistart(case: &Case, n_starts: usize, seed: u64) -> Result<LocalOptimaSet, LocalOptError> {
    multistart_with(case, &MultistartOptions { n_starts, seed, ipm: IpmOptions::default() })
}

pub fn multistart_with(case: &Case, opts: &MultistartOptions) -> Result<LocalOptimaSet, LocalOptError> {
    case.validate()?;
    let nlp = OpfNlp::new(case)?;
    let results: Vec<OpfPoint> = (0..opts.n_starts)
        .into_par_iter()
        .map(|i| {
            let init = if i == 0 {
                None
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i as u64);
                Some(random_start(case, &nlp, &mut rng))
            };
            solve_local_with(case, &nlp, init.as_ref(), &opts.ipm)
        })
        .collect::<Result<_, _>>()?;

    let mut set = LocalOptimaSet {
        optima: Vec::new(),
        basin_counts: Vec::new(),
        n_starts: opts.n_starts,
        failures: 0,
        stationary_only: 0,
    };
    for p in results {
        match p.status {
            OpfStatus::Failed => set.failures += 1,
            OpfStatus::StationaryOnly => set.stationary_only += 1,
            OpfStatus::LocalOptimum => {
                let hit = set
                    .optima
                    .iter()
                    .position(|q| q.voltages.iter().zip(&p.voltages).all(|(a, b)| (a - b).norm() < DEDUP_RADIUS));
                match hit {
                    Some(j) => {
                        set.basin_counts[j] += 1;
                        if p.objective < set.optima[j].objective {
                            set.optima[j] = p;
                        }
                    }
                    None => {
                        set.optima.push(p);
                        set.basin_counts.push(1);
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..set.optima.len()).collect();
    order.sort_by(|&a, &b| set.optima[a].objective.total_cmp(&set.optima[b].objective));
    set.optima = order.iter().map(|&i| set.optima[i].clone()).collect();
    set.basin_counts = order.iter().map(|&i| set.basin_counts[i]).collect();
    Ok(set)
}
