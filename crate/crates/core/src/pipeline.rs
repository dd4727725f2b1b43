//! End-to-end studies: screening random cases for large optimality gaps,
//! tightening the IEEE cases, and local-versus-bound gap tables.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casegen::{generate_indexed, CaseGenError, GenerationParams, Verdict};
use crate::localopt::{multistart_with, IpmOptions, LocalOptError, LocalOptimaSet, MultistartOptions};
use crate::netmodel::{parse_mfile, Case, NetError};
use crate::sdprelax::{optimality_gap, relax, SdpStatus};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("unknown built-in case `{0}` (expected one of ieee14, ieee24, ieee57, ieee118)")]
    UnknownCase(String),
    #[error("negative gap threshold {0}")]
    Threshold(f64),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Gen(#[from] CaseGenError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Names of the bundled IEEE cases.
pub const IEEE_CASES: [&str; 4] = ["ieee14", "ieee24", "ieee57", "ieee118"];

/// A bundled IEEE case by name (`ieee14`, `case14` or `14`).
pub fn ieee_case(name: &str) -> Result<Case, PipelineError> {
    let key = name.trim().trim_start_matches("ieee").trim_start_matches("case");
    let text = match key {
        "14" => include_str!("../data/ieee14.m"),
        "24" => include_str!("../data/ieee24.m"),
        "57" => include_str!("../data/ieee57.m"),
        "118" => include_str!("../data/ieee118.m"),
        _ => return Err(PipelineError::UnknownCase(name.to_string())),
    };
    Ok(parse_mfile(text)?)
}

/// Percentage reductions of loads, the voltage band and reactive lower limits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModificationRecipe {
    pub d_pd: f64,
    pub d_qd: f64,
    pub d_vupper: f64,
    pub d_vlower: f64,
    pub d_qg: f64,
}

impl ModificationRecipe {
    /// Recipe producing the `nmwc` variant of the IEEE case with `buses` buses.
    pub fn nmwc(buses: usize) -> Option<ModificationRecipe> {
        let r = |load: f64, v: f64, qg: f64| ModificationRecipe {
            d_pd: load,
            d_qd: load,
            d_vupper: v,
            d_vlower: v,
            d_qg: qg,
        };
        match buses {
            14 => Some(r(60.0, 0.06, 95.0)),
            24 => Some(r(55.0, 0.73, 90.0)),
            57 => Some(r(72.0, 0.06, 95.0)),
            118 => Some(r(71.0, 0.06, 95.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fields = [
            ("dPd", self.d_pd),
            ("dQd", self.d_qd),
            ("dVu", self.d_vupper),
            ("dVl", self.d_vlower),
            ("dQg", self.d_qg),
        ];
        for (name, v) in fields {
            if !(0.0..=100.0).contains(&v) {
                return Err(PipelineError::Recipe(format!("{name} = {v} is outside [0, 100]")));
            }
        }
        Ok(())
    }
}

/// Scale loads down, pull both voltage limits inward and shrink reactive lower
/// limits toward zero by the recipe's percentages. Everything else is copied.
pub fn apply_recipe(case: &Case, recipe: &ModificationRecipe) -> Result<Case, PipelineError> {
    recipe.validate()?;
    let keep = |d: f64| 1.0 - d / 100.0;
    let mut out = case.clone();
    for b in &mut out.buses {
        b.p_load *= keep(recipe.d_pd);
        b.q_load *= keep(recipe.d_qd);
        b.v_max *= keep(recipe.d_vupper);
        b.v_min *= 1.0 + recipe.d_vlower / 100.0;
        if b.v_min > b.v_max {
            return Err(PipelineError::Recipe(format!("bus {} voltage limits cross: {} > {}", b.id, b.v_min, b.v_max)));
        }
    }
    for (i, g) in out.gens.iter_mut().enumerate() {
        g.q_min *= keep(recipe.d_qg);
        if g.q_min > g.q_max {
            return Err(PipelineError::Recipe(format!(
                "generator {} at bus {} reactive limits cross: {} > {}",
                i + 1,
                g.bus,
                g.q_min,
                g.q_max
            )));
        }
    }
    Ok(out)
}

/// The `nmwc` variant of a bundled IEEE case.
pub fn nmwc_case(buses: usize) -> Result<Case, PipelineError> {
    let recipe = ModificationRecipe::nmwc(buses).ok_or_else(|| PipelineError::UnknownCase(format!("nmwc{buses}")))?;
    apply_recipe(&ieee_case(&buses.to_string())?, &recipe)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOptions {
    /// Multistart starts per case.
    pub starts: usize,
    /// Starts used to re-solve a case once it is selected; no escalation when
    /// not above `starts`.
    pub escalated_starts: usize,
    /// Optimality gap in percent at or above which a case is selected.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ScreeningOptions {
    fn default() -> Self {
        ScreeningOptions { starts: 10, escalated_starts: 200, threshold: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "reason")]
pub enum ScreenStatus {
    Screened,
    /// Discarded by the generator's prescreen or invariants.
    Rejected(String),
    /// The local search or the relaxation failed.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    /// Index of the case within the batch; with the batch seed it regenerates the case.
    pub case_id: usize,
    pub status: ScreenStatus,
    /// Best local objective in $/hr.
    pub best: Option<f64>,
    pub worst: Option<f64>,
    pub n_optima: usize,
    pub starts: usize,
    pub bound: Option<f64>,
    pub gap_percent: Option<f64>,
    pub selected: bool,
    pub rank: Option<usize>,
    /// Binding limits at the best optimum.
    pub binding: Vec<String>,
}

impl ScreeningResult {
    fn new(case_id: usize, status: ScreenStatus) -> ScreeningResult {
        ScreeningResult {
            case_id,
            status,
            best: None,
            worst: None,
            n_optima: 0,
            starts: 0,
            bound: None,
            gap_percent: None,
            selected: false,
            rank: None,
            binding: Vec::new(),
        }
    }
}

/// Relative amount by which a bound may exceed the best objective and still be
/// read as equal to it.
pub const BOUND_TOL: f64 = 1e-6;

fn search(case: &Case, starts: usize, seed: u64) -> Result<LocalOptimaSet, LocalOptError> {
    multistart_with(case, &MultistartOptions { n_starts: starts, seed, ipm: IpmOptions::default() })
}

/// Gap of `best` over `bound`; a bound above `best` within [`BOUND_TOL`] counts
/// as equal.
fn gap_of(best: f64, bound: f64) -> Option<f64> {
    let bound = if bound > best && bound - best <= BOUND_TOL * best.abs() { best } else { bound };
    optimality_gap(best, bound).ok().map(|g| g.gap_percent)
}

/// Multistart, relaxation and gap for one case.
pub fn screen_case(case_id: usize, case: &Case, opts: &ScreeningOptions) -> ScreeningResult {
    let fail = |msg: String| ScreeningResult::new(case_id, ScreenStatus::Failed(msg));
    let sdp = match relax(case) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    if sdp.status != SdpStatus::Optimal {
        return fail(format!("relaxation status {:?}", sdp.status));
    }
    let seed = opts.seed ^ (case_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut starts = opts.starts;
    let mut set = match search(case, starts, seed) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let judge = |set: &LocalOptimaSet| {
        let gap = set.best().and_then(|b| gap_of(b.objective, sdp.lower_bound));
        (gap, gap.is_some_and(|g| g >= opts.threshold))
    };
    let (mut gap, mut selected) = judge(&set);
    if selected && opts.escalated_starts > starts {
        starts = opts.escalated_starts;
        match search(case, starts, seed) {
            Ok(s) => set = s,
            Err(e) => return fail(e.to_string()),
        }
        (gap, selected) = judge(&set);
    }
    let Some(best) = set.best() else {
        return ScreeningResult { starts, ..fail(format!("no local optimum from {starts} starts")) };
    };
    ScreeningResult {
        case_id,
        status: ScreenStatus::Screened,
        best: Some(best.objective),
        worst: set.worst().map(|w| w.objective),
        n_optima: set.optima.len(),
        starts,
        bound: Some(sdp.lower_bound),
        gap_percent: gap,
        selected,
        rank: Some(sdp.rank),
        binding: best.binding.binding().map(|e| e.to_string()).collect(),
    }
}

/// Generate `count` cases from `params` and screen each accepted one. Results
/// are in case order whatever the thread count.
pub fn screen_batch(
    params: &GenerationParams,
    count: usize,
    opts: &ScreeningOptions,
) -> Result<Vec<ScreeningResult>, PipelineError> {
    params.validate()?;
    if !(opts.threshold >= 0.0) {
        return Err(PipelineError::Threshold(opts.threshold));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let generated = generate_indexed(params, opts.seed, i as u64).expect("validated parameters");
            match generated.verdict {
                Verdict::Accepted => screen_case(i, &generated.case, opts),
                Verdict::InsufficientCapacity { capacity_mw, load_mw } => ScreeningResult::new(
                    i,
                    ScreenStatus::Rejected(format!("capacity {capacity_mw:.2} MW below load {load_mw:.2} MW")),
                ),
                Verdict::Invalid(msg) => ScreeningResult::new(i, ScreenStatus::Rejected(msg)),
            }
        })
        .collect())
}

/// Counts over a screening batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSummary {
    pub generated: usize,
    pub rejected: usize,
    pub failed: usize,
    pub screened: usize,
    pub selected: usize,
}

impl ScreeningSummary {
    pub fn of(results: &[ScreeningResult]) -> ScreeningSummary {
        let mut s = ScreeningSummary { generated: results.len(), ..Default::default() };
        for r in results {
            match r.status {
                ScreenStatus::Screened => s.screened += 1,
                ScreenStatus::Rejected(_) => s.rejected += 1,
                ScreenStatus::Failed(_) => s.failed += 1,
            }
            s.selected += usize::from(r.selected);
        }
        s
    }

    /// Selected cases per screened case.
    pub fn selected_fraction(&self) -> f64 {
        if self.screened == 0 {
            0.0
        } else {
            self.selected as f64 / self.screened as f64
        }
    }
}

#[derive(Serialize)]
struct ScreeningCsvRow<'a> {
    case_id: usize,
    status: &'a str,
    reason: &'a str,
    best: Option<f64>,
    worst: Option<f64>,
    n_optima: usize,
    starts: usize,
    bound: Option<f64>,
    gap_percent: Option<f64>,
    selected: bool,
    rank: Option<usize>,
    binding: String,
}

/// Write `screening.json` and `screening.csv` into `dir`.
pub fn write_screening_report(dir: &Path, results: &[ScreeningResult]) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    let summary = ScreeningSummary::of(results);
    let json = serde_json::json!({ "summary": summary, "results": results });
    std::fs::write(dir.join("screening.json"), serde_json::to_string_pretty(&json)?)?;
    let mut w = csv::Writer::from_path(dir.join("screening.csv"))?;
    for r in results {
        let (status, reason) = match &r.status {
            ScreenStatus::Screened => ("screened", ""),
            ScreenStatus::Rejected(m) => ("rejected", m.as_str()),
            ScreenStatus::Failed(m) => ("failed", m.as_str()),
        };
        w.serialize(ScreeningCsvRow {
            case_id: r.case_id,
            status,
            reason,
            best: r.best,
            worst: r.worst,
            n_optima: r.n_optima,
            starts: r.starts,
            bound: r.bound,
            gap_percent: r.gap_percent,
            selected: r.selected,
            rank: r.rank,
            binding: r.binding.join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a local-optima versus lower-bound table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub name: String,
    pub worst: Option<f64>,
    pub best: Option<f64>,
    pub bound: Option<f64>,
    pub gap_percent: Option<f64>,
    pub n_optima: usize,
    pub rank: Option<usize>,
    /// Why a column is missing.
    pub error: Option<String>,
}

/// Multistart with `starts` starts and the relaxation bound for each case.
pub fn gap_table(cases: &[(String, Case)], starts: usize, seed: u64) -> Vec<GapRow> {
    cases
        .iter()
        .map(|(name, case)| {
            let mut row = GapRow {
                name: name.clone(),
                worst: None,
                best: None,
                bound: None,
                gap_percent: None,
                n_optima: 0,
                rank: None,
                error: None,
            };
            let mut errors = Vec::new();
            match search(case, starts, seed) {
                Ok(set) => {
                    row.best = set.best().map(|p| p.objective);
                    row.worst = set.worst().map(|p| p.objective);
                    row.n_optima = set.optima.len();
                    if set.optima.is_empty() {
                        errors.push(format!("no local optimum from {starts} starts"));
                    }
                }
                Err(e) => errors.push(format!("local search: {e}")),
            }
            match relax(case) {
                Ok(sdp) if sdp.status == SdpStatus::Optimal => {
                    row.bound = Some(sdp.lower_bound);
                    row.rank = Some(sdp.rank);
                }
                Ok(sdp) => errors.push(format!("relaxation status {:?}", sdp.status)),
                Err(e) => errors.push(format!("relaxation: {e}")),
            }
            if let (Some(b), Some(lb)) = (row.best, row.bound) {
                row.gap_percent = gap_of(b, lb);
            }
            if !errors.is_empty() {
                row.error = Some(errors.join("; "));
            }
            row
        })
        .collect()
}

/// Format `x` with six significant digits, without an exponent for ordinary
/// magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Plain-text table: case, worst and best local objectives, bound and gap.
pub fn format_gap_table(rows: &[GapRow]) -> String {
    let cell = |v: Option<f64>| v.map(sig6).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>12} {:>9} {:>7} {:>5}",
        "case", "worst", "best", "bound", "gap %", "optima", "rank"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>12} {:>12} {:>9} {:>7} {:>5}",
            r.name,
            cell(r.worst),
            cell(r.best),
            cell(r.bound),
            cell(r.gap_percent),
            r.n_optima,
            r.rank.map(|k| k.to_string()).unwrap_or_else(|| "-".into())
        );
        if let Some(e) = &r.error {
            let _ = writeln!(out, "  {}: {e}", r.name);
        }
    }
    out
}
