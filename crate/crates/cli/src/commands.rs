use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use opf_core::casegen::{generate_batch, Family, GenerationParams, Verdict};
use opf_core::fspace::{self, Coord, GridSpec};
use opf_core::localopt::{multistart, solve_local, LocalOptimaSet, OpfStatus};
use opf_core::netmodel::{build_admittance, emit_case_json, emit_mfile, parse_case, Case, CaseFormat};
use opf_core::pflow::{build_system, enumerate_solutions, PowerFlowSpec};
use opf_core::pipeline::{
    apply_recipe, format_gap_table, gap_table, ieee_case, nmwc_case, screen_batch, sig6, write_screening_report,
    ModificationRecipe, ScreeningOptions, ScreeningSummary,
};
use opf_core::sdprelax::{build_sdp, optimality_gap, solve_sdp, SdpStatus};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::{Cli, CliError, Command, SdpArgs};

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn json(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(usage)
}

/// A case file, a bundled IEEE case, or `nmwc<n>`.
pub fn load_case(spec: &str) -> Result<Case, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return parse_case(&text, CaseFormat::from_path(path)).map_err(|e| usage(format!("{spec}: {e}")));
    }
    if let Some(n) = spec.strip_prefix("nmwc") {
        let n: usize = n.parse().map_err(|_| usage(format!("no case file or bundled case `{spec}`")))?;
        return nmwc_case(n).map_err(usage);
    }
    ieee_case(spec).map_err(|_| usage(format!("no case file or bundled case `{spec}`")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let out = &cli.out;
    let threads = cli.threads;
    match &cli.command {
        Command::Generate(a) => generate(out, threads, a),
        Command::Screen(a) => screen(out, threads, a),
        Command::Fspace(a) => fspace_cmd(out, threads, a),
        Command::SolveLocal(a) => solve_local_cmd(out, threads, &a.case),
        Command::Multistart(a) => multistart_cmd(out, threads, a),
        Command::SolveSdp(a) => solve_sdp_cmd(out, threads, a),
        Command::Gap(a) => gap(out, threads, a),
        Command::Modify(a) => modify(out, threads, a),
        Command::PfEnumerate(a) => pf_enumerate(out, threads, a),
    }
}

fn family_params(name: &str) -> Result<GenerationParams, CliError> {
    Ok(GenerationParams::family(name.parse::<Family>().map_err(usage)?))
}

#[derive(Serialize)]
struct GeneratedEntry {
    index: usize,
    seed: u64,
    file: Option<String>,
    verdict: Verdict,
}

fn generate(out: &Path, threads: Option<usize>, a: &crate::GenerateArgs) -> Result<(), CliError> {
    let params = family_params(&a.family)?;
    let mut m = Manifest::new(out, "generate", Some(a.seed), threads)?;
    let cases = generate_batch(&params, a.seed, a.count).map_err(usage)?;
    m.lap("generate");
    let mut index = Vec::new();
    for (i, g) in cases.into_iter().enumerate() {
        let file = if g.is_accepted() {
            let name = format!("case_{i:04}.json");
            m.write(&name, emit_case_json(&g.case))?;
            Some(name)
        } else {
            None
        };
        index.push(GeneratedEntry { index: i, seed: a.seed, file, verdict: g.verdict });
    }
    let accepted = index.iter().filter(|e| e.file.is_some()).count();
    m.write("cases.json", json(&serde_json::json!({ "params": params, "cases": index }))?)?;
    say!("generated {} cases, {accepted} accepted, in {}", a.count, out.display());
    m.finish()
}

fn screen(out: &Path, threads: Option<usize>, a: &crate::ScreenArgs) -> Result<(), CliError> {
    let params = family_params(&a.family)?;
    let opts =
        ScreeningOptions { starts: a.starts, escalated_starts: a.escalate, threshold: a.threshold, seed: a.seed };
    let mut m = Manifest::new(out, "screen", Some(a.seed), threads)?;
    let results = screen_batch(&params, a.count, &opts).map_err(usage)?;
    m.lap("screen");
    write_screening_report(out, &results).map_err(usage)?;
    m.note_output("screening.json");
    m.note_output("screening.csv");
    let s = ScreeningSummary::of(&results);
    say!(
        "generated {}, rejected {}, failed {}, screened {}, selected {} ({}%)",
        s.generated,
        s.rejected,
        s.failed,
        s.screened,
        s.selected,
        sig6(100.0 * s.selected_fraction())
    );
    for r in results.iter().filter(|r| r.selected) {
        say!(
            "  case {}: best {} bound {} gap {}% rank {}",
            r.case_id,
            r.best.map(sig6).unwrap_or_default(),
            r.bound.map(sig6).unwrap_or_default(),
            r.gap_percent.map(sig6).unwrap_or_default(),
            r.rank.unwrap_or(0)
        );
    }
    m.finish()
}

fn csv_column(c: Coord) -> String {
    match c {
        Coord::Vm(b) => format!("vm_{b}"),
        Coord::Pg(b) => format!("pg_{b}"),
        Coord::Qg(b) => format!("qg_{b}"),
    }
}

fn fspace_cmd(out: &Path, threads: Option<usize>, a: &crate::FspaceArgs) -> Result<(), CliError> {
    let case = load_case(&a.case.case)?;
    let axes = fspace::parse_axes(&a.axes).map_err(usage)?;
    let grid = GridSpec::full(&case, a.grid);
    let mut m = Manifest::new(out, "fspace", Some(a.seed), threads)?;
    m.inputs.push(a.case.case.clone());
    let mut space = fspace::map_feasible_space(&case, &grid, a.seed).map_err(usage)?;
    m.lap("enumerate");
    let mut proj = fspace::label_components(&case, &mut space, &axes, a.radius).map_err(usage)?;
    m.lap("components");
    if a.optima > 0 {
        let set = multistart(&case, a.optima, a.seed).map_err(|e| CliError::Solver(e.to_string()))?;
        let voltages: Vec<Vec<Complex64>> = set.optima.iter().map(|p| p.voltages.clone()).collect();
        proj.mark_optima(&case, &voltages).map_err(usage)?;
        let mut text = axes.iter().map(|&c| csv_column(c)).collect::<Vec<_>>().join(",");
        text.push_str(",cost,kind\n");
        for o in &proj.optima {
            let coords: Vec<String> = o.coords.iter().map(|x| x.to_string()).collect();
            let kind = if o.global { "global" } else { "local" };
            text.push_str(&format!("{},{},{kind}\n", coords.join(","), o.cost));
        }
        m.write("optima.csv", text)?;
        m.lap("multistart");
    }
    let mut csv = Vec::new();
    fspace::write_csv(&case, &space.points, &mut csv).map_err(usage)?;
    m.write("fspace.csv", csv)?;
    m.write("fspace.json", json(&serde_json::json!({ "space": space, "projection": proj }))?)?;
    let components = space.points.iter().map(|p| p.component).max().unwrap_or(0);
    say!(
        "{} feasible points from {} grid points, {components} component(s) on {}{}",
        space.points.len(),
        grid.n_points(),
        a.axes,
        if space.certified { "" } else { " (enumeration not certified)" }
    );
    m.finish()
}

fn print_point(label: &str, objective: f64, status: OpfStatus, binding: &str) {
    say!("{label}: objective {} $/hr, {status:?}, binding [{binding}]", sig6(objective));
}

fn solve_local_cmd(out: &Path, threads: Option<usize>, spec: &str) -> Result<(), CliError> {
    let case = load_case(spec)?;
    let mut m = Manifest::new(out, "solve-local", None, threads)?;
    m.inputs.push(spec.to_string());
    let point = solve_local(&case, None).map_err(usage)?;
    m.lap("solve");
    m.write("solution.json", json(&point)?)?;
    print_point("local", point.objective, point.status, &point.binding.binding_codes());
    m.finish()?;
    match point.status {
        OpfStatus::Failed => Err(CliError::Solver("local solver did not converge".into())),
        _ => Ok(()),
    }
}

fn print_optima(set: &LocalOptimaSet) {
    say!(
        "{} distinct optima from {} starts ({} failed, {} stationary only), spread {}%",
        set.optima.len(),
        set.n_starts,
        set.failures,
        set.stationary_only,
        sig6(set.spread_percent())
    );
    for (k, (p, basin)) in set.optima.iter().zip(&set.basin_counts).enumerate() {
        print_point(&format!("  #{} ({basin} starts)", k + 1), p.objective, p.status, &p.binding.binding_codes());
    }
}

fn multistart_cmd(out: &Path, threads: Option<usize>, a: &crate::MultistartArgs) -> Result<(), CliError> {
    let case = load_case(&a.case.case)?;
    let mut m = Manifest::new(out, "multistart", Some(a.seed), threads)?;
    m.inputs.push(a.case.case.clone());
    let set = multistart(&case, a.starts, a.seed).map_err(usage)?;
    m.lap("multistart");
    m.write("optima.json", json(&set)?)?;
    print_optima(&set);
    m.finish()?;
    if set.optima.is_empty() {
        return Err(CliError::Solver("no local optimum found".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SdpReport {
    status: SdpStatus,
    lower_bound: f64,
    rank: usize,
    eigenvalues: Vec<f64>,
    relative_gap: f64,
    iterations: usize,
    /// Magnitude and angle in degrees when the relaxation is exact.
    voltages: Option<Vec<(f64, f64)>>,
}

fn solve_sdp_cmd(out: &Path, threads: Option<usize>, a: &SdpArgs) -> Result<(), CliError> {
    let case = load_case(&a.case.case)?;
    case.validate().map_err(usage)?;
    let mut m = Manifest::new(out, "solve-sdp", None, threads)?;
    m.inputs.push(a.case.case.clone());
    let model = build_admittance(&case).map_err(usage)?;
    let problem = build_sdp(&case, &model);
    if a.sdpa {
        m.write("relaxation.dat-s", problem.to_sdpa())?;
    }
    let sol = solve_sdp(&problem);
    m.lap("solve");
    let report = SdpReport {
        status: sol.status,
        lower_bound: sol.lower_bound,
        rank: sol.rank,
        eigenvalues: sol.eigenvalues.clone(),
        relative_gap: sol.gap,
        iterations: sol.iterations,
        voltages: sol.voltages.as_ref().map(|v| v.iter().map(|z| (z.norm(), z.arg().to_degrees())).collect()),
    };
    m.write("sdp.json", json(&report)?)?;
    say!(
        "relaxation {:?}: lower bound {} $/hr, rank {}, {} iterations",
        sol.status,
        sig6(sol.lower_bound),
        sol.rank,
        sol.iterations
    );
    m.finish()?;
    match sol.status {
        SdpStatus::Optimal => Ok(()),
        s => Err(CliError::Solver(format!("relaxation ended with status {s:?}"))),
    }
}

fn gap(out: &Path, threads: Option<usize>, a: &crate::GapArgs) -> Result<(), CliError> {
    if let (Some(local), Some(bound)) = (a.local, a.bound) {
        let g = optimality_gap(local, bound).map_err(usage)?;
        say!("{}", sig6(g.gap_percent));
        return Ok(());
    }
    if a.case.is_empty() {
        return Err(usage("gap needs --local and --bound, or at least one --case"));
    }
    let cases: Vec<(String, Case)> =
        a.case.iter().map(|c| Ok((c.clone(), load_case(c)?))).collect::<Result<_, CliError>>()?;
    let mut m = Manifest::new(out, "gap", Some(a.seed), threads)?;
    m.inputs.extend(a.case.iter().cloned());
    let rows = gap_table(&cases, a.starts, a.seed);
    m.lap("gap-table");
    m.write("gap_table.json", json(&rows)?)?;
    let text = format_gap_table(&rows);
    m.write("gap_table.txt", &text)?;
    print!("{text}");
    m.finish()?;
    if rows.iter().any(|r| r.gap_percent.is_none()) {
        return Err(CliError::Solver("some rows have no gap".into()));
    }
    Ok(())
}

fn modify(out: &Path, threads: Option<usize>, a: &crate::ModifyArgs) -> Result<(), CliError> {
    let case = load_case(&a.case.case)?;
    let recipe = ModificationRecipe { d_pd: a.d_pd, d_qd: a.d_qd, d_vupper: a.d_vu, d_vlower: a.d_vl, d_qg: a.d_qg };
    let modified = apply_recipe(&case, &recipe).map_err(usage)?;
    let mut m = Manifest::new(out, "modify", None, threads)?;
    m.inputs.push(a.case.case.clone());
    let target = a.output.clone().unwrap_or_else(|| m.path("modified.json"));
    let text = match target.extension().and_then(|e| e.to_str()) {
        Some("m") => {
            let name = target.file_stem().and_then(|s| s.to_str()).unwrap_or("modified");
            emit_mfile(&modified, name)
        }
        _ => emit_case_json(&modified),
    };
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&target, text)?;
    m.note_output(&target.display().to_string());
    say!("wrote {}", target.display());
    m.finish()
}

/// `bus=value` pairs.
fn parse_pairs(items: &[String]) -> Result<BTreeMap<u32, f64>, CliError> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let (b, v) = s.split_once('=').ok_or_else(|| usage(format!("expected bus=value, got `{s}`")))?;
            let b: u32 = b.trim().parse().map_err(|_| usage(format!("bad bus id in `{s}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| usage(format!("bad value in `{s}`")))?;
            Ok((b, v))
        })
        .collect()
}

#[derive(Serialize)]
struct PfReport {
    paths: usize,
    diverged: usize,
    non_real: usize,
    failed: usize,
    certified: bool,
    /// Per solution, magnitude and angle in degrees for every bus.
    solutions: Vec<Vec<(f64, f64)>>,
    residuals: Vec<f64>,
}

fn pf_enumerate(out: &Path, threads: Option<usize>, a: &crate::PfArgs) -> Result<(), CliError> {
    let case = load_case(&a.case.case)?;
    case.validate().map_err(usage)?;
    let vm_pairs = parse_pairs(&a.vm)?;
    let pg_pairs = parse_pairs(&a.pg)?;
    let n = case.n_buses();
    let mut vm = vec![1.0; n];
    let mut pg = vec![0.0; n];
    for g in case.gen_buses() {
        pg[g.bus] = 0.5 * (g.p_min + g.p_max);
    }
    for (&bus, &v) in &vm_pairs {
        vm[case.bus_index(bus).ok_or_else(|| usage(format!("no bus {bus}")))?] = v;
    }
    for (&bus, &p) in &pg_pairs {
        pg[case.bus_index(bus).ok_or_else(|| usage(format!("no bus {bus}")))?] = p / case.base_mva;
    }
    let model = build_admittance(&case).map_err(usage)?;
    let spec = PowerFlowSpec::from_setpoints(&case, &vm, &pg);
    let sys = build_system(&case, &model, &spec).map_err(usage)?;
    let mut m = Manifest::new(out, "pf-enumerate", Some(a.seed), threads)?;
    m.inputs.push(a.case.case.clone());
    let set = enumerate_solutions(&sys, a.seed).map_err(usage)?;
    m.lap("enumerate");
    let report = PfReport {
        paths: set.paths,
        diverged: set.diverged,
        non_real: set.non_real,
        failed: set.failed,
        certified: set.certified,
        solutions: set.voltages.iter().map(|v| v.iter().map(|z| (z.norm(), z.arg().to_degrees())).collect()).collect(),
        residuals: set.residuals.clone(),
    };
    m.write("pf_solutions.json", json(&report)?)?;
    say!(
        "{} real solutions from {} paths ({} diverged, {} non-real, {} failed){}",
        set.len(),
        set.paths,
        set.diverged,
        set.non_real,
        set.failed,
        if set.certified { "" } else { ", not certified" }
    );
    for (k, sol) in report.solutions.iter().enumerate() {
        let cells: Vec<String> = sol.iter().map(|(v, th)| format!("{}@{}", sig6(*v), sig6(*th))).collect();
        say!("  #{}: {}", k + 1, cells.join(" "));
    }
    m.finish()?;
    if set.certified {
        Ok(())
    } else {
        Err(CliError::Solver("enumeration not certified".into()))
    }
}
