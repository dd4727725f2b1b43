use std::path::Path;
use std::process::{Command, Output};

use opf_core::netmodel::{emit_case_json, parse_case, Branch, Bus, BusKind, Case, CaseFormat, CostPoly, Generator};
use opf_core::pipeline::{ieee_case, nmwc_case};

fn opf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opf")).arg("--out").arg(out).args(args).output().expect("runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn two_bus_json(dir: &Path) -> String {
    let bus =
        |id, kind, p_load, q_load| Bus { id, kind, p_load, q_load, v_min: 0.9, v_max: 1.1, shunt_g: 0.0, shunt_b: 0.0 };
    let case = Case {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Ref, 0.0, 0.0), bus(2, BusKind::Pq, 50.0, 20.0)],
        gens: vec![Generator { bus: 1, p_min: 0.0, p_max: 200.0, q_min: -100.0, q_max: 100.0 }],
        branches: vec![Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.01,
            x: 0.1,
            b_sh: 0.02,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        }],
        costs: vec![CostPoly { c2: 0.01, c1: 10.0, c0: 0.0 }],
    };
    let path = dir.join("two_bus.json");
    std::fs::write(&path, emit_case_json(&case)).unwrap();
    path.display().to_string()
}

#[test]
fn gap_from_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = opf(dir.path(), &["gap", "--local", "34663.69", "--bound", "30413.10"]);
    assert!(o.status.success());
    let printed: f64 = stdout(&o).trim().parse().unwrap();
    assert_eq!(stdout(&o).trim(), "13.9762");
    assert!((printed - 13.98).abs() < 0.005);
}

#[test]
fn modify_writes_the_tightened_case() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nmwc14.json");
    let o = opf(
        dir.path(),
        &["modify", "--case", "ieee14", "--dPd", "60", "--dQd", "60", "--dVu", "0.06", "--dVl", "0.06", "--dQg", "95"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let default_out = dir.path().join("modified.json");
    let written = parse_case(&std::fs::read_to_string(&default_out).unwrap(), CaseFormat::NativeJson).unwrap();
    assert_eq!(written, nmwc_case(14).unwrap());

    let o = opf(dir.path(), &["modify", "--case", "ieee14", "--dPd", "60", "--output", target.to_str().unwrap()]);
    assert!(o.status.success());
    let m_target = dir.path().join("half.m");
    let o = opf(dir.path(), &["modify", "--case", "ieee14", "--dPd", "50", "--output", m_target.to_str().unwrap()]);
    assert!(o.status.success());
    let back = parse_case(&std::fs::read_to_string(&m_target).unwrap(), CaseFormat::MFile).unwrap();
    let base = ieee_case("ieee14").unwrap();
    assert!((back.total_load_mw() - 0.5 * base.total_load_mw()).abs() < 1e-6);
}

#[test]
fn fspace_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus_json(dir.path());
    let o = opf(dir.path(), &["fspace", "--case", &case, "--axes", "pg1,qg1", "--grid", "5", "--optima", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("fspace.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["vm_1", "vm_2", "pg_1", "qg_1", "cost", "binding", "component"]);
    let rows = rdr.records().count();
    assert!(rows > 0 && rows <= 10, "{rows}");
    let optima = std::fs::read_to_string(dir.path().join("optima.csv")).unwrap();
    assert!(optima.starts_with("pg_1,qg_1,cost,kind\n"));
    assert!(optima.contains(",global"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["command"], "fspace");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(opf(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(opf(dir.path(), &["solve-local", "--case", "missing.m"]).status.code(), Some(2));
    assert_eq!(opf(dir.path(), &["gap", "--local", "1.0", "--bound", "-1.0"]).status.code(), Some(2));
    assert_eq!(opf(dir.path(), &["modify", "--case", "ieee14", "--dVu", "20", "--dVl", "20"]).status.code(), Some(2));

    // more load than generation capacity
    let mut case = ieee_case("ieee14").unwrap();
    for b in &mut case.buses {
        b.p_load *= 100.0;
    }
    let path = dir.path().join("overloaded.json");
    std::fs::write(&path, emit_case_json(&case)).unwrap();
    let o = opf(dir.path(), &["solve-sdp", "--case", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("Infeasible"));

    assert_eq!(opf(dir.path(), &["solve-sdp", "--case", "ieee14"]).status.code(), Some(0));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn artifacts_do_not_depend_on_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), "1"), (b.path(), "3")] {
        let o = opf(dir, &["--threads", threads, "generate", "--family", "4", "--count", "40", "--seed", "8"]);
        assert!(o.status.success());
    }
    let fa = files(a.path());
    assert!(fa.len() > 1);
    assert_eq!(fa, files(b.path()));

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), "1"), (b.path(), "2")] {
        let case = two_bus_json(dir);
        let o = opf(dir, &["--threads", threads, "fspace", "--case", &case, "--axes", "pg1,qg1", "--grid", "4"]);
        assert!(o.status.success());
    }
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn screen_and_pf_enumerate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = opf(dir.path(), &["screen", "--count", "6", "--starts", "3", "--escalate", "3", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("generated 6"));
    assert!(dir.path().join("screening.csv").exists());

    let case = two_bus_json(dir.path());
    let o = opf(dir.path(), &["pf-enumerate", "--case", &case, "--vm", "1=1.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("2 real solutions from 4 paths"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pf_solutions.json")).unwrap()).unwrap();
    assert_eq!(report["solutions"].as_array().unwrap().len(), 2);
}
