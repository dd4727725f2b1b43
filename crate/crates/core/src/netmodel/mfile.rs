//! MATPOWER-style `.m` case files.
//!
//! Only the subset needed for OPF is read: `baseMVA`, `bus`, `gen`, `branch`
//! and `gencost` (polynomial model 2). Out-of-service generators and branches
//! are dropped together with their cost rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::case::{Branch, Bus, BusKind, Case, CostPoly, Generator};
use super::NetError;

struct Matrix {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

/// Parse MATPOWER case text into a validated [`Case`].
pub fn parse_mfile(text: &str) -> Result<Case, NetError> {
    let mut scalars: HashMap<String, (usize, f64)> = HashMap::new();
    let mut matrices: HashMap<String, Matrix> = HashMap::new();

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l)));
    while let Some((lineno, line)) = lines.next() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("mpc.") else { continue };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(syntax(lineno, "expected `=` after field name"));
        };
        let name = name.trim().to_string();
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            // rows end at `;` or at a line break
            let mut rows = Vec::new();
            let mut chunk = body.to_string();
            let mut chunk_line = lineno;
            loop {
                let closed = chunk.find(']');
                let content = closed.map_or(chunk.as_str(), |pos| &chunk[..pos]);
                for piece in content.split(';') {
                    push_row(&mut rows, piece, chunk_line)?;
                }
                if closed.is_some() {
                    break;
                }
                let (l, c) = lines.next().ok_or_else(|| syntax(lineno, &format!("unterminated matrix `{name}`")))?;
                chunk = c;
                chunk_line = l;
            }
            matrices.insert(name, Matrix { line: lineno, rows });
        } else if name == "version" {
            continue;
        } else {
            let value = rhs.trim_end_matches(';').trim();
            let v: f64 = value.parse().map_err(|_| syntax(lineno, &format!("cannot parse `{value}` as a number")))?;
            scalars.insert(name, (lineno, v));
        }
    }

    let base_mva = scalars.get("baseMVA").map(|&(_, v)| v).ok_or(NetError::MissingMatrix("baseMVA"))?;
    let bus = matrices.get("bus").ok_or(NetError::MissingMatrix("bus"))?;
    let gen = matrices.get("gen").ok_or(NetError::MissingMatrix("gen"))?;
    let branch = matrices.get("branch").ok_or(NetError::MissingMatrix("branch"))?;
    let gencost = matrices.get("gencost").ok_or(NetError::MissingMatrix("gencost"))?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    for (line, row) in &bus.rows {
        need_cols(row, 13, *line, "bus")?;
        let kind = match row[1] as i64 {
            1 | 4 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Ref,
            t => return Err(syntax(*line, &format!("unknown bus type {t}"))),
        };
        buses.push(Bus {
            id: as_id(row[0], *line)?,
            kind,
            p_load: row[2],
            q_load: row[3],
            shunt_g: row[4] / base_mva,
            shunt_b: row[5] / base_mva,
            v_max: row[11],
            v_min: row[12],
        });
    }

    if gencost.rows.len() < gen.rows.len() {
        return Err(syntax(
            gencost.line,
            &format!("{} gencost rows for {} generators", gencost.rows.len(), gen.rows.len()),
        ));
    }
    let mut gens = Vec::new();
    let mut costs = Vec::new();
    for ((line, row), (cline, crow)) in gen.rows.iter().zip(&gencost.rows) {
        need_cols(row, 10, *line, "gen")?;
        let cost = parse_cost(crow, *cline)?;
        if row[7] <= 0.0 {
            continue;
        }
        gens.push(Generator { bus: as_id(row[0], *line)?, q_max: row[3], q_min: row[4], p_max: row[8], p_min: row[9] });
        costs.push(cost);
    }

    let mut branches = Vec::new();
    for (line, row) in &branch.rows {
        need_cols(row, 11, *line, "branch")?;
        if row[10] <= 0.0 {
            continue;
        }
        branches.push(Branch {
            from_bus: as_id(row[0], *line)?,
            to_bus: as_id(row[1], *line)?,
            r: row[2],
            x: row[3],
            b_sh: row[4],
            s_max: row[5],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            shift: row[9],
        });
    }

    let case = Case { base_mva, buses, gens, branches, costs };
    case.validate()?;
    Ok(case)
}

fn parse_cost(row: &[f64], line: usize) -> Result<CostPoly, NetError> {
    need_cols(row, 4, line, "gencost")?;
    if row[0] as i64 != 2 {
        return Err(NetError::Unsupported(format!(
            "line {line}: only polynomial cost model 2 is accepted (got model {})",
            row[0]
        )));
    }
    let n = row[3] as usize;
    let coeffs = row
        .get(4..4 + n)
        .ok_or_else(|| syntax(line, &format!("gencost declares {n} coefficients but row is short")))?;
    // high-to-low degree; anything above quadratic must be zero
    let lead = n.saturating_sub(3);
    if coeffs[..lead].iter().any(|&c| c != 0.0) {
        return Err(NetError::Unsupported(format!("line {line}: cost polynomial of degree > 2")));
    }
    let tail = &coeffs[lead..];
    let mut c = [0.0; 3];
    c[3 - tail.len()..].copy_from_slice(tail);
    Ok(CostPoly { c2: c[0], c1: c[1], c0: c[2] })
}

fn push_row(rows: &mut Vec<(usize, Vec<f64>)>, text: &str, line: usize) -> Result<(), NetError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(());
    }
    let row = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| syntax(line, &format!("cannot parse `{t}` as a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    rows.push((line, row));
    Ok(())
}

fn strip_comment(line: &str) -> String {
    match line.find('%') {
        Some(p) => line[..p].to_string(),
        None => line.to_string(),
    }
}

fn need_cols(row: &[f64], n: usize, line: usize, what: &str) -> Result<(), NetError> {
    if row.len() < n {
        return Err(syntax(line, &format!("{what} row has {} columns, need at least {n}", row.len())));
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<u32, NetError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(syntax(line, &format!("invalid bus number {v}")))
    }
}

fn syntax(line: usize, msg: &str) -> NetError {
    NetError::Syntax { line, msg: msg.to_string() }
}

/// Write a case back out in MATPOWER format.
pub fn emit_mfile(case: &Case, name: &str) -> String {
    let base = case.base_mva;
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", num(base));
    let _ = writeln!(s, "\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let t = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Ref => 3,
        };
        let _ = writeln!(
            s,
            "\t{}\t{t}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.id,
            num(b.p_load),
            num(b.q_load),
            num(b.shunt_g * base),
            num(b.shunt_b * base),
            num(b.v_max),
            num(b.v_min)
        );
    }
    let _ = writeln!(s, "];\n\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.gens {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{};",
            g.bus,
            num(g.q_max),
            num(g.q_min),
            num(base),
            num(g.p_max),
            num(g.p_min)
        );
    }
    let _ = writeln!(s, "];\n\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t1;",
            br.from_bus,
            br.to_bus,
            num(br.r),
            num(br.x),
            num(br.b_sh),
            num(br.s_max),
            num(br.tap),
            num(br.shift)
        );
    }
    let _ = writeln!(s, "];\n\n%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0");
    let _ = writeln!(s, "mpc.gencost = [");
    for c in &case.costs {
        let _ = writeln!(s, "\t2\t0\t0\t3\t{}\t{}\t{};", num(c.c2), num(c.c1), num(c.c0));
    }
    let _ = writeln!(s, "];");
    s
}

// shortest representation that round-trips
fn num(v: f64) -> String {
    format!("{v:?}").trim_end_matches(".0").to_string()
}
