use std::fmt::Write;

use super::{Cmp, Model, Sense, VarKind};

fn term(out: &mut String, first: bool, coef: f64, name: &str) {
    match (coef < 0.0, first) {
        (true, _) => out.push_str(" -"),
        (false, false) => out.push_str(" +"),
        (false, true) => {}
    }
    let _ = write!(out, " {} {name}", coef.abs());
}

/// Renders a model in CPLEX LP text format for debugging.
pub fn to_lp_format(model: &Model) -> String {
    let mut s = String::new();
    s.push_str(match model.sense {
        Sense::Maximize => "Maximize\n obj:",
        Sense::Minimize => "Minimize\n obj:",
    });
    let mut first = true;
    for v in model.vars().iter().filter(|v| v.objective != 0.0) {
        term(&mut s, first, v.objective, &v.name);
        first = false;
    }
    if first {
        s.push_str(" 0");
    }
    s.push_str("\nSubject To\n");
    for c in model.cons() {
        let _ = write!(s, " {}:", c.name);
        for (i, &(v, a)) in c.terms.iter().enumerate() {
            term(&mut s, i == 0, a, &model.var(v).name);
        }
        if c.terms.is_empty() {
            s.push_str(" 0");
        }
        let op = match c.cmp {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        };
        let _ = writeln!(s, " {op} {}", c.rhs);
    }
    s.push_str("Bounds\n");
    for v in model.vars() {
        let lo = if v.lower == f64::NEG_INFINITY { "-inf".to_string() } else { v.lower.to_string() };
        let hi = if v.upper == f64::INFINITY { "+inf".to_string() } else { v.upper.to_string() };
        let _ = writeln!(s, " {lo} <= {} <= {hi}", v.name);
    }
    let ints: Vec<&str> = model.vars().iter().filter(|v| v.kind != VarKind::Continuous).map(|v| v.name.as_str()).collect();
    if !ints.is_empty() {
        s.push_str("General\n");
        for n in ints {
            let _ = writeln!(s, " {n}");
        }
    }
    s.push_str("End\n");
    s
}
