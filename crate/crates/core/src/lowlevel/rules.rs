use std::collections::BTreeMap;

use crate::formula::{format_number, signature, ArgKind, DanglingReason, Expr, ParseErrorKind, UnaryOp};
use crate::graph::{CellKey, DepGraph, ParsedFormulas};
use crate::model::{CellContent, ErrorCode, RangeRef, Workbook};

use super::{finish, located, Anchor, Finding, Located, RuleConfig};

/// R020-R025 and R027 over every formula and stored value.
pub fn scan_formula_rules(wb: &Workbook, graph: &DepGraph, parsed: &ParsedFormulas, config: &RuleConfig) -> Vec<Finding> {
    finish(formula_rule_items(wb, graph, parsed, config), config, 1)
}

fn anchor(key: CellKey) -> Anchor {
    Anchor::Cell(key.sheet, key.coord.row, key.coord.col)
}

/// Numeric literal with any prefix signs and percent folded in.
fn signed_literal(e: &Expr) -> Option<f64> {
    match e {
        Expr::Number(n) => Some(*n),
        Expr::Unary(UnaryOp::Neg, x) => signed_literal(x).map(|v| -v),
        Expr::Unary(UnaryOp::Plus, x) => signed_literal(x),
        Expr::Unary(UnaryOp::Percent, x) => signed_literal(x).map(|v| v / 100.0),
        _ => None,
    }
}

fn embedded_constants(e: &Expr, config: &RuleConfig, out: &mut Vec<f64>) {
    if let Some(v) = signed_literal(e) {
        if !config.allows_constant(v) {
            out.push(v);
        }
        return;
    }
    match e {
        Expr::Unary(_, x) => embedded_constants(x, config, out),
        Expr::Binary(_, l, r) => {
            embedded_constants(l, config, out);
            embedded_constants(r, config, out);
        }
        Expr::Call(name, args) => {
            let structural = signature(name).map_or(&[][..], |s| s.structural);
            for (i, a) in args.iter().enumerate() {
                if structural.contains(&i) && signed_literal(a).is_some() {
                    continue;
                }
                embedded_constants(a, config, out);
            }
        }
        _ => {}
    }
}

fn is_reference(e: &Expr) -> bool {
    matches!(e, Expr::Ref(_) | Expr::Range(_) | Expr::Name(_))
}

/// Member range of a reference argument, when it can be known statically.
fn static_range(e: &Expr, wb: &Workbook, own_sheet: &str) -> Option<RangeRef> {
    match e {
        Expr::Ref(r) => Some(RangeRef::single(r.clone())),
        Expr::Range(r) => Some(r.clone()),
        Expr::Name(n) => wb.resolve_name(n).ok(),
        _ => None,
    }
    .map(|r| if r.sheet().is_none() { r.with_sheet(Some(own_sheet.to_string())) } else { r })
}

/// Literal numbers of a single column/row vector; `None` if any member is a
/// formula, since its order is then unknown until recalculation.
fn literal_vector(range: &RangeRef, wb: &Workbook) -> Option<Vec<f64>> {
    let sheet = wb.sheet(range.sheet()?)?;
    let mut out = Vec::new();
    for (_, cell) in sheet.cells_in(range) {
        match &cell.content {
            CellContent::Number(n) => out.push(*n),
            CellContent::Formula(_) => return None,
            _ => {}
        }
    }
    Some(out)
}

fn approximate_flag(arg: Option<&Expr>, default_exact: bool) -> Option<bool> {
    match arg {
        None => Some(!default_exact),
        Some(Expr::Bool(b)) => Some(*b),
        Some(e) => signed_literal(e).map(|v| v != 0.0),
    }
}

fn call_problems(e: &Expr, wb: &Workbook, own_sheet: &str, unknown: &mut Vec<String>, bad: &mut Vec<String>) {
    let Expr::Call(name, args) = e else { return };
    let Some(sig) = signature(name) else {
        if !unknown.contains(name) {
            unknown.push(name.clone());
        }
        return;
    };
    if args.len() < sig.min_args || args.len() > sig.max_args {
        let expected = if sig.min_args == sig.max_args {
            sig.min_args.to_string()
        } else if sig.max_args >= 255 {
            format!("at least {}", sig.min_args)
        } else {
            format!("{} to {}", sig.min_args, sig.max_args)
        };
        bad.push(format!("{name} expects {expected} argument(s), got {}", args.len()));
        return;
    }
    for (i, a) in args.iter().enumerate() {
        match sig.kind_of(i) {
            ArgKind::Reference if !is_reference(a) => {
                bad.push(format!("{name} argument {} must be a cell range", i + 1));
            }
            ArgKind::Number if matches!(a, Expr::Text(_)) => {
                bad.push(format!("{name} argument {} is text where a number is required", i + 1));
            }
            ArgKind::Number if matches!(a, Expr::Range(r) if !r.is_single_cell()) => {
                bad.push(format!("{name} argument {} is a range where a single value is required", i + 1));
            }
            _ => {}
        }
    }
    let table = args.get(1).and_then(|t| static_range(t, wb, own_sheet));
    match (name.as_str(), table) {
        ("VLOOKUP", Some(table)) => {
            if let Some(col) = args.get(2).and_then(signed_literal) {
                if col < 1.0 || col.trunc() > f64::from(table.width()) {
                    bad.push(format!("VLOOKUP column {} is outside a {}-column table", format_number(col), table.width()));
                }
            }
            if approximate_flag(args.get(3), false) == Some(true) {
                let mut first = table.clone();
                first.end.col = first.start.col;
                check_sorted("VLOOKUP", &first, wb, bad);
            }
        }
        ("MATCH", Some(vector)) => match args.get(2).map_or(Some(1.0), signed_literal) {
            Some(t) if t == 1.0 => check_sorted("MATCH", &vector, wb, bad),
            Some(t) if t == 0.0 => {}
            Some(t) => bad.push(format!("MATCH type {} is not supported (use 0 or 1)", format_number(t))),
            None => {}
        },
        _ => {}
    }
}

fn check_sorted(func: &str, range: &RangeRef, wb: &Workbook, bad: &mut Vec<String>) {
    if let Some(values) = literal_vector(range, wb) {
        if values.windows(2).any(|w| w[1] < w[0]) {
            bad.push(format!("{func} approximate match over unsorted keys in {range}"));
        }
    }
}

pub(crate) fn formula_rule_items(
    wb: &Workbook,
    graph: &DepGraph,
    parsed: &ParsedFormulas,
    config: &RuleConfig,
) -> Vec<Located> {
    let mut out = Vec::new();
    let mut dangling: BTreeMap<CellKey, Vec<String>> = BTreeMap::new();
    for d in graph.dangling() {
        let why = match &d.reason {
            DanglingReason::UnknownSheet(s) => format!("{} (sheet `{s}` does not exist)", d.text),
            DanglingReason::UnknownName(n) => format!("{n} (no such defined name)"),
            DanglingReason::DanglingName(n) => format!("{n} (name has no valid target)"),
        };
        dangling.entry(d.cell).or_default().push(why);
    }

    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            let key = CellKey { sheet: si, coord };
            let label = wb.cell_label(si, coord);
            let at = anchor(key);
            match &cell.content {
                CellContent::Error(code) => out.push(located(
                    at,
                    "R020",
                    vec![label.clone()],
                    format!("cell holds the error value {}", code.as_str()),
                )),
                CellContent::Formula(text) => match parsed.get(&key) {
                    Some(Ok(ast)) => {
                        let mut errors: Vec<ErrorCode> = Vec::new();
                        let mut unknown = Vec::new();
                        let mut bad = Vec::new();
                        ast.walk(&mut |e| {
                            if let Expr::Error(code) = e {
                                errors.push(*code);
                            }
                            call_problems(e, wb, sheet.name(), &mut unknown, &mut bad);
                        });
                        if !errors.is_empty() {
                            let list: Vec<_> = errors.iter().map(|c| c.as_str()).collect();
                            out.push(located(
                                at,
                                "R020",
                                vec![label.clone()],
                                format!("formula contains the error value {}", list.join(", ")),
                            ));
                        }
                        let mut constants = Vec::new();
                        embedded_constants(ast, config, &mut constants);
                        if !constants.is_empty() {
                            let list: Vec<_> = constants.iter().map(|c| format_number(*c)).collect();
                            out.push(located(
                                at,
                                "R022",
                                vec![label.clone()],
                                format!("embedded constant {} in {text}", list.join(", ")),
                            ));
                        }
                        if !unknown.is_empty() {
                            out.push(located(
                                at,
                                "R023",
                                vec![label.clone()],
                                format!("unknown function {}", unknown.join(", ")),
                            ));
                        }
                        if !bad.is_empty() {
                            out.push(located(at, "R024", vec![label.clone()], bad.join("; ")));
                        }
                    }
                    Some(Err(err)) => {
                        let code = if matches!(err.kind, ParseErrorKind::ReferenceOutOfBounds(_)) { "R021" } else { "R027" };
                        out.push(located(at, code, vec![label.clone()], format!("{text}: {err}")));
                    }
                    None => {}
                },
                _ => {}
            }
            if let Some(whys) = dangling.get(&key) {
                out.push(located(at, "R021", vec![label], format!("dangling reference {}", whys.join(", "))));
            }
        }
    }

    for cycle in graph.find_circularity() {
        let loc: Vec<String> = cycle.iter().map(|k| graph.label(*k)).collect();
        let msg = if cycle.len() == 1 {
            format!("{} refers to itself", loc[0])
        } else {
            format!("circular reference through {} cells: {}", cycle.len(), loc.join(", "))
        };
        out.push(located(anchor(cycle[0]), "R025", loc, msg));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowlevel::audit_workbook;
    use crate::model::workbook_from_json;

    fn run(cells: &str) -> Vec<Finding> {
        let wb = workbook_from_json(&format!(r#"{{"sheets":[{{"name":"S","cells":{{{cells}}}}}]}}"#)).unwrap();
        audit_workbook(&wb, &RuleConfig::default())
    }

    fn codes(f: &[Finding]) -> Vec<&str> {
        f.iter().map(|f| f.rule.as_str()).collect()
    }

    #[test]
    fn embedded_constant() {
        let f = run(r#""A1":{"v":2},"B1":{"f":"=A1*1.175"}"#);
        assert_eq!(codes(&f), vec!["R022"]);
        assert_eq!(f[0].loc, vec!["S!B1"]);
        assert!(f[0].msg.contains("1.175"));
    }

    #[test]
    fn allowlisted_and_structural_constants_pass() {
        let f = run(
            r#""A1":{"v":2},"A2":{"v":3},"B1":{"f":"=ROUND(A1*-1,2)+1-0"},"B2":{"f":"=VLOOKUP(A1,A1:A2,1,FALSE)"},"B3":{"f":"=INDEX(A1:A2,2)"}"#,
        );
        assert!(f.is_empty(), "{f:?}");
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=A1*-2"}"#)), vec!["R022"]);
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=A1*5%"}"#)), vec!["R022"]);
    }

    #[test]
    fn arity_and_unknown_function() {
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=ROUND(A1)"}"#)), vec!["R024"]);
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=SUMM(A1:A2)"}"#)), vec!["R023"]);
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=INDEX(A1*1,1)"}"#)), vec!["R024"]);
        assert_eq!(codes(&run(r#""A1":{"v":2},"B1":{"f":"=ABS(\"x\")"}"#)), vec!["R024"]);
    }

    #[test]
    fn lookup_shape_checks() {
        let table = r#""A1":{"v":5},"A2":{"v":1},"A3":{"v":9},"B1":{"v":1},"B2":{"v":2},"B3":{"v":3}"#;
        let f = run(&format!(r#"{table},"D1":{{"f":"=VLOOKUP(B1,A1:B3,2)"}}"#));
        assert_eq!(codes(&f), vec!["R024"]);
        assert!(f[0].msg.contains("unsorted"));
        let f = run(&format!(r#"{table},"D1":{{"f":"=VLOOKUP(B1,A1:B3,3,FALSE)"}}"#));
        assert!(f[0].msg.contains("column 3"));
        assert!(run(&format!(r#"{table},"D1":{{"f":"=MATCH(B1,B1:B3)"}}"#)).is_empty());
        assert_eq!(codes(&run(&format!(r#"{table},"D1":{{"f":"=MATCH(B1,B1:B3,-1)"}}"#))), vec!["R024"]);
    }

    #[test]
    fn errors_dangling_and_cycles() {
        assert_eq!(codes(&run(r##""A1":{"e":"#N/A"}"##)), vec!["R020"]);
        assert_eq!(codes(&run(r##""A1":{"f":"=IF(TRUE,#REF!,0)"}"##)), vec!["R020"]);
        assert_eq!(codes(&run(r#""A1":{"f":"=Old!B2"}"#)), vec!["R021"]);
        assert_eq!(codes(&run(r#""A1":{"f":"=XFE1"}"#)), vec!["R021"]);
        assert_eq!(codes(&run(r#""A1":{"f":"=SUM(A1"}"#)), vec!["R027"]);
        let f = run(r#""A1":{"f":"=B1"},"B1":{"f":"=A1"}"#);
        assert_eq!(codes(&f), vec!["R025"]);
        assert_eq!(f[0].loc, vec!["S!A1", "S!B1"]);
        assert_eq!(f[0].severity, crate::lowlevel::Severity::Error);
    }
}
