use std::collections::{BTreeMap, BTreeSet};

use crate::formula::{normalize_r1c1, render_a1, Expr};
use crate::graph::{CellKey, ParsedFormulas};
use crate::model::{CellRef, Coord, RangeRef, Workbook};

use super::{finish, located, Anchor, Finding, Located, RuleConfig};

/// Maximal horizontal and vertical runs of at least `min_run` contiguous
/// formula cells on one sheet. Horizontal runs come first.
pub fn formula_runs(cells: &BTreeSet<Coord>, min_run: usize) -> Vec<Vec<Coord>> {
    let mut runs = Vec::new();
    let mut collect = |ordered: Vec<Coord>, adjacent: &dyn Fn(Coord, Coord) -> bool| {
        let mut current: Vec<Coord> = Vec::new();
        for c in ordered {
            if current.last().is_some_and(|&p| !adjacent(p, c)) {
                if current.len() >= min_run {
                    runs.push(std::mem::take(&mut current));
                }
                current.clear();
            }
            current.push(c);
        }
        if current.len() >= min_run {
            runs.push(current);
        }
    };
    collect(cells.iter().copied().collect(), &|p, c| p.row == c.row && p.col + 1 == c.col);
    let mut by_col: Vec<Coord> = cells.iter().copied().collect();
    by_col.sort_by_key(|c| (c.col, c.row));
    collect(by_col, &|p, c| p.col == c.col && p.row + 1 == c.row);
    runs
}

fn run_label(wb: &Workbook, sheet: usize, run: &[Coord]) -> String {
    let (first, last) = (run[0], run[run.len() - 1]);
    let name = wb.sheets()[sheet].name().to_string();
    RangeRef::new(CellRef::on_sheet(name.clone(), first.col, first.row), CellRef::on_sheet(name, last.col, last.row))
        .to_string()
}

fn formula_cells(parsed: &ParsedFormulas, sheet: usize) -> BTreeSet<Coord> {
    parsed.cells.keys().filter(|k| k.sheet == sheet).map(|k| k.coord).collect()
}

fn normalized(wb: &Workbook, parsed: &ParsedFormulas, key: CellKey) -> String {
    match parsed.get(&key) {
        Some(Ok(ast)) => {
            let origin = CellRef::on_sheet(wb.sheets()[key.sheet].name(), key.coord.col, key.coord.row);
            normalize_r1c1(ast, &origin).as_str().to_string()
        }
        _ => format!("!{}", wb.cell(key.sheet, key.coord).and_then(|c| c.formula_text()).unwrap_or_default()),
    }
}

/// R030: cells outside a dominant normalized formula in their run.
pub fn detect_region_outliers(wb: &Workbook, config: &RuleConfig) -> Vec<Finding> {
    finish(outlier_items(wb, &ParsedFormulas::parse(wb), config), config, 1)
}

pub(crate) fn outlier_items(wb: &Workbook, parsed: &ParsedFormulas, config: &RuleConfig) -> Vec<Located> {
    let mut out = Vec::new();
    let mut flagged = BTreeSet::new();
    for si in 0..wb.sheets().len() {
        for run in formula_runs(&formula_cells(parsed, si), config.min_run) {
            let forms: Vec<String> =
                run.iter().map(|&coord| normalized(wb, parsed, CellKey { sheet: si, coord })).collect();
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for f in &forms {
                *counts.entry(f.as_str()).or_default() += 1;
            }
            let (major, count) = counts.iter().max_by_key(|(_, c)| **c).map(|(f, c)| (*f, *c)).expect("run non-empty");
            let share = count as f64 / run.len() as f64;
            if 2 * count <= run.len() || share < config.majority_threshold {
                continue;
            }
            let label = run_label(wb, si, &run);
            for (coord, form) in run.iter().zip(&forms) {
                if form != major && flagged.insert((si, *coord)) {
                    out.push(located(
                        Anchor::Cell(si, coord.row, coord.col),
                        "R030",
                        vec![wb.cell_label(si, *coord)],
                        format!("formula differs from {count} of {} cells in {label} (common form {major})", run.len()),
                    ));
                }
            }
        }
    }
    out
}

/// Formula with every reference replaced by a placeholder, plus the fixity
/// flags of each reference in order.
fn skeleton(ast: &Expr) -> (String, Vec<[bool; 4]>) {
    let mut fixity = Vec::new();
    let blanked = ast
        .map_refs::<()>(&mut |e| {
            let (sheet, flags) = match e {
                Expr::Ref(r) => (&r.sheet, [r.col_abs, r.row_abs, r.col_abs, r.row_abs]),
                Expr::Range(r) => (&r.start.sheet, [r.start.col_abs, r.start.row_abs, r.end.col_abs, r.end.row_abs]),
                _ => unreachable!("map_refs only visits references"),
            };
            fixity.push(flags);
            Ok(Expr::Name(format!("\u{1}{}", sheet.as_deref().unwrap_or_default())))
        })
        .expect("placeholder mapping is infallible");
    (render_a1(&blanked), fixity)
}

fn describe(flags: [bool; 4]) -> &'static str {
    match flags {
        [false, false, false, false] => "relative",
        [true, true, true, true] => "absolute",
        _ => "mixed",
    }
}

/// R026: within a copied run, a reference whose `$` pattern is unlike that of
/// all its siblings while the siblings agree among themselves.
pub fn detect_fixity_mismatches(wb: &Workbook, config: &RuleConfig) -> Vec<Finding> {
    finish(fixity_items(wb, &ParsedFormulas::parse(wb), config), config, 1)
}

pub(crate) fn fixity_items(wb: &Workbook, parsed: &ParsedFormulas, config: &RuleConfig) -> Vec<Located> {
    let mut out = Vec::new();
    let mut flagged = BTreeSet::new();
    for si in 0..wb.sheets().len() {
        for run in formula_runs(&formula_cells(parsed, si), config.min_run) {
            let mut groups: BTreeMap<String, Vec<(Coord, Vec<[bool; 4]>)>> = BTreeMap::new();
            for &coord in &run {
                if let Some(Ok(ast)) = parsed.get(&CellKey { sheet: si, coord }) {
                    let (skel, fix) = skeleton(ast);
                    if !fix.is_empty() {
                        groups.entry(skel).or_default().push((coord, fix));
                    }
                }
            }
            for members in groups.values().filter(|g| g.len() >= config.min_run) {
                let positions = members[0].1.len();
                for (i, (coord, fix)) in members.iter().enumerate() {
                    let odd = (0..positions).find(|&p| {
                        let mut others = members.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.1[p]);
                        let first = others.next().expect("group has siblings");
                        fix[p] != first && others.all(|o| o == first)
                    });
                    let Some(p) = odd else { continue };
                    if !flagged.insert((si, *coord)) {
                        continue;
                    }
                    let sibling = members[if i == 0 { 1 } else { 0 }].1[p];
                    out.push(located(
                        Anchor::Cell(si, coord.row, coord.col),
                        "R026",
                        vec![wb.cell_label(si, *coord)],
                        format!(
                            "reference {} is {} while the other {} copies in {} use {}",
                            p + 1,
                            describe(fix[p]),
                            members.len() - 1,
                            run_label(wb, si, &run),
                            describe(sibling)
                        ),
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowlevel::audit_workbook;
    use crate::model::workbook_from_json;

    fn wb(cells: &str) -> Workbook {
        workbook_from_json(&format!(r#"{{"sheets":[{{"name":"S","cells":{{{cells}}}}}]}}"#)).unwrap()
    }

    fn column(formulas: &[&str]) -> String {
        formulas.iter().enumerate().map(|(i, f)| format!(r#""B{}":{{"f":"{f}"}}"#, i + 1)).collect::<Vec<_>>().join(",")
    }

    #[test]
    fn runs_split_on_gaps() {
        let cells: BTreeSet<Coord> =
            ["A1", "B1", "C1", "E1", "A2", "A3"].iter().map(|a| Coord::parse_a1(a).unwrap()).collect();
        let runs = formula_runs(&cells, 3);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].len(), 3);
        assert_eq!(runs[1], vec![Coord::new(1, 1), Coord::new(1, 2), Coord::new(1, 3)]);
    }

    #[test]
    fn outlier_at_end_of_copied_column() {
        let mut f: Vec<String> = (1..=9).map(|r| format!("=A{r}+C{r}")).collect();
        f.push("=A10-C10".into());
        let refs: Vec<&str> = f.iter().map(String::as_str).collect();
        let found = detect_region_outliers(&wb(&column(&refs)), &RuleConfig::default());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].loc, vec!["S!B10"]);
    }

    #[test]
    fn no_majority_no_finding() {
        let found = detect_region_outliers(&wb(&column(&["=A1+C1", "=A2-C2", "=A3*C3"])), &RuleConfig::default());
        assert!(found.is_empty());
        // 2 of 3 is below the 0.7 threshold
        let found = detect_region_outliers(&wb(&column(&["=A1+C1", "=A2+C2", "=A3*C3"])), &RuleConfig::default());
        assert!(found.is_empty());
    }

    #[test]
    fn fixity_mismatch() {
        let cells = column(&["=A1*$C$1", "=A2*$C$1", "=A3*C3", "=A4*$C$1"]);
        let found = audit_workbook(&wb(&cells), &RuleConfig::default());
        let codes: Vec<_> = found.iter().map(|f| (f.rule.as_str(), f.loc[0].as_str())).collect();
        assert_eq!(codes, vec![("R026", "S!B3")]);
        assert!(found[0].msg.contains("relative"));
    }

    #[test]
    fn consistent_fixity_is_clean() {
        let cells = column(&["=A1*$C$1", "=A2*$C$1", "=A3*$C$1"]);
        assert!(audit_workbook(&wb(&cells), &RuleConfig::default()).is_empty());
    }
}
