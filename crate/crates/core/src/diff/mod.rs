//! Version comparison and re-review scoping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::formula::DanglingReason;
use crate::graph::{CellKey, DepGraph};
use crate::model::{quote_sheet_name, Cell, CellContent, Coord, Sheet, Workbook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    Added,
    Removed,
    FormulaChanged,
    ValueChanged,
    NameChanged,
    SheetAdded,
    SheetRemoved,
}

impl DiffKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffKind::Added => "added",
            DiffKind::Removed => "removed",
            DiffKind::FormulaChanged => "formula_changed",
            DiffKind::ValueChanged => "value_changed",
            DiffKind::NameChanged => "name_changed",
            DiffKind::SheetAdded => "sheet_added",
            DiffKind::SheetRemoved => "sheet_removed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Subject {
    /// A position on a sheet that exists in the new version.
    Cell(CellKey),
    /// A position on a sheet that only the old version has.
    OldCell,
    Name(String),
    Sheet(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffEntry {
    pub location: String,
    pub kind: DiffKind,
    pub before: Option<String>,
    pub after: Option<String>,
    #[serde(skip)]
    subject: Subject,
}

impl fmt::Display for DiffEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.as_str(), self.location)?;
        match (&self.before, &self.after) {
            (Some(b), Some(a)) => write!(f, ": {b} -> {a}"),
            (Some(b), None) => write!(f, ": {b}"),
            (None, Some(a)) => write!(f, ": {a}"),
            (None, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WorkbookDiff {
    pub entries: Vec<DiffEntry>,
}

impl WorkbookDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DiffOptions {
    /// List every cell of an added or removed sheet after the sheet entry.
    pub verbose: bool,
}

/// Formula text with whitespace outside string literals removed and letters
/// outside strings upper-cased.
pub fn canonical_formula(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    for c in text.chars() {
        if c == '"' {
            in_string = !in_string;
            out.push(c);
        } else if in_string {
            out.push(c);
        } else if !c.is_whitespace() {
            out.extend(c.to_uppercase());
        }
    }
    out
}

fn render_cell(cell: &Cell) -> String {
    match &cell.content {
        CellContent::Formula(f) => f.clone(),
        CellContent::Number(n) => crate::formula::format_number(*n),
        CellContent::Label(t) => format!("{t:?}"),
        CellContent::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        CellContent::Error(e) => e.as_str().to_string(),
        CellContent::Blank => String::new(),
    }
}

fn same_content(a: &CellContent, b: &CellContent) -> bool {
    match (a, b) {
        (CellContent::Formula(x), CellContent::Formula(y)) => canonical_formula(x) == canonical_formula(y),
        (CellContent::Number(x), CellContent::Number(y)) => x == y,
        _ => a == b,
    }
}

fn compare_sheet(old: &Sheet, new: &Sheet, si: usize, out: &mut Vec<DiffEntry>) {
    let coords: BTreeSet<Coord> = old.cells().map(|(c, _)| c).chain(new.cells().map(|(c, _)| c)).collect();
    for coord in coords {
        let location = format!("{}!{}", quote_sheet_name(new.name()), coord);
        let subject = Subject::Cell(CellKey { sheet: si, coord });
        let entry = match (old.cell(coord), new.cell(coord)) {
            (None, Some(n)) => (DiffKind::Added, None, Some(render_cell(n))),
            (Some(o), None) => (DiffKind::Removed, Some(render_cell(o)), None),
            (Some(o), Some(n)) if !same_content(&o.content, &n.content) => {
                let kind = if o.is_formula() || n.is_formula() { DiffKind::FormulaChanged } else { DiffKind::ValueChanged };
                (kind, Some(render_cell(o)), Some(render_cell(n)))
            }
            _ => continue,
        };
        out.push(DiffEntry { location, kind: entry.0, before: entry.1, after: entry.2, subject });
    }
}

fn whole_sheet(sheet: &Sheet, kind: DiffKind, si: Option<usize>, verbose: bool, out: &mut Vec<DiffEntry>) {
    let name = quote_sheet_name(sheet.name());
    out.push(DiffEntry {
        location: name.to_string(),
        kind,
        before: None,
        after: Some(format!("{} cells", sheet.len())),
        subject: Subject::Sheet(sheet.name().to_string()),
    });
    if !verbose {
        return;
    }
    for (coord, cell) in sheet.cells() {
        let (cell_kind, before, after, subject) = match si {
            Some(si) => (DiffKind::Added, None, Some(render_cell(cell)), Subject::Cell(CellKey { sheet: si, coord })),
            None => (DiffKind::Removed, Some(render_cell(cell)), None, Subject::OldCell),
        };
        out.push(DiffEntry { location: format!("{name}!{coord}"), kind: cell_kind, before, after, subject });
    }
}

/// Cell, sheet and defined-name differences from `old` to `new`. Sheets are
/// matched by case-insensitive name. Entries follow the new version's sheet
/// order, then removed sheets, then names.
pub fn diff_workbooks(old: &Workbook, new: &Workbook, opts: DiffOptions) -> WorkbookDiff {
    let mut entries = Vec::new();
    for (si, sheet) in new.sheets().iter().enumerate() {
        match old.sheet(sheet.name()) {
            Some(before) => compare_sheet(before, sheet, si, &mut entries),
            None => whole_sheet(sheet, DiffKind::SheetAdded, Some(si), opts.verbose, &mut entries),
        }
    }
    for sheet in old.sheets() {
        if new.sheet_index(sheet.name()).is_none() {
            whole_sheet(sheet, DiffKind::SheetRemoved, None, opts.verbose, &mut entries);
        }
    }
    for e in entries.iter_mut().filter(|e| e.kind == DiffKind::SheetRemoved) {
        e.before = e.after.take();
    }

    let by_key = |wb: &Workbook| -> BTreeMap<String, (String, String)> {
        wb.names().iter().map(|n| (n.name.to_uppercase(), (n.name.clone(), n.target.to_string()))).collect()
    };
    let (old_names, new_names) = (by_key(old), by_key(new));
    let keys: BTreeSet<&String> = old_names.keys().chain(new_names.keys()).collect();
    for k in keys {
        let before = old_names.get(k);
        let after = new_names.get(k);
        let same = matches!((before, after), (Some(b), Some(a)) if b.1.eq_ignore_ascii_case(&a.1));
        if same {
            continue;
        }
        let display = after.or(before).map(|x| x.0.clone()).unwrap_or_default();
        entries.push(DiffEntry {
            location: display,
            kind: DiffKind::NameChanged,
            before: before.map(|b| b.1.clone()),
            after: after.map(|a| a.1.clone()),
            subject: Subject::Name(k.clone()),
        });
    }
    WorkbookDiff { entries }
}

/// Cells of the new version that changed and the cells whose values can be
/// affected by those changes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewScope {
    pub changed: BTreeSet<CellKey>,
    pub impacted: BTreeSet<CellKey>,
}

impl ReviewScope {
    /// Changed and impacted cells together, labelled against `graph`.
    pub fn labels(&self, graph: &DepGraph) -> Vec<String> {
        self.changed.union(&self.impacted).map(|k| graph.label(*k)).collect()
    }
}

/// Re-review scope for `diff` against the new version's dependency graph.
/// Renamed or retargeted names pull in every formula that uses them; a removed
/// sheet pulls in every formula left pointing at it.
pub fn rereview_scope(diff: &WorkbookDiff, new: &Workbook, graph: &DepGraph) -> ReviewScope {
    let mut changed = BTreeSet::new();
    for e in &diff.entries {
        match &e.subject {
            Subject::Cell(k) => {
                changed.insert(*k);
            }
            Subject::OldCell => {}
            Subject::Name(upper) => {
                if let Some(users) = graph.name_uses().get(upper) {
                    changed.extend(users.iter().copied());
                }
                // a name that no longer resolves shows up as a dangling use
                for d in graph.dangling() {
                    if let DanglingReason::UnknownName(n) | DanglingReason::DanglingName(n) = &d.reason {
                        if n.eq_ignore_ascii_case(upper) {
                            changed.insert(d.cell);
                        }
                    }
                }
            }
            Subject::Sheet(name) => match new.sheet_index(name) {
                Some(si) if e.kind == DiffKind::SheetAdded => {
                    changed.extend(new.sheets()[si].cells().map(|(coord, _)| CellKey { sheet: si, coord }));
                }
                _ => {
                    for d in graph.dangling() {
                        if matches!(&d.reason, DanglingReason::UnknownSheet(s) if s.eq_ignore_ascii_case(name)) {
                            changed.insert(d.cell);
                        }
                    }
                }
            },
        }
    }
    let impacted = graph.transitive_dependents(changed.iter().copied()).into_iter().filter(|k| !changed.contains(k)).collect();
    ReviewScope { changed, impacted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::model::workbook_from_json;

    fn wb(json: &str) -> Workbook {
        workbook_from_json(json).unwrap()
    }

    #[test]
    fn identical_versions() {
        let a = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"v":1},"B1":{"f":"=A1 * 2"}}}]}"#);
        let b = wb(r#"{"sheets":[{"name":"s","cells":{"A1":{"v":1},"B1":{"f":"=a1*2"}}}]}"#);
        assert!(diff_workbooks(&a, &a, DiffOptions::default()).is_empty());
        assert!(diff_workbooks(&a, &b, DiffOptions::default()).is_empty());
    }

    #[test]
    fn classifies_changes() {
        let a = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"v":1},"A2":{"v":2},"B1":{"f":"=A1*2"},"C1":{"f":"=B1"}}},
                     {"name":"Old","cells":{"A1":{"v":5}}}],
                     "names":[{"name":"Rate","ref":"S!A1"}]}"#);
        let b = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"v":3},"B1":{"f":"=A1*3"},"C1":{"v":4},"D1":{"v":"x"}}},
                     {"name":"New","cells":{"A1":{"v":5}}}],
                     "names":[{"name":"Rate","ref":"S!A2"}]}"#);
        let d = diff_workbooks(&a, &b, DiffOptions::default());
        let lines: Vec<String> = d.entries.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            lines,
            [
                "value_changed S!A1: 1 -> 3",
                "formula_changed S!B1: =A1*2 -> =A1*3",
                "formula_changed S!C1: =B1 -> 4",
                "added S!D1: \"x\"",
                "removed S!A2: 2",
                "sheet_added New: 1 cells",
                "sheet_removed Old: 1 cells",
                "name_changed Rate: S!A1 -> S!A2",
            ]
        );
        let verbose = diff_workbooks(&a, &b, DiffOptions { verbose: true });
        assert_eq!(verbose.len(), d.len() + 2);
    }

    #[test]
    fn scope_follows_dependents() {
        let a = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"v":1},"B1":{"f":"=A1"},"C1":{"f":"=B1+1"},"D1":{"f":"=Rate"},"E1":{"v":0}}}],
                     "names":[{"name":"Rate","ref":"S!E1"}]}"#);
        let b = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"v":2},"B1":{"f":"=A1"},"C1":{"f":"=B1+1"},"D1":{"f":"=Rate"},"E1":{"v":0},"F1":{"f":"=D1"}}}],
                     "names":[{"name":"Rate","ref":"S!A1"}]}"#);
        let g = build_graph(&b);
        let d = diff_workbooks(&a, &b, DiffOptions::default());
        let scope = rereview_scope(&d, &b, &g);
        let labels = scope.labels(&g);
        assert_eq!(labels, vec!["S!A1", "S!B1", "S!C1", "S!D1", "S!F1"]);
    }

    #[test]
    fn removed_sheet_scope() {
        let a = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"f":"=In!A1"},"B1":{"f":"=A1"}}},{"name":"In","cells":{"A1":{"v":1}}}]}"#);
        let b = wb(r#"{"sheets":[{"name":"S","cells":{"A1":{"f":"=In!A1"},"B1":{"f":"=A1"}}}]}"#);
        let g = build_graph(&b);
        let scope = rereview_scope(&diff_workbooks(&a, &b, DiffOptions::default()), &b, &g);
        assert_eq!(scope.labels(&g), vec!["S!A1", "S!B1"]);
    }
}
