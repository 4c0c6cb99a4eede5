use std::fmt;

use crate::model::{CellRef, ModelError, RangeRef, Workbook};

use super::ast::Expr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DanglingReason {
    UnknownSheet(String),
    UnknownName(String),
    /// The defined name exists but its target does not.
    DanglingName(String),
}

impl fmt::Display for DanglingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DanglingReason::UnknownSheet(s) => write!(f, "unknown sheet `{s}`"),
            DanglingReason::UnknownName(n) => write!(f, "unknown name `{n}`"),
            DanglingReason::DanglingName(n) => write!(f, "name `{n}` has no valid target"),
        }
    }
}

/// One reference occurrence found in a formula, resolved against a workbook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectedRef {
    /// Sheet-qualified with the workbook's canonical sheet name.
    Cell(CellRef),
    Range(RangeRef),
    /// The reference could not be resolved; `text` is its source rendering.
    Dangling { text: String, reason: DanglingReason },
    /// A resolved defined name, kept so callers can track name usage.
    Name { name: String, target: RangeRef },
}

impl CollectedRef {
    pub fn is_dangling(&self) -> bool {
        matches!(self, CollectedRef::Dangling { .. })
    }
}

fn qualify(sheet: &Option<String>, origin: &CellRef, wb: &Workbook) -> Result<String, DanglingReason> {
    match sheet {
        None => {
            let own = origin.sheet.as_deref().unwrap_or_default();
            Ok(wb.sheet_index(own).map(|i| wb.sheets()[i].name().to_string()).unwrap_or_else(|| own.to_string()))
        }
        Some(s) => match wb.sheet_index(s) {
            Some(i) => Ok(wb.sheets()[i].name().to_string()),
            None => Err(DanglingReason::UnknownSheet(s.clone())),
        },
    }
}

/// Every reference occurrence in `ast`, in source order. Unqualified
/// references are placed on `origin`'s sheet; defined names are resolved.
pub fn collect_refs(ast: &Expr, origin: &CellRef, workbook: &Workbook) -> Vec<CollectedRef> {
    let mut out = Vec::new();
    ast.walk(&mut |e| match e {
        Expr::Ref(r) => out.push(match qualify(&r.sheet, origin, workbook) {
            Ok(s) => CollectedRef::Cell(r.clone().with_sheet(Some(s))),
            Err(reason) => CollectedRef::Dangling { text: r.to_string(), reason },
        }),
        Expr::Range(rg) => out.push(match qualify(&rg.start.sheet, origin, workbook) {
            Ok(s) => CollectedRef::Range(rg.clone().with_sheet(Some(s))),
            Err(reason) => CollectedRef::Dangling { text: rg.to_string(), reason },
        }),
        Expr::Name(n) => out.push(match workbook.resolve_name(n) {
            Ok(target) => CollectedRef::Name { name: n.clone(), target },
            Err(ModelError::DanglingName { .. }) => {
                CollectedRef::Dangling { text: n.clone(), reason: DanglingReason::DanglingName(n.clone()) }
            }
            Err(_) => CollectedRef::Dangling { text: n.clone(), reason: DanglingReason::UnknownName(n.clone()) },
        }),
        _ => {}
    });
    out
}
