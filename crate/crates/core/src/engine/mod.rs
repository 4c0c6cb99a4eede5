//! Deterministic recalculation: evaluates every formula in dependency order,
//! marks circular cells `#CIRC!` and checks cached results.

mod eval;
mod functions;
mod round;
mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::formula::{ParseErrorKind, parse_formula};
use crate::graph::{CellKey, DepGraph, ParsedFormulas};
use crate::lowlevel::{Finding, Severity};
use crate::model::{CellRef, Coord, ErrorCode, Literal, ModelError, Workbook};

pub use eval::{eval_formula, Environment};
pub use functions::{irr, npv};
pub use round::{round_decimal, RoundMode};
pub use value::Value;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0} holds a formula; overriding it is refused")]
    OverrideFormula(String),
    #[error("cannot resolve `{0}` to a cell")]
    UnknownTarget(String),
    #[error("`{0}` covers more than one cell")]
    NotSingleCell(String),
    #[error("invalid override value for {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `Sheet!B2` or a single-cell defined name.
pub fn resolve_target(wb: &Workbook, text: &str) -> Result<CellKey, EngineError> {
    let unknown = || EngineError::UnknownTarget(text.to_string());
    if text.contains('!') {
        let r: CellRef = text.parse().map_err(|_| unknown())?;
        let sheet = r.sheet.as_deref().and_then(|s| wb.sheet_index(s)).ok_or_else(unknown)?;
        return Ok(CellKey { sheet, coord: r.coord() });
    }
    let range = wb.resolve_name(text).map_err(|_| unknown())?;
    if !range.is_single_cell() {
        return Err(EngineError::NotSingleCell(text.to_string()));
    }
    let sheet = range.sheet().and_then(|s| wb.sheet_index(s)).ok_or_else(unknown)?;
    Ok(CellKey { sheet, coord: range.start.coord() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecalcResult {
    sheet_names: Vec<String>,
    /// Value of every non-blank cell (and every overridden cell).
    pub values: BTreeMap<CellKey, Value>,
    /// Formula cells in the order they were evaluated.
    pub order: Vec<CellKey>,
    /// Formula cells outside cycles whose value is an error.
    pub cells_in_error: Vec<CellKey>,
    pub cycle_cells: Vec<CellKey>,
}

impl RecalcResult {
    pub fn value(&self, key: &CellKey) -> Value {
        self.values.get(key).cloned().unwrap_or(Value::Blank)
    }

    pub fn label(&self, key: CellKey) -> String {
        format!("{}!{}", crate::model::quote_sheet_name(&self.sheet_names[key.sheet]), key.coord)
    }

    /// Value at `Sheet!A1` or a single-cell name.
    pub fn lookup(&self, wb: &Workbook, target: &str) -> Result<Value, EngineError> {
        Ok(self.value(&resolve_target(wb, target)?))
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Out {
            values: BTreeMap<String, Value>,
            order: Vec<String>,
            cells_in_error: Vec<String>,
            cycle_cells: Vec<String>,
        }
        let labels = |keys: &[CellKey]| keys.iter().map(|k| self.label(*k)).collect::<Vec<_>>();
        let out = Out {
            values: self.values.iter().map(|(k, v)| (self.label(*k), v.clone())).collect(),
            order: labels(&self.order),
            cells_in_error: labels(&self.cells_in_error),
            cycle_cells: labels(&self.cycle_cells),
        };
        serde_json::to_value(out).expect("recalc result serializes")
    }
}

struct Store<'a> {
    wb: &'a Workbook,
    values: HashMap<CellKey, Value>,
}

impl Environment for Store<'_> {
    fn workbook(&self) -> &Workbook {
        self.wb
    }

    fn value(&self, sheet: usize, coord: Coord) -> Value {
        self.values.get(&CellKey { sheet, coord }).cloned().unwrap_or(Value::Blank)
    }
}

/// Applies literal overrides to a copy of the workbook. Formula targets are refused.
pub fn apply_overrides(wb: &Workbook, overrides: &BTreeMap<CellKey, Value>) -> Result<Workbook, EngineError> {
    let mut builder = wb.to_builder();
    for (key, v) in overrides {
        let label = || {
            wb.sheets().get(key.sheet).map_or_else(|| format!("#{}!{}", key.sheet, key.coord), |_| wb.cell_label(key.sheet, key.coord))
        };
        if wb.cell(key.sheet, key.coord).is_some_and(|c| c.is_formula()) {
            return Err(EngineError::OverrideFormula(label()));
        }
        if matches!(v, Value::Error(ErrorCode::Circ)) {
            return Err(EngineError::InvalidValue(label()));
        }
        builder.set_cell(key.sheet, key.coord, v.to_cell())?;
    }
    Ok(builder.build()?)
}

pub fn recalculate(wb: &Workbook, overrides: &BTreeMap<CellKey, Value>) -> Result<RecalcResult, EngineError> {
    if overrides.is_empty() {
        let parsed = ParsedFormulas::parse(wb);
        let graph = DepGraph::build(wb, &parsed);
        return Ok(recalculate_parsed(wb, &parsed, &graph));
    }
    let patched = apply_overrides(wb, overrides)?;
    let parsed = ParsedFormulas::parse(&patched);
    let graph = DepGraph::build(&patched, &parsed);
    Ok(recalculate_parsed(&patched, &parsed, &graph))
}

/// Recalculates with a pre-parsed formula set and its graph.
pub fn recalculate_parsed(wb: &Workbook, parsed: &ParsedFormulas, graph: &DepGraph) -> RecalcResult {
    let mut values: HashMap<CellKey, Value> = HashMap::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            if !cell.is_formula() {
                values.insert(CellKey { sheet: si, coord }, Value::from_content(&cell.content));
            }
        }
    }
    let cycles = graph.find_circularity();
    let cycle_cells: Vec<CellKey> = cycles.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let cycle_ids: BTreeSet<usize> = cycle_cells.iter().filter_map(|k| graph.node_id(k)).collect();
    for key in &cycle_cells {
        if parsed.get(key).is_some() {
            values.insert(*key, Value::Error(ErrorCode::Circ));
        }
    }
    for (key, ast) in &parsed.cells {
        if let Err(e) = ast {
            let code = if matches!(e.kind, ParseErrorKind::ReferenceOutOfBounds(_)) { ErrorCode::Ref } else { ErrorCode::Name };
            values.insert(*key, Value::Error(code));
        }
    }

    let order_ids = graph.evaluation_order(&cycle_ids);
    let mut store = Store { wb, values };
    let mut order = Vec::with_capacity(order_ids.len());
    for id in order_ids {
        let key = graph.node(id);
        let Some(Ok(ast)) = parsed.get(&key) else { continue };
        let origin = CellRef::on_sheet(wb.sheets()[key.sheet].name(), key.coord.col, key.coord.row);
        let v = eval_formula(ast, &origin, &store);
        store.values.insert(key, v);
        order.push(key);
    }

    let cells_in_error = parsed
        .cells
        .keys()
        .filter(|k| store.values.get(k).is_some_and(Value::is_error) && !cycle_cells.contains(k))
        .copied()
        .collect();
    RecalcResult {
        sheet_names: graph.sheet_names().to_vec(),
        values: store.values.into_iter().collect(),
        order,
        cells_in_error,
        cycle_cells,
    }
}

/// Evaluates a single formula text against already computed values.
pub fn eval_text(wb: &Workbook, result: &RecalcResult, origin: &CellRef, text: &str) -> Value {
    match parse_formula(text) {
        Ok(ast) => {
            let store = Store { wb, values: result.values.iter().map(|(k, v)| (*k, v.clone())).collect() };
            eval_formula(&ast, origin, &store)
        }
        Err(_) => Value::Error(ErrorCode::Name),
    }
}

fn cached_matches(cached: &Literal, computed: &Value, tolerance: f64) -> bool {
    match (cached, computed) {
        (Literal::Number(a), Value::Number(b)) => (a - b).abs() <= tolerance,
        (Literal::Text(a), Value::Text(b)) => a == b,
        (Literal::Text(a), Value::Error(code)) => a == code.as_str(),
        (Literal::Bool(a), Value::Bool(b)) => a == b,
        _ => false,
    }
}

fn show_literal(l: &Literal) -> String {
    match l {
        Literal::Number(n) => crate::formula::format_number(*n),
        Literal::Text(t) => format!("{t:?}"),
        Literal::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
    }
}

/// R040 for every formula cell whose cached value disagrees with the
/// recalculated one. Findings are numbered from 1 in cell order.
pub fn verify_cached_values(wb: &Workbook, result: &RecalcResult, tolerance: f64) -> Vec<Finding> {
    let mut out = Vec::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            let (true, Some(cached)) = (cell.is_formula(), &cell.cached) else { continue };
            let computed = result.value(&CellKey { sheet: si, coord });
            if cached_matches(cached, &computed, tolerance) {
                continue;
            }
            let mut f = Finding::new(
                "R040",
                Severity::Warning,
                vec![wb.cell_label(si, coord)],
                format!("cached value {} but recalculation gives {computed}", show_literal(cached)),
            );
            f.id = out.len() as u64 + 1;
            out.push(f);
        }
    }
    out
}
