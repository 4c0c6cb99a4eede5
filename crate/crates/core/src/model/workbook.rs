use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::address::{quote_sheet_name, Coord, RangeRef};
use super::ModelError;

/// The closed set of spreadsheet error codes. `Circ` is produced only by the
/// recalculation engine for cells on a dependency cycle; it is not a valid
/// literal in model files or formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorCode {
    Div0,
    Ref,
    Value,
    Name,
    NA,
    Num,
    Null,
    Circ,
}

impl ErrorCode {
    /// Codes that may appear as literals in files and formula text.
    pub const LITERALS: [ErrorCode; 7] = [
        ErrorCode::Div0,
        ErrorCode::Ref,
        ErrorCode::Value,
        ErrorCode::Name,
        ErrorCode::NA,
        ErrorCode::Num,
        ErrorCode::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Div0 => "#DIV/0!",
            ErrorCode::Ref => "#REF!",
            ErrorCode::Value => "#VALUE!",
            ErrorCode::Name => "#NAME?",
            ErrorCode::NA => "#N/A",
            ErrorCode::Num => "#NUM!",
            ErrorCode::Null => "#NULL!",
            ErrorCode::Circ => "#CIRC!",
        }
    }

    /// Looks up a literal error token (case-insensitive). `#CIRC!` is rejected.
    pub fn from_literal(text: &str) -> Option<ErrorCode> {
        Self::LITERALS.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(text))
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A literal value as recorded in the model file (cached formula results).
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(t) => write!(f, "{t:?}"),
            Literal::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellContent {
    Blank,
    Label(String),
    Number(f64),
    Bool(bool),
    Error(ErrorCode),
    /// Formula source text, always beginning with `=`.
    Formula(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub content: CellContent,
    pub cached: Option<Literal>,
}

impl Cell {
    pub fn number(n: f64) -> Self {
        Cell { content: CellContent::Number(n), cached: None }
    }

    pub fn label(text: impl Into<String>) -> Self {
        Cell { content: CellContent::Label(text.into()), cached: None }
    }

    pub fn boolean(b: bool) -> Self {
        Cell { content: CellContent::Bool(b), cached: None }
    }

    pub fn error(code: ErrorCode) -> Self {
        Cell { content: CellContent::Error(code), cached: None }
    }

    pub fn formula(source: impl Into<String>) -> Self {
        Cell { content: CellContent::Formula(source.into()), cached: None }
    }

    pub fn with_cached(mut self, cached: Literal) -> Self {
        self.cached = Some(cached);
        self
    }

    pub fn is_blank(&self) -> bool {
        matches!(self.content, CellContent::Blank)
    }

    pub fn is_formula(&self) -> bool {
        matches!(self.content, CellContent::Formula(_))
    }

    pub fn formula_text(&self) -> Option<&str> {
        match &self.content {
            CellContent::Formula(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    name: String,
    cells: BTreeMap<Coord, Cell>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Sheet { name: name.into(), cells: BTreeMap::new() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Non-blank cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (Coord, &Cell)> + '_ {
        self.cells.iter().map(|(c, cell)| (*c, cell))
    }

    pub fn cell(&self, coord: Coord) -> Option<&Cell> {
        self.cells.get(&coord)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Bounding box of the non-blank cells as (top-left, bottom-right).
    pub fn used_bounds(&self) -> Option<(Coord, Coord)> {
        let mut iter = self.cells.keys();
        let first = *iter.next()?;
        let (mut min_c, mut max_c) = (first.col, first.col);
        let (min_r, mut max_r) = (first.row, first.row);
        for c in self.cells.keys() {
            min_c = min_c.min(c.col);
            max_c = max_c.max(c.col);
            max_r = max_r.max(c.row);
        }
        Some((Coord::new(min_c, min_r), Coord::new(max_c, max_r)))
    }

    /// Non-blank cells whose position falls inside `range` (sheet ignored).
    pub fn cells_in<'a>(&'a self, range: &'a RangeRef) -> impl Iterator<Item = (Coord, &'a Cell)> + 'a {
        let lo = Coord::new(0, range.start.row);
        let hi = Coord::new(u32::MAX, range.end.row);
        self.cells
            .range(lo..=hi)
            .filter(move |(c, _)| range.contains(**c))
            .map(|(c, cell)| (*c, cell))
    }

    fn set(&mut self, coord: Coord, cell: Cell) {
        if cell.is_blank() {
            self.cells.remove(&coord);
        } else {
            self.cells.insert(coord, cell);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameTarget {
    Range(RangeRef),
    /// Target text that is not a sheet-qualified range, e.g. `#REF!`.
    Unresolved(String),
}

impl fmt::Display for NameTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NameTarget::Range(r) => write!(f, "{r}"),
            NameTarget::Unresolved(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedRange {
    pub name: String,
    pub target: NameTarget,
}

/// True if `name` follows the defined-name grammar: a letter or underscore,
/// then letters, digits, underscores or periods, and not readable as an A1
/// address or a boolean.
pub fn is_valid_defined_name(name: &str) -> bool {
    let mut chars = name.chars();
    let first_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
    first_ok
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !looks_like_a1(name)
        && !name.eq_ignore_ascii_case("TRUE")
        && !name.eq_ignore_ascii_case("FALSE")
}

/// Letters followed by digits, with at most three letters: the lexical shape
/// of an A1 address regardless of bounds.
pub(crate) fn looks_like_a1(text: &str) -> bool {
    let letters = text.bytes().take_while(u8::is_ascii_alphabetic).count();
    let rest = &text[letters..];
    (1..=3).contains(&letters) && !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
}

/// An immutable model snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    sheets: Vec<Sheet>,
    names: Vec<NamedRange>,
    meta: BTreeMap<String, String>,
}

impl Workbook {
    pub fn builder() -> WorkbookBuilder {
        WorkbookBuilder::default()
    }

    pub fn to_builder(&self) -> WorkbookBuilder {
        WorkbookBuilder { wb: self.clone() }
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn names(&self) -> &[NamedRange] {
        &self.names
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    /// Case-insensitive sheet lookup.
    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets.iter().position(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheet_index(name).map(|i| &self.sheets[i])
    }

    pub fn name(&self, name: &str) -> Option<&NamedRange> {
        self.names.iter().find(|n| n.name.eq_ignore_ascii_case(name))
    }

    pub fn cell(&self, sheet: usize, coord: Coord) -> Option<&Cell> {
        self.sheets.get(sheet).and_then(|s| s.cell(coord))
    }

    /// Total number of non-blank cells.
    pub fn cell_count(&self) -> usize {
        self.sheets.iter().map(Sheet::len).sum()
    }

    /// Looks up a defined name (case-insensitive) and returns its target with
    /// the canonical sheet name.
    pub fn resolve_name(&self, name: &str) -> Result<RangeRef, ModelError> {
        let def = self.name(name).ok_or_else(|| ModelError::UnknownName(name.to_string()))?;
        let dangling = || ModelError::DanglingName { name: def.name.clone(), target: def.target.to_string() };
        match &def.target {
            NameTarget::Unresolved(_) => Err(dangling()),
            NameTarget::Range(r) => {
                let sheet = r.sheet().and_then(|s| self.sheet_index(s)).ok_or_else(dangling)?;
                Ok(r.clone().with_sheet(Some(self.sheets[sheet].name.clone())))
            }
        }
    }

    /// Renders a position on a sheet as `Sheet!A1`.
    pub fn cell_label(&self, sheet: usize, coord: Coord) -> String {
        format!("{}!{}", quote_sheet_name(&self.sheets[sheet].name), coord)
    }
}

/// Assembles and validates a [`Workbook`].
#[derive(Debug, Default)]
pub struct WorkbookBuilder {
    wb: Workbook,
}

impl WorkbookBuilder {
    pub fn sheet(mut self, name: impl Into<String>) -> Self {
        self.wb.sheets.push(Sheet::new(name));
        self
    }

    /// Sets a cell on the most recently added sheet. Panics on a bad address;
    /// intended for fixtures.
    pub fn cell(mut self, addr: &str, cell: Cell) -> Self {
        let coord = Coord::parse_a1(addr).expect("valid address");
        let sheet = self.wb.sheets.last_mut().expect("call sheet() first");
        sheet.set(coord, cell);
        self
    }

    pub fn set_cell(&mut self, sheet: usize, coord: Coord, cell: Cell) -> Result<(), ModelError> {
        if !coord.in_bounds() {
            return Err(ModelError::OutOfBounds { sheet: String::new(), address: coord.to_string() });
        }
        let s = self.wb.sheets.get_mut(sheet).ok_or(ModelError::UnknownSheetIndex(sheet))?;
        s.set(coord, cell);
        Ok(())
    }

    pub fn name(mut self, name: impl Into<String>, target: &str) -> Self {
        let target = parse_name_target(target);
        self.wb.names.push(NamedRange { name: name.into(), target });
        self
    }

    pub fn meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.wb.meta.insert(key.into(), value.into());
        self
    }

    pub fn build(self) -> Result<Workbook, ModelError> {
        validate(&self.wb)?;
        Ok(self.wb)
    }
}

pub(crate) fn parse_name_target(text: &str) -> NameTarget {
    match text.parse::<RangeRef>() {
        Ok(r) if r.sheet().is_some() => NameTarget::Range(r),
        _ => NameTarget::Unresolved(text.to_string()),
    }
}

pub(crate) fn push_sheet(wb: &mut Workbook, sheet: Sheet) {
    wb.sheets.push(sheet);
}

pub(crate) fn set_sheet_cell(sheet: &mut Sheet, coord: Coord, cell: Cell) {
    sheet.set(coord, cell);
}

pub(crate) fn push_name(wb: &mut Workbook, name: NamedRange) {
    wb.names.push(name);
}

pub(crate) fn meta_mut(wb: &mut Workbook) -> &mut BTreeMap<String, String> {
    &mut wb.meta
}

pub(crate) fn validate(wb: &Workbook) -> Result<(), ModelError> {
    for (i, sheet) in wb.sheets.iter().enumerate() {
        if sheet.name.is_empty() {
            return Err(ModelError::Schema { path: format!("sheets[{i}].name"), message: "empty sheet name".into() });
        }
        if wb.sheets[..i].iter().any(|s| s.name.eq_ignore_ascii_case(&sheet.name)) {
            return Err(ModelError::DuplicateSheet(sheet.name.clone()));
        }
        for (coord, cell) in sheet.cells() {
            if !coord.in_bounds() {
                return Err(ModelError::OutOfBounds { sheet: sheet.name.clone(), address: coord.to_string() });
            }
            if let CellContent::Formula(f) = &cell.content {
                if !f.starts_with('=') {
                    return Err(ModelError::Schema {
                        path: format!("sheets[{i}].cells.{coord}.f"),
                        message: "formula must begin with `=`".into(),
                    });
                }
            }
            if let CellContent::Error(ErrorCode::Circ) = cell.content {
                return Err(ModelError::Schema {
                    path: format!("sheets[{i}].cells.{coord}.e"),
                    message: "#CIRC! is not a literal error code".into(),
                });
            }
        }
    }
    for (i, n) in wb.names.iter().enumerate() {
        if !is_valid_defined_name(&n.name) {
            return Err(ModelError::InvalidName(n.name.clone()));
        }
        if wb.names[..i].iter().any(|m| m.name.eq_ignore_ascii_case(&n.name)) {
            return Err(ModelError::DuplicateName(n.name.clone()));
        }
    }
    Ok(())
}

/// Serialized form of a cell, used by the interchange writer.
#[derive(Serialize)]
pub(crate) struct CellOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<&'static str>,
}

pub(crate) fn literal_json(lit: &Literal) -> serde_json::Value {
    match lit {
        Literal::Number(n) => serde_json::json!(n),
        Literal::Text(t) => serde_json::Value::String(t.clone()),
        Literal::Bool(b) => serde_json::Value::Bool(*b),
    }
}

impl<'a> CellOut<'a> {
    pub(crate) fn from_cell(cell: &'a Cell) -> CellOut<'a> {
        let cached = cell.cached.as_ref().map(literal_json);
        match &cell.content {
            CellContent::Formula(f) => CellOut { f: Some(f), v: cached, e: None },
            CellContent::Number(n) => CellOut { f: None, v: Some(serde_json::json!(n)), e: None },
            CellContent::Label(t) => CellOut { f: None, v: Some(serde_json::Value::String(t.clone())), e: None },
            CellContent::Bool(b) => CellOut { f: None, v: Some(serde_json::Value::Bool(*b)), e: None },
            CellContent::Error(code) => CellOut { f: None, v: None, e: Some(code.as_str()) },
            CellContent::Blank => CellOut { f: None, v: None, e: None },
        }
    }
}
