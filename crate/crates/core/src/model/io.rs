//! Reader and writer for the JSON interchange format:
//!
//! ```json
//! { "meta": {"k": "v"},
//!   "names": [{"name": "Rev", "ref": "'P&L'!A1:A5"}],
//!   "sheets": [{"name": "S", "cells": {"A1": {"v": 5}, "A2": {"f": "=A1*2", "v": 10}, "A3": {"e": "#REF!"}}}] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use super::address::{AddressError, Coord};
use super::workbook::{
    meta_mut, parse_name_target, push_name, push_sheet, set_sheet_cell, validate, Cell, CellContent, CellOut,
    ErrorCode, Literal, NamedRange, Sheet, Workbook,
};
use super::ModelError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkbook {
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    names: Vec<RawName>,
    sheets: Vec<RawSheet>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawName {
    name: String,
    #[serde(rename = "ref")]
    target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSheet {
    name: String,
    #[serde(default)]
    cells: BTreeMap<String, RawCell>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    f: Option<String>,
    v: Option<serde_json::Value>,
    e: Option<String>,
}

pub fn load_workbook(path: &Path) -> Result<Workbook, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    workbook_from_json(&text)
}

pub fn workbook_from_json(text: &str) -> Result<Workbook, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawWorkbook = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ModelError::Schema { path, message: e.into_inner().to_string() }
    })?;

    let mut wb = Workbook::default();
    *meta_mut(&mut wb) = raw.meta;
    for (si, raw_sheet) in raw.sheets.into_iter().enumerate() {
        if wb.sheet_index(&raw_sheet.name).is_some() {
            return Err(ModelError::DuplicateSheet(raw_sheet.name));
        }
        let mut sheet = Sheet::new(raw_sheet.name);
        for (addr, raw_cell) in raw_sheet.cells {
            let path = format!("sheets[{si}].cells.{addr}");
            let coord = Coord::parse_a1(&addr).map_err(|e| match e {
                AddressError::OutOfBounds(_) => {
                    ModelError::OutOfBounds { sheet: sheet.name().to_string(), address: addr.clone() }
                }
                _ => ModelError::Schema { path: path.clone(), message: format!("`{addr}` is not an A1 address") },
            })?;
            let cell = convert_cell(raw_cell, &path)?;
            set_sheet_cell(&mut sheet, coord, cell);
        }
        push_sheet(&mut wb, sheet);
    }
    for raw_name in raw.names {
        if wb.name(&raw_name.name).is_some() {
            return Err(ModelError::DuplicateName(raw_name.name));
        }
        let target = parse_name_target(&raw_name.target);
        push_name(&mut wb, NamedRange { name: raw_name.name, target });
    }
    validate(&wb)?;
    Ok(wb)
}

fn convert_literal(value: serde_json::Value, path: &str) -> Result<Literal, ModelError> {
    match value {
        serde_json::Value::Number(n) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Literal::Number)
            .ok_or_else(|| ModelError::Schema { path: path.to_string(), message: "number out of range".into() }),
        serde_json::Value::String(s) => Ok(Literal::Text(s)),
        serde_json::Value::Bool(b) => Ok(Literal::Bool(b)),
        other => Err(ModelError::Schema {
            path: path.to_string(),
            message: format!("expected number, string or bool, found {other}"),
        }),
    }
}

fn convert_cell(raw: RawCell, path: &str) -> Result<Cell, ModelError> {
    let schema = |message: &str| ModelError::Schema { path: path.to_string(), message: message.to_string() };
    match (raw.f, raw.v, raw.e) {
        (Some(f), v, None) => {
            if !f.starts_with('=') {
                return Err(ModelError::Schema {
                    path: format!("{path}.f"),
                    message: "formula must begin with `=`".into(),
                });
            }
            let cached = v.map(|v| convert_literal(v, &format!("{path}.v"))).transpose()?;
            Ok(Cell { content: CellContent::Formula(f), cached })
        }
        (None, Some(v), None) => {
            let content = match convert_literal(v, &format!("{path}.v"))? {
                Literal::Number(n) => CellContent::Number(n),
                Literal::Text(t) => CellContent::Label(t),
                Literal::Bool(b) => CellContent::Bool(b),
            };
            Ok(Cell { content, cached: None })
        }
        (None, None, Some(e)) => {
            let code = ErrorCode::from_literal(&e).ok_or_else(|| ModelError::Schema {
                path: format!("{path}.e"),
                message: format!("unknown error code `{e}`"),
            })?;
            Ok(Cell::error(code))
        }
        (None, None, None) => Err(schema("cell needs one of `f`, `v` or `e`")),
        _ => Err(schema("`e` cannot be combined with `f` or `v`")),
    }
}

struct CellsOut<'a>(&'a Sheet);

impl Serialize for CellsOut<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (coord, cell) in self.0.cells() {
            map.serialize_entry(&coord.to_a1(), &CellOut::from_cell(cell))?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct SheetOut<'a> {
    name: &'a str,
    cells: CellsOut<'a>,
}

#[derive(Serialize)]
struct NameOut<'a> {
    name: &'a str,
    #[serde(rename = "ref")]
    target: String,
}

#[derive(Serialize)]
struct WorkbookOut<'a> {
    meta: &'a BTreeMap<String, String>,
    names: Vec<NameOut<'a>>,
    sheets: Vec<SheetOut<'a>>,
}

/// Writes the workbook in the interchange format. Reloading the output yields
/// an equal [`Workbook`].
pub fn workbook_to_json(wb: &Workbook) -> String {
    let out = WorkbookOut {
        meta: wb.meta(),
        names: wb.names().iter().map(|n| NameOut { name: &n.name, target: n.target.to_string() }).collect(),
        sheets: wb.sheets().iter().map(|s| SheetOut { name: s.name(), cells: CellsOut(s) }).collect(),
    };
    serde_json::to_string_pretty(&out).expect("workbook serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellRef, RangeRef};

    #[test]
    fn single_number_cell() {
        let wb = workbook_from_json(r###"{"sheets":[{"name":"S","cells":{"A1":{"v":5}}}]}"###).unwrap();
        assert_eq!(wb.sheets().len(), 1);
        assert_eq!(wb.cell_count(), 1);
        assert_eq!(wb.cell(0, Coord::new(1, 1)).unwrap().content, CellContent::Number(5.0));
    }

    #[test]
    fn duplicate_sheet_rejected() {
        let err = workbook_from_json(r###"{"sheets":[{"name":"P&L"},{"name":"p&l"}]}"###).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateSheet(_)));
    }

    #[test]
    fn duplicate_name_rejected() {
        let text = r###"{"names":[{"name":"Rev","ref":"S!A1"},{"name":"REV","ref":"S!A2"}],"sheets":[{"name":"S"}]}"###;
        assert!(matches!(workbook_from_json(text).unwrap_err(), ModelError::DuplicateName(_)));
    }

    #[test]
    fn out_of_bounds_key_rejected() {
        let err = workbook_from_json(r###"{"sheets":[{"name":"S","cells":{"XFE1":{"v":1}}}]}"###).unwrap_err();
        assert!(matches!(err, ModelError::OutOfBounds { .. }), "{err}");
    }

    #[test]
    fn schema_error_carries_path() {
        let err = workbook_from_json(r###"{"sheets":[{"name":"S","cells":{"A1":{"x":1}}}]}"###).unwrap_err();
        match err {
            ModelError::Schema { path, .. } => assert!(path.contains("sheets[0]"), "{path}"),
            other => panic!("unexpected {other}"),
        }
        let err = workbook_from_json(r###"{"sheets":[{"name":"S","cells":{"A1":{"f":"A2"}}}]}"###).unwrap_err();
        assert!(matches!(err, ModelError::Schema { .. }));
        let err = workbook_from_json(r###"{"sheets":[{"name":"S","cells":{"A1":{"e":"#CIRC!"}}}]}"###).unwrap_err();
        assert!(matches!(err, ModelError::Schema { .. }));
    }

    #[test]
    fn invalid_name_rejected() {
        for bad in ["A1", "1abc", "TRUE", "has space"] {
            let text = format!(r###"{{"names":[{{"name":"{bad}","ref":"S!A1"}}],"sheets":[{{"name":"S"}}]}}"###);
            assert!(matches!(workbook_from_json(&text).unwrap_err(), ModelError::InvalidName(_)), "{bad}");
        }
    }

    #[test]
    fn resolve_name_cases() {
        let text = r###"{"names":[{"name":"Rev","ref":"'P&L'!A1:A5"},{"name":"OldRate","ref":"Old!B2"},{"name":"Gone","ref":"#REF!"}],
                      "sheets":[{"name":"P&L"}]}"###;
        let wb = workbook_from_json(text).unwrap();
        let expected = RangeRef::new(CellRef::on_sheet("P&L", 1, 1), CellRef::on_sheet("P&L", 1, 5));
        assert_eq!(wb.resolve_name("Rev").unwrap(), expected);
        assert_eq!(wb.resolve_name("rev").unwrap(), expected);
        assert!(matches!(wb.resolve_name("OldRate"), Err(ModelError::DanglingName { .. })));
        assert!(matches!(wb.resolve_name("Gone"), Err(ModelError::DanglingName { .. })));
        assert!(matches!(wb.resolve_name("Nope"), Err(ModelError::UnknownName(_))));
    }

    #[test]
    fn round_trip_preserves_everything() {
        let text = r###"{"meta":{"author":"x"},
            "names":[{"name":"Rate","ref":"Inputs!$B$2"}],
            "sheets":[{"name":"Inputs","cells":{"A1":{"v":"Rate"},"B2":{"v":0.1},"C3":{"v":true},"D4":{"e":"#N/A"}}},
                      {"name":"Debt Sched","cells":{"A1":{"f":"=Inputs!B2*2","v":0.2},"B1":{"f":"=1/3","v":0.3333333333333333}}}]}"###;
        let wb = workbook_from_json(text).unwrap();
        let again = workbook_from_json(&workbook_to_json(&wb)).unwrap();
        assert_eq!(wb, again);
        assert_eq!(workbook_to_json(&wb), workbook_to_json(&again));
    }
}
