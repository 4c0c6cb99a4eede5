use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formula::{normalize_r1c1, parse_formula};
use crate::model::{col_to_letters, CellContent, CellRef, Coord, Workbook};

use super::PaperError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapMode {
    /// One code per content type.
    Type,
    /// Formula cells coded by where their normalized formula first appeared.
    Clone,
}

/// Single-character grid over a sheet's used bounding box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMap {
    pub sheet: String,
    /// 1-based position of the sheet in the workbook.
    pub index: usize,
    pub sheet_count: usize,
    pub mode: MapMode,
    /// Top-left cell of the grid; absent for an empty sheet.
    pub origin: Option<String>,
    pub rows: Vec<String>,
}

impl CellMap {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.chars().count())
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    /// Fixed-width print form with a column ruler over the grid and row
    /// numbers down the left.
    pub fn to_text(&self) -> String {
        let mut out = format!("Sheet {}/{}: {}\n", self.index, self.sheet_count, self.sheet);
        let Some(origin) = self.origin.as_deref().and_then(|o| Coord::parse_a1(o).ok()) else {
            out.push_str("(empty)\n");
            return out;
        };
        let last_row = origin.row as usize + self.height() - 1;
        let gutter = last_row.to_string().len();
        let letters: Vec<String> = (0..self.width()).map(|i| col_to_letters(origin.col + i as u32)).collect();
        let depth = letters.iter().map(String::len).max().unwrap_or(1);
        for level in 0..depth {
            out.push_str(&" ".repeat(gutter + 2));
            for l in &letters {
                let pad = depth - l.len();
                out.push(if level < pad { ' ' } else { l.as_bytes()[level - pad] as char });
            }
            out.push('\n');
        }
        out.push_str(&" ".repeat(gutter + 1));
        out.push('+');
        out.push_str(&"-".repeat(self.width()));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{:>gutter$} |{row}\n", origin.row as usize + i));
        }
        out
    }
}

fn type_code(content: &CellContent) -> char {
    match content {
        CellContent::Blank => '.',
        CellContent::Label(_) => 'L',
        CellContent::Number(_) => 'N',
        CellContent::Bool(_) => 'B',
        CellContent::Error(_) => 'E',
        CellContent::Formula(_) => 'F',
    }
}

/// Copy-invariant key of every formula on a sheet; text that does not parse
/// is keyed by itself.
fn clone_keys(wb: &Workbook, si: usize) -> BTreeMap<Coord, String> {
    let sheet = &wb.sheets()[si];
    sheet
        .cells()
        .filter_map(|(coord, cell)| {
            let text = cell.formula_text()?;
            let origin = CellRef::on_sheet(sheet.name().to_string(), coord.col, coord.row);
            let key = match parse_formula(text) {
                Ok(ast) => normalize_r1c1(&ast, &origin).as_str().to_string(),
                Err(_) => format!("!{text}"),
            };
            Some((coord, key))
        })
        .collect()
}

pub fn render_cell_map(wb: &Workbook, sheet: &str, mode: MapMode) -> Result<CellMap, PaperError> {
    let si = wb.sheet_index(sheet).ok_or_else(|| PaperError::UnknownSheet(sheet.to_string()))?;
    let s = &wb.sheets()[si];
    let mut map = CellMap {
        sheet: s.name().to_string(),
        index: si + 1,
        sheet_count: wb.sheets().len(),
        mode,
        origin: None,
        rows: vec![],
    };
    let Some((lo, hi)) = s.used_bounds() else {
        return Ok(map);
    };
    map.origin = Some(lo.to_string());
    let keys = if mode == MapMode::Clone { clone_keys(wb, si) } else { BTreeMap::new() };
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for row in lo.row..=hi.row {
        let mut line = String::with_capacity((hi.col - lo.col + 1) as usize);
        for col in lo.col..=hi.col {
            let coord = Coord::new(col, row);
            let content = s.cell(coord).map_or(&CellContent::Blank, |c| &c.content);
            let key = keys.get(&coord);
            let code = match (mode, key) {
                (MapMode::Clone, Some(key)) => {
                    let neighbour = |c: Option<Coord>| c.and_then(|c| keys.get(&c)) == Some(key);
                    let left = col.checked_sub(1).filter(|&c| c >= 1).map(|c| Coord::new(c, row));
                    let above = row.checked_sub(1).filter(|&r| r >= 1).map(|r| Coord::new(col, r));
                    let first = seen.insert(key.as_str());
                    if neighbour(left) {
                        '<'
                    } else if neighbour(above) {
                        '^'
                    } else if first {
                        'F'
                    } else {
                        'c'
                    }
                }
                _ => type_code(content),
            };
            line.push(code);
        }
        map.rows.push(line);
    }
    Ok(map)
}

/// Maps of every sheet in workbook order.
pub fn render_all_maps(wb: &Workbook, mode: MapMode) -> Vec<CellMap> {
    wb.sheets()
        .iter()
        .map(|s| render_cell_map(wb, s.name(), mode).expect("sheet taken from the workbook"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::workbook_from_json;

    #[test]
    fn type_codes() {
        let wb = workbook_from_json(
            r##"{"sheets":[{"name":"S","cells":{"A1":{"v":"x"},"B1":{"f":"=1+1"},"D1":{"v":1},"A2":{"v":true},"B2":{"e":"#N/A"}}},
                          {"name":"Empty"}]}"##,
        )
        .unwrap();
        let m = render_cell_map(&wb, "s", MapMode::Type).unwrap();
        assert_eq!(m.rows, vec!["LF.N", "BE.."]);
        assert_eq!(m.index, 1);
        let text = m.to_text();
        assert!(text.starts_with("Sheet 1/2: S\n   ABCD\n  +----\n1 |LF.N\n"), "{text}");
        let e = render_cell_map(&wb, "Empty", MapMode::Type).unwrap();
        assert_eq!((e.width(), e.height()), (0, 0));
        assert!(matches!(render_cell_map(&wb, "Nope", MapMode::Type), Err(PaperError::UnknownSheet(_))));
    }

    #[test]
    fn clone_codes() {
        let wb = workbook_from_json(
            r#"{"sheets":[{"name":"S","cells":{
                "A1":{"v":1},"B1":{"f":"=A1*2"},"C1":{"f":"=B1*2"},
                "A2":{"v":2},"B2":{"f":"=A2*2"},
                "A3":{"v":3},"B3":{"f":"=A3*2"},
                "D5":{"f":"=C5*2"}}}]}"#,
        )
        .unwrap();
        let m = render_cell_map(&wb, "S", MapMode::Clone).unwrap();
        assert_eq!(m.rows, vec!["NF<.", "N^..", "N^..", "....", "...c"]);
    }
}
