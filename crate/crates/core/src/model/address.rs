//! A1-style cell and range addresses.
//!
//! Columns and rows are 1-based. The address space is fixed at
//! 16384 columns (`A..XFD`) by 1048576 rows.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const MAX_COLS: u32 = 16_384;
pub const MAX_ROWS: u32 = 1_048_576;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("malformed address `{0}`")]
    Syntax(String),
    #[error("address `{0}` is outside the 16384 x 1048576 grid")]
    OutOfBounds(String),
    #[error("range `{0}` spans two sheets")]
    MixedSheets(String),
}

/// Grid position, ordered row-major (row first, then column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub row: u32,
    pub col: u32,
}

impl Coord {
    pub fn new(col: u32, row: u32) -> Self {
        Coord { row, col }
    }

    pub fn in_bounds(self) -> bool {
        (1..=MAX_COLS).contains(&self.col) && (1..=MAX_ROWS).contains(&self.row)
    }

    /// Chebyshev distance between two positions.
    pub fn chebyshev(self, other: Coord) -> u32 {
        self.col.abs_diff(other.col).max(self.row.abs_diff(other.row))
    }

    pub fn to_a1(self) -> String {
        format!("{}{}", col_to_letters(self.col), self.row)
    }

    /// Parses a bare address such as `B7` (no `$`, no sheet).
    pub fn parse_a1(text: &str) -> Result<Coord, AddressError> {
        let (col, _, row, _) = split_a1(text)?;
        let coord = Coord::new(col, row);
        if coord.in_bounds() {
            Ok(coord)
        } else {
            Err(AddressError::OutOfBounds(text.to_string()))
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", col_to_letters(self.col), self.row)
    }
}

pub fn col_to_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Column letters to a 1-based index. Returns `None` for empty or non-letter
/// input; the result is not bounds-checked (saturates for absurd input).
pub fn letters_to_col(letters: &str) -> Option<u32> {
    if letters.is_empty() {
        return None;
    }
    let mut col: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col
            .saturating_mul(26)
            .saturating_add(u32::from(b.to_ascii_uppercase() - b'A' + 1));
    }
    Some(col)
}

/// Splits `$A$1` into (col, col_abs, row, row_abs) without bounds checks.
fn split_a1(text: &str) -> Result<(u32, bool, u32, bool), AddressError> {
    let bad = || AddressError::Syntax(text.to_string());
    let bytes = text.as_bytes();
    let mut i = 0;
    let col_abs = bytes.first() == Some(&b'$');
    if col_abs {
        i += 1;
    }
    let letters_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
        i += 1;
    }
    let letters = &text[letters_start..i];
    let row_abs = bytes.get(i) == Some(&b'$');
    if row_abs {
        i += 1;
    }
    let digits = &text[i..];
    if letters.is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let col = letters_to_col(letters).ok_or_else(bad)?;
    let row = digits.parse::<u64>().map(|r| r.min(u64::from(u32::MAX)) as u32).map_err(|_| bad())?;
    Ok((col, col_abs, row, row_abs))
}

/// True if `name` can be written without quotes in a reference.
fn sheet_name_is_bare(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Renders a sheet name for use before `!`, quoting when it contains
/// anything other than ASCII letters and digits.
pub fn quote_sheet_name(name: &str) -> Cow<'_, str> {
    if sheet_name_is_bare(name) {
        Cow::Borrowed(name)
    } else {
        Cow::Owned(format!("'{}'", name.replace('\'', "''")))
    }
}

/// Splits an optional `Sheet!` / `'Sheet name'!` prefix from an address.
pub fn split_sheet_prefix(text: &str) -> Result<(Option<String>, &str), AddressError> {
    if let Some(rest) = text.strip_prefix('\'') {
        let mut name = String::new();
        let mut chars = rest.char_indices().peekable();
        while let Some((idx, c)) = chars.next() {
            if c == '\'' {
                if let Some((_, '\'')) = chars.peek() {
                    chars.next();
                    name.push('\'');
                    continue;
                }
                let after = &rest[idx + 1..];
                return match after.strip_prefix('!') {
                    Some(addr) if !name.is_empty() => Ok((Some(name), addr)),
                    _ => Err(AddressError::Syntax(text.to_string())),
                };
            }
            name.push(c);
        }
        return Err(AddressError::Syntax(text.to_string()));
    }
    match text.rfind('!') {
        Some(0) => Err(AddressError::Syntax(text.to_string())),
        Some(idx) => Ok((Some(text[..idx].to_string()), &text[idx + 1..])),
        None => Ok((None, text)),
    }
}

/// A single-cell reference, optionally sheet-qualified, with `$` fixity flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub sheet: Option<String>,
    pub col: u32,
    pub row: u32,
    pub col_abs: bool,
    pub row_abs: bool,
}

impl CellRef {
    /// A relative, unqualified reference.
    pub fn new(col: u32, row: u32) -> Self {
        CellRef { sheet: None, col, row, col_abs: false, row_abs: false }
    }

    pub fn on_sheet(sheet: impl Into<String>, col: u32, row: u32) -> Self {
        CellRef { sheet: Some(sheet.into()), ..CellRef::new(col, row) }
    }

    pub fn absolute(mut self, col_abs: bool, row_abs: bool) -> Self {
        self.col_abs = col_abs;
        self.row_abs = row_abs;
        self
    }

    pub fn with_sheet(mut self, sheet: Option<String>) -> Self {
        self.sheet = sheet;
        self
    }

    pub fn coord(&self) -> Coord {
        Coord::new(self.col, self.row)
    }

    pub fn in_bounds(&self) -> bool {
        self.coord().in_bounds()
    }

    /// The same position with fixity flags cleared.
    pub fn position_only(&self) -> CellRef {
        CellRef { col_abs: false, row_abs: false, ..self.clone() }
    }

    /// Writes the address part (no sheet) in A1 form.
    pub(crate) fn fmt_a1_local(&self, out: &mut String) {
        if self.col_abs {
            out.push('$');
        }
        out.push_str(&col_to_letters(self.col));
        if self.row_abs {
            out.push('$');
        }
        out.push_str(&self.row.to_string());
    }

    fn parse_local(text: &str) -> Result<CellRef, AddressError> {
        let (col, col_abs, row, row_abs) = split_a1(text)?;
        let r = CellRef { sheet: None, col, row, col_abs, row_abs };
        if r.in_bounds() {
            Ok(r)
        } else {
            Err(AddressError::OutOfBounds(text.to_string()))
        }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        if let Some(sheet) = &self.sheet {
            out.push_str(&quote_sheet_name(sheet));
            out.push('!');
        }
        self.fmt_a1_local(&mut out);
        f.write_str(&out)
    }
}

impl FromStr for CellRef {
    type Err = AddressError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (sheet, addr) = split_sheet_prefix(text.trim())?;
        let mut r = CellRef::parse_local(addr).map_err(|e| match e {
            AddressError::OutOfBounds(_) => AddressError::OutOfBounds(text.to_string()),
            _ => AddressError::Syntax(text.to_string()),
        })?;
        r.sheet = sheet;
        Ok(r)
    }
}

/// A rectangular range on one sheet. Always normalized so that `start` is the
/// top-left and `end` the bottom-right corner.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RangeRef {
    pub start: CellRef,
    pub end: CellRef,
}

impl RangeRef {
    /// Builds a normalized range. The sheet of `start` wins; `end`'s sheet is
    /// overwritten to match.
    pub fn new(start: CellRef, end: CellRef) -> Self {
        let sheet = start.sheet.clone();
        let (c1, c1_abs, c2, c2_abs) = if start.col <= end.col {
            (start.col, start.col_abs, end.col, end.col_abs)
        } else {
            (end.col, end.col_abs, start.col, start.col_abs)
        };
        let (r1, r1_abs, r2, r2_abs) = if start.row <= end.row {
            (start.row, start.row_abs, end.row, end.row_abs)
        } else {
            (end.row, end.row_abs, start.row, start.row_abs)
        };
        RangeRef {
            start: CellRef { sheet: sheet.clone(), col: c1, row: r1, col_abs: c1_abs, row_abs: r1_abs },
            end: CellRef { sheet, col: c2, row: r2, col_abs: c2_abs, row_abs: r2_abs },
        }
    }

    pub fn single(cell: CellRef) -> Self {
        RangeRef { start: cell.clone(), end: cell }
    }

    pub fn sheet(&self) -> Option<&str> {
        self.start.sheet.as_deref()
    }

    pub fn with_sheet(self, sheet: Option<String>) -> Self {
        RangeRef { start: self.start.with_sheet(sheet.clone()), end: self.end.with_sheet(sheet) }
    }

    pub fn width(&self) -> u32 {
        self.end.col - self.start.col + 1
    }

    pub fn height(&self) -> u32 {
        self.end.row - self.start.row + 1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn is_single_cell(&self) -> bool {
        self.area() == 1
    }

    pub fn contains(&self, coord: Coord) -> bool {
        (self.start.col..=self.end.col).contains(&coord.col)
            && (self.start.row..=self.end.row).contains(&coord.row)
    }

    /// Rectangle intersection, ignoring sheets and fixity. The result carries
    /// this range's sheet and relative flags.
    pub fn intersect(&self, other: &RangeRef) -> Option<RangeRef> {
        let c1 = self.start.col.max(other.start.col);
        let c2 = self.end.col.min(other.end.col);
        let r1 = self.start.row.max(other.start.row);
        let r2 = self.end.row.min(other.end.row);
        if c1 > c2 || r1 > r2 {
            return None;
        }
        let sheet = self.start.sheet.clone();
        Some(RangeRef::new(
            CellRef::new(c1, r1).with_sheet(sheet.clone()),
            CellRef::new(c2, r2).with_sheet(sheet),
        ))
    }

    /// Member positions in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        let (c1, c2) = (self.start.col, self.end.col);
        (self.start.row..=self.end.row).flat_map(move |row| (c1..=c2).map(move |col| Coord::new(col, row)))
    }

    pub(crate) fn fmt_a1_local(&self, out: &mut String) {
        self.start.fmt_a1_local(out);
        if !self.is_single_cell() || self.start.col_abs != self.end.col_abs || self.start.row_abs != self.end.row_abs {
            out.push(':');
            self.end.fmt_a1_local(out);
        }
    }
}

impl fmt::Display for RangeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        if let Some(sheet) = self.sheet() {
            out.push_str(&quote_sheet_name(sheet));
            out.push('!');
        }
        self.fmt_a1_local(&mut out);
        f.write_str(&out)
    }
}

impl FromStr for RangeRef {
    type Err = AddressError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let trimmed = text.trim();
        let (sheet, addr) = split_sheet_prefix(trimmed)?;
        let map_err = |e: AddressError| match e {
            AddressError::OutOfBounds(_) => AddressError::OutOfBounds(text.to_string()),
            _ => AddressError::Syntax(text.to_string()),
        };
        let range = match addr.split_once(':') {
            Some((a, b)) => {
                if b.contains('!') {
                    return Err(AddressError::MixedSheets(text.to_string()));
                }
                RangeRef::new(
                    CellRef::parse_local(a).map_err(map_err)?,
                    CellRef::parse_local(b).map_err(map_err)?,
                )
            }
            None => RangeRef::single(CellRef::parse_local(addr).map_err(map_err)?),
        };
        Ok(range.with_sheet(sheet))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_letters() {
        assert_eq!(col_to_letters(1), "A");
        assert_eq!(col_to_letters(26), "Z");
        assert_eq!(col_to_letters(27), "AA");
        assert_eq!(col_to_letters(16_384), "XFD");
        assert_eq!(letters_to_col("XFD"), Some(16_384));
        assert_eq!(letters_to_col("XFE"), Some(16_385));
        assert_eq!(letters_to_col("a"), Some(1));
        assert_eq!(letters_to_col(""), None);
    }

    #[test]
    fn cell_ref_round_trip() {
        for text in ["A1", "$B$7", "C$3", "'P&L'!$A1", "Sheet1!XFD1048576", "'it''s'!B2"] {
            let r: CellRef = text.parse().unwrap();
            assert_eq!(r.to_string(), text);
            assert_eq!(r.to_string().parse::<CellRef>().unwrap(), r);
        }
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(matches!("XFE1".parse::<CellRef>(), Err(AddressError::OutOfBounds(_))));
        assert!(matches!("A1048577".parse::<CellRef>(), Err(AddressError::OutOfBounds(_))));
        assert!(matches!("A0".parse::<CellRef>(), Err(AddressError::OutOfBounds(_))));
        assert!(matches!("1A".parse::<CellRef>(), Err(AddressError::Syntax(_))));
    }

    #[test]
    fn range_normalizes_corners() {
        let r: RangeRef = "S!C3:A1".parse().unwrap();
        assert_eq!(r.to_string(), "S!A1:C3");
        assert_eq!(r.area(), 9);
        let single: RangeRef = "S!B2".parse().unwrap();
        assert!(single.is_single_cell());
        assert_eq!(single.to_string(), "S!B2");
    }

    #[test]
    fn range_intersection() {
        let a: RangeRef = "A1:A5".parse().unwrap();
        let b: RangeRef = "A4:A8".parse().unwrap();
        assert_eq!(a.intersect(&b).unwrap().to_string(), "A4:A5");
        let c: RangeRef = "B1:B2".parse().unwrap();
        assert!(a.intersect(&c).is_none());
    }

    #[test]
    fn sheet_quoting() {
        assert_eq!(quote_sheet_name("Calc"), "Calc");
        assert_eq!(quote_sheet_name("Debt Sched"), "'Debt Sched'");
        assert_eq!(quote_sheet_name("P&L"), "'P&L'");
        assert_eq!(quote_sheet_name("2024"), "'2024'");
    }
}
