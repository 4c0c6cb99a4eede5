//! Workbook domain types, the JSON interchange format and model identification.

mod address;
mod fingerprint;
mod io;
mod workbook;

use std::path::PathBuf;

use thiserror::Error;

pub use address::{
    col_to_letters, letters_to_col, quote_sheet_name, split_sheet_prefix, AddressError, CellRef, Coord,
    RangeRef, MAX_COLS, MAX_ROWS,
};
pub use fingerprint::{fingerprint_bytes, fingerprint_model, ModelFingerprint};
pub use io::{load_workbook, workbook_from_json, workbook_to_json};
pub use workbook::{
    is_valid_defined_name, Cell, CellContent, ErrorCode, Literal, NameTarget, NamedRange, Sheet, Workbook,
    WorkbookBuilder,
};

pub(crate) use workbook::looks_like_a1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate sheet name `{0}`")]
    DuplicateSheet(String),
    #[error("duplicate defined name `{0}`")]
    DuplicateName(String),
    #[error("invalid defined name `{0}`")]
    InvalidName(String),
    #[error("address {address} on sheet `{sheet}` is out of bounds")]
    OutOfBounds { sheet: String, address: String },
    #[error("no sheet at index {0}")]
    UnknownSheetIndex(usize),
    #[error("unknown defined name `{0}`")]
    UnknownName(String),
    #[error("defined name `{name}` points at `{target}`, which does not exist")]
    DanglingName { name: String, target: String },
}

/// Looks up a defined name case-insensitively.
pub fn resolve_name(workbook: &Workbook, name: &str) -> Result<RangeRef, ModelError> {
    workbook.resolve_name(name)
}
