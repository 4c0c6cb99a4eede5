//! Audit evidence: cell-type maps, reviewer coverage, the findings store and
//! the final report.

mod coverage;
mod map;
mod report;
mod store;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::lowlevel::IllegalTransition;

pub use coverage::{coverage_status, CoverageLedger, CoverageStatus, SheetCoverage, SignOff, MAX_SIGNOFF_CELLS};
pub use map::{render_all_maps, render_cell_map, CellMap, MapMode};
pub use report::{
    emit_report, AssertionLine, AuditReport, FindingsSummary, ReportInputs, ReportMode, ScenarioLine, UnresolvedIssue,
};
pub use store::FindingStore;

#[derive(Debug, Error)]
pub enum PaperError {
    #[error("unknown sheet `{0}`")]
    UnknownSheet(String),
    #[error("`{0}` must name a sheet")]
    Unqualified(String),
    #[error("`{0}` is too large to sign off in one step")]
    RangeTooLarge(String),
    #[error("ledger is bound to model {bound} but the model is now {found}")]
    FingerprintMismatch { bound: String, found: String },
    #[error("no finding with id {0}")]
    UnknownFinding(u64),
    #[error(transparent)]
    Transition(#[from] IllegalTransition),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PaperError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PaperError::Io { path: path.to_path_buf(), source }
    }
}
