use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{Coord, ModelFingerprint, RangeRef, Workbook};

use super::PaperError;

/// Largest range accepted in one sign-off.
pub const MAX_SIGNOFF_CELLS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignOff {
    pub sheet: String,
    pub cell: String,
    pub reviewer: String,
    pub timestamp: String,
    pub phase: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: ModelFingerprint,
}

/// Append-only record of which cells each reviewer ticked, bound to one
/// model version. When opened from a file every new entry is appended to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageLedger {
    fingerprint: ModelFingerprint,
    entries: Vec<SignOff>,
    path: Option<PathBuf>,
}

impl CoverageLedger {
    pub fn new(fingerprint: ModelFingerprint) -> Self {
        CoverageLedger { fingerprint, entries: vec![], path: None }
    }

    /// Writes a fresh ledger file containing only the header.
    pub fn create(path: &Path, fingerprint: ModelFingerprint) -> Result<Self, PaperError> {
        let header = serde_json::to_string(&Header { fingerprint: fingerprint.clone() }).expect("header serializes");
        std::fs::write(path, format!("{header}\n")).map_err(|e| PaperError::io(path, e))?;
        Ok(CoverageLedger { fingerprint, entries: vec![], path: Some(path.to_path_buf()) })
    }

    pub fn open(path: &Path) -> Result<Self, PaperError> {
        let text = std::fs::read_to_string(path).map_err(|e| PaperError::io(path, e))?;
        let mut ledger = Self::from_jsonl(&text)?;
        ledger.path = Some(path.to_path_buf());
        Ok(ledger)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PaperError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| PaperError::Format { line: 1, message: "missing header".into() })?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| PaperError::Format { line: 1, message: e.to_string() })?;
        let entries = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| PaperError::Format { line: i + 1, message: e.to_string() }))
            .collect::<Result<_, _>>()?;
        Ok(CoverageLedger { fingerprint: header.fingerprint, entries, path: None })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header { fingerprint: self.fingerprint.clone() }).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn fingerprint(&self) -> &ModelFingerprint {
        &self.fingerprint
    }

    pub fn entries(&self) -> &[SignOff] {
        &self.entries
    }

    /// Appends one entry per cell of `cells`. Nothing is recorded when the
    /// model differs from the bound version or the range does not lie in it.
    pub fn record_signoff(
        &mut self,
        wb: &Workbook,
        current: &ModelFingerprint,
        cells: &RangeRef,
        reviewer: &str,
        phase: &str,
        at: DateTime<Utc>,
    ) -> Result<usize, PaperError> {
        if !self.fingerprint.same_model(current) {
            return Err(PaperError::FingerprintMismatch {
                bound: self.fingerprint.content_hash.clone(),
                found: current.content_hash.clone(),
            });
        }
        let sheet_name = cells.sheet().ok_or_else(|| PaperError::Unqualified(cells.to_string()))?;
        let si = wb.sheet_index(sheet_name).ok_or_else(|| PaperError::UnknownSheet(sheet_name.to_string()))?;
        if cells.area() > MAX_SIGNOFF_CELLS {
            return Err(PaperError::RangeTooLarge(cells.to_string()));
        }
        let sheet = wb.sheets()[si].name().to_string();
        let timestamp = at.to_rfc3339_opts(SecondsFormat::Secs, true);
        let new: Vec<SignOff> = cells
            .coords()
            .map(|c| SignOff {
                sheet: sheet.clone(),
                cell: c.to_string(),
                reviewer: reviewer.to_string(),
                timestamp: timestamp.clone(),
                phase: phase.to_string(),
            })
            .collect();
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for e in &new {
                buf.push_str(&serde_json::to_string(e).expect("entry serializes"));
                buf.push('\n');
            }
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| PaperError::io(path, e))?;
            f.write_all(buf.as_bytes()).map_err(|e| PaperError::io(path, e))?;
        }
        let n = new.len();
        self.entries.extend(new);
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetCoverage {
    pub sheet: String,
    pub index: usize,
    pub signed: usize,
    pub total: usize,
    /// Share of non-blank cells signed off, in [0, 1].
    pub ratio: f64,
    /// Set when the sheet has no non-blank cells and the ratio is 1 by convention.
    pub zero_denominator: bool,
    pub unsigned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStatus {
    /// The ledger belongs to a different model version; no sign-off counts.
    pub stale: bool,
    pub sheets: Vec<SheetCoverage>,
}

impl CoverageStatus {
    pub fn overall(&self) -> f64 {
        let total: usize = self.sheets.iter().map(|s| s.total).sum();
        let signed: usize = self.sheets.iter().map(|s| s.signed).sum();
        if total == 0 {
            1.0
        } else {
            signed as f64 / total as f64
        }
    }
}

/// Per-sheet share of non-blank cells with at least one sign-off.
pub fn coverage_status(ledger: &CoverageLedger, wb: &Workbook, current: &ModelFingerprint) -> CoverageStatus {
    let stale = !ledger.fingerprint.same_model(current);
    let signed: BTreeSet<(String, Coord)> = if stale {
        BTreeSet::new()
    } else {
        ledger
            .entries
            .iter()
            .filter_map(|e| Some((e.sheet.to_lowercase(), Coord::parse_a1(&e.cell).ok()?)))
            .collect()
    };
    let sheets = wb
        .sheets()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lower = s.name().to_lowercase();
            let mut unsigned = Vec::new();
            let mut n_signed = 0;
            for (coord, _) in s.cells() {
                if signed.contains(&(lower.clone(), coord)) {
                    n_signed += 1;
                } else {
                    unsigned.push(coord.to_string());
                }
            }
            let total = s.len();
            SheetCoverage {
                sheet: s.name().to_string(),
                index: i + 1,
                signed: n_signed,
                total,
                ratio: if total == 0 { 1.0 } else { n_signed as f64 / total as f64 },
                zero_denominator: total == 0,
                unsigned,
            }
        })
        .collect();
    CoverageStatus { stale, sheets }
}
