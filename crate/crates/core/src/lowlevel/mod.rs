//! Mechanized low-level review: named-range checks, per-formula rules and
//! copy-region outlier detection, all producing [`Finding`]s.

mod finding;
mod names;
mod regions;
mod rules;

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::graph::{DepGraph, ParsedFormulas};
use crate::model::Workbook;

pub use finding::{Finding, IllegalTransition, Severity, Status, StatusChange};
pub use names::check_named_ranges;
pub use regions::{detect_fixity_mismatches, detect_region_outliers, formula_runs};
pub use rules::scan_formula_rules;

pub struct RuleInfo {
    pub code: &'static str,
    pub severity: Severity,
    pub title: &'static str,
    pub example: &'static str,
}

const fn rule(code: &'static str, severity: Severity, title: &'static str, example: &'static str) -> RuleInfo {
    RuleInfo { code, severity, title, example }
}

/// Every rule this module can emit, with default severity.
pub const RULES: &[RuleInfo] = &[
    rule("R010", Severity::Warning, "overlapping defined names", "Rev=A1:A5 and Costs=A4:A8 overlap on A4:A5"),
    rule("R011", Severity::Warning, "defined name over an all-blank range", "Buffer=C1:C10 with every cell blank"),
    rule("R012", Severity::Warning, "defined name with no valid target", "OldRate pointing at a deleted sheet"),
    rule("R013", Severity::Warning, "defined name breaks the naming convention", "tmp_rate when names must start uppercase"),
    rule("R020", Severity::Warning, "error value stored or written into a formula", "=IF(A1>0,A1,#N/A)"),
    rule("R021", Severity::Warning, "reference to a missing sheet, name or cell", "=Old!B2*2 after Old was deleted"),
    rule("R022", Severity::Warning, "constant embedded in a formula", "=A1*1.175"),
    rule("R023", Severity::Warning, "unknown function", "=SUMM(A1:A2)"),
    rule("R024", Severity::Warning, "function argument count or type violation", "=ROUND(A1)"),
    rule("R025", Severity::Error, "circular reference", "A1 =B1 and B1 =A1"),
    rule("R026", Severity::Warning, "absolute/relative mix differs from copied siblings", "=A3*C3 among =An*$C$1"),
    rule("R027", Severity::Warning, "formula text does not parse", "=SUM(A1"),
    rule("R030", Severity::Warning, "formula differs from the majority of its copied run", "B10 differs from B1:B9"),
    rule("R040", Severity::Warning, "cached value disagrees with recalculation", "cached 100, computed 99.5"),
];

pub fn rule_info(code: &str) -> Option<&'static RuleInfo> {
    RULES.iter().find(|r| r.code == code)
}

pub const DEFAULT_NAME_PATTERN: &str = "^[A-Z][A-Za-z0-9_]{0,31}$";

#[derive(Debug, Error)]
pub enum RuleConfigError {
    #[error("majority_threshold must lie in (0.5, 1.0], got {0}")]
    Threshold(f64),
    #[error("min_run must be at least 2, got {0}")]
    MinRun(usize),
    #[error("unknown rule code `{0}`")]
    UnknownRule(String),
    #[error("invalid name_pattern: {0}")]
    Pattern(#[from] regex::Error),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Rules to run; `None` runs all.
    pub enabled: Option<BTreeSet<String>>,
    pub disabled: BTreeSet<String>,
    pub constant_allowlist: Vec<f64>,
    pub majority_threshold: f64,
    pub min_run: usize,
    pub severity_overrides: BTreeMap<String, Severity>,
    pub name_pattern: String,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            enabled: None,
            disabled: BTreeSet::new(),
            constant_allowlist: vec![0.0, 1.0, -1.0],
            majority_threshold: 0.7,
            min_run: 3,
            severity_overrides: BTreeMap::new(),
            name_pattern: DEFAULT_NAME_PATTERN.to_string(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), RuleConfigError> {
        if !(self.majority_threshold > 0.5 && self.majority_threshold <= 1.0) {
            return Err(RuleConfigError::Threshold(self.majority_threshold));
        }
        if self.min_run < 2 {
            return Err(RuleConfigError::MinRun(self.min_run));
        }
        let codes = self.enabled.iter().flatten().chain(&self.disabled).chain(self.severity_overrides.keys());
        for code in codes {
            let known = rule_info(code).is_some() || (code.starts_with('H') && code.len() == 4);
            if !known {
                return Err(RuleConfigError::UnknownRule(code.clone()));
            }
        }
        Regex::new(&self.name_pattern)?;
        Ok(())
    }

    pub fn is_enabled(&self, code: &str) -> bool {
        !self.disabled.contains(code) && self.enabled.as_ref().is_none_or(|e| e.contains(code))
    }

    pub fn severity_for(&self, code: &str, default: Severity) -> Severity {
        self.severity_overrides.get(code).copied().unwrap_or(default)
    }

    pub(crate) fn allows_constant(&self, x: f64) -> bool {
        self.constant_allowlist.iter().any(|&a| a == x)
    }
}

/// Ordering key: name-level findings (by name table position) come before
/// cell-level ones (by sheet, row, column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Anchor {
    Name(usize),
    Cell(usize, u32, u32),
}

pub(crate) struct Located {
    pub anchor: Anchor,
    pub finding: Finding,
}

pub(crate) fn located(anchor: Anchor, code: &str, loc: Vec<String>, msg: String) -> Located {
    let severity = rule_info(code).map_or(Severity::Warning, |r| r.severity);
    Located { anchor, finding: Finding::new(code, severity, loc, msg) }
}

/// Sorts into the canonical order, applies enablement and severity overrides
/// and numbers the findings from `first_id`.
pub(crate) fn finish(mut items: Vec<Located>, config: &RuleConfig, first_id: u64) -> Vec<Finding> {
    items.retain(|l| config.is_enabled(&l.finding.rule));
    items.sort_by(|a, b| (a.anchor, &a.finding.rule).cmp(&(b.anchor, &b.finding.rule)));
    items
        .into_iter()
        .zip(first_id..)
        .map(|(l, id)| {
            let mut f = l.finding;
            f.severity = config.severity_for(&f.rule, f.severity);
            f.id = id;
            f
        })
        .collect()
}

/// Runs every low-level rule and returns findings numbered from 1.
pub fn run_low_level(wb: &Workbook, graph: &DepGraph, parsed: &ParsedFormulas, config: &RuleConfig) -> Vec<Finding> {
    let mut items = names::named_range_items(wb, config);
    items.extend(rules::formula_rule_items(wb, graph, parsed, config));
    let fixity = regions::fixity_items(wb, parsed, config);
    let fixity_cells: BTreeSet<Anchor> = fixity.iter().map(|l| l.anchor).collect();
    items.extend(fixity);
    // R026 is the sharper diagnosis for a cell it flags
    items.extend(regions::outlier_items(wb, parsed, config).into_iter().filter(|l| !fixity_cells.contains(&l.anchor)));
    finish(items, config, 1)
}

/// Convenience wrapper that parses and builds the graph itself.
pub fn audit_workbook(wb: &Workbook, config: &RuleConfig) -> Vec<Finding> {
    let parsed = ParsedFormulas::parse(wb);
    let graph = DepGraph::build(wb, &parsed);
    run_low_level(wb, &graph, &parsed, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(RuleConfig::default().validate().is_ok());
        let bad = RuleConfig { majority_threshold: 0.5, ..RuleConfig::default() };
        assert!(matches!(bad.validate(), Err(RuleConfigError::Threshold(_))));
        let bad = RuleConfig { min_run: 1, ..RuleConfig::default() };
        assert!(matches!(bad.validate(), Err(RuleConfigError::MinRun(1))));
        let bad = RuleConfig { disabled: ["R999".to_string()].into(), ..RuleConfig::default() };
        assert!(matches!(bad.validate(), Err(RuleConfigError::UnknownRule(_))));
    }

    #[test]
    fn config_from_json() {
        let cfg: RuleConfig =
            serde_json::from_str(r#"{"min_run":4,"severity_overrides":{"R022":"info"}}"#).unwrap();
        assert_eq!(cfg.min_run, 4);
        assert_eq!(cfg.majority_threshold, 0.7);
        assert_eq!(cfg.severity_for("R022", Severity::Warning), Severity::Info);
        assert!(serde_json::from_str::<RuleConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn every_rule_has_catalogue_entry() {
        let codes: BTreeSet<_> = RULES.iter().map(|r| r.code).collect();
        assert_eq!(codes.len(), RULES.len());
        assert_eq!(rule_info("R025").unwrap().severity, Severity::Error);
    }
}
