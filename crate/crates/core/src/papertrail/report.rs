use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::Value;
use crate::graph::Metrics;
use crate::highlevel::{AssertionResult, AssertionStatus};
use crate::lowlevel::{Finding, Severity, Status};
use crate::model::ModelFingerprint;
use crate::sensitivity::ScenarioResult;

use super::CoverageStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    AgreedProcedures,
    MaterialErrorOpinion,
}

impl FromStr for ReportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "agreed" | "agreed_procedures" => Ok(ReportMode::AgreedProcedures),
            "opinion" | "material_error_opinion" => Ok(ReportMode::MaterialErrorOpinion),
            _ => Err(format!("unknown report mode `{s}` (expected agreed or opinion)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingsSummary {
    pub total: usize,
    pub by_rule: BTreeMap<String, usize>,
    pub by_severity: BTreeMap<String, usize>,
    pub by_status: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedIssue {
    pub id: u64,
    pub rule: String,
    pub severity: Severity,
    pub status: Status,
    pub loc: Vec<String>,
    pub msg: String,
    /// Note attached to the latest status change, e.g. a waiver reason.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionLine {
    pub code: String,
    pub title: String,
    pub status: AssertionStatus,
    pub severity: Severity,
    pub failing_periods: Vec<usize>,
    pub worst_deviation: f64,
    pub missing_roles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLine {
    pub name: String,
    pub passed: bool,
    pub error_cells: usize,
    pub outputs: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub generated_at: String,
    pub fingerprint: ModelFingerprint,
    pub mode: ReportMode,
    pub procedures: Vec<String>,
    /// Settings that shaped the checks, e.g. outlier thresholds.
    pub parameters: BTreeMap<String, String>,
    pub metrics: Option<Metrics>,
    pub findings: FindingsSummary,
    pub unresolved: Vec<UnresolvedIssue>,
    pub assertions: Vec<AssertionLine>,
    pub sensitivity: Vec<ScenarioLine>,
    pub coverage: Option<CoverageStatus>,
    pub liability: String,
    pub conclusion: String,
    pub notes: Vec<String>,
}

/// Everything a report draws on. Phases that did not run are left empty.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub fingerprint: &'a ModelFingerprint,
    pub mode: ReportMode,
    pub procedures: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub metrics: Option<&'a Metrics>,
    pub findings: &'a [Finding],
    pub assertions: &'a [AssertionResult],
    pub sensitivity: &'a [ScenarioResult],
    pub coverage: Option<&'a CoverageStatus>,
    pub liability: &'a str,
}

fn conclusion(mode: ReportMode, unresolved: usize) -> String {
    match mode {
        ReportMode::AgreedProcedures => "We performed the procedures listed above as agreed. This report sets out \
            their results only and does not express an opinion on whether the model is free of material error."
            .to_string(),
        ReportMode::MaterialErrorOpinion if unresolved == 0 => {
            "Based on the procedures performed, in our opinion the model is free of material error.".to_string()
        }
        ReportMode::MaterialErrorOpinion => format!(
            "Based on the procedures performed, and except for the {unresolved} unresolved issue(s) listed above, \
             in our opinion the model is free of material error."
        ),
    }
}

pub fn emit_report(inputs: &ReportInputs<'_>, generated_at: DateTime<Utc>) -> AuditReport {
    let mut summary = FindingsSummary { total: inputs.findings.len(), ..Default::default() };
    for f in inputs.findings {
        *summary.by_rule.entry(f.rule.clone()).or_default() += 1;
        *summary.by_severity.entry(f.severity.as_str().to_string()).or_default() += 1;
        *summary.by_status.entry(f.status.as_str().to_string()).or_default() += 1;
    }
    let unresolved: Vec<UnresolvedIssue> = inputs
        .findings
        .iter()
        .filter(|f| f.status.is_unresolved())
        .map(|f| UnresolvedIssue {
            id: f.id,
            rule: f.rule.clone(),
            severity: f.severity,
            status: f.status,
            loc: f.loc.clone(),
            msg: f.msg.clone(),
            note: f.history.last().map(|h| h.note.clone()).filter(|n| !n.is_empty()),
        })
        .collect();
    let assertions = inputs
        .assertions
        .iter()
        .map(|a| AssertionLine {
            code: a.code.to_string(),
            title: a.title.to_string(),
            status: a.status,
            severity: a.severity,
            failing_periods: a.failing_periods.clone(),
            worst_deviation: a.worst_deviation,
            missing_roles: a.missing_roles.clone(),
        })
        .collect();
    let sensitivity = inputs
        .sensitivity
        .iter()
        .map(|s| ScenarioLine {
            name: s.name.clone(),
            passed: s.passed,
            error_cells: s.error_cells.len(),
            outputs: s
                .outputs
                .iter()
                .map(|w| (w.target.clone(), serde_json::to_value(&w.value).expect("value serializes")))
                .collect(),
        })
        .collect();
    let mut notes = Vec::new();
    if let Some(m) = inputs.metrics {
        notes.push(format!(
            "Review-time estimate assumes a linear throughput of {} unique formulas per hour; it is a planning figure, not a measurement.",
            crate::formula::format_number(m.formulas_per_hour)
        ));
    }
    notes.push(
        "Whether a range covers the cells the modeller intended cannot be judged mechanically; R011 and R030 flag likely \
         cases and the remainder was left to reviewer inspection."
            .to_string(),
    );
    AuditReport {
        generated_at: generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        fingerprint: inputs.fingerprint.clone(),
        mode: inputs.mode,
        procedures: inputs.procedures.clone(),
        parameters: inputs.parameters.clone(),
        metrics: inputs.metrics.cloned(),
        findings: summary,
        conclusion: conclusion(inputs.mode, unresolved.len()),
        unresolved,
        assertions,
        sensitivity,
        coverage: inputs.coverage.cloned(),
        liability: inputs.liability.to_string(),
        notes,
    }
}

fn pct(r: f64) -> String {
    format!("{:.1}%", r * 100.0)
}

fn counts(map: &BTreeMap<String, usize>) -> String {
    if map.is_empty() {
        return "none".to_string();
    }
    map.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let fp = &self.fingerprint;
        let title = match self.mode {
            ReportMode::AgreedProcedures => "MODEL AUDIT REPORT (agreed-upon procedures)",
            ReportMode::MaterialErrorOpinion => "MODEL AUDIT REPORT (opinion)",
        };
        let _ = writeln!(o, "{title}");
        let _ = writeln!(o, "Generated: {}", self.generated_at);
        let _ = writeln!(o, "\nIDENTIFICATION");
        let _ = writeln!(o, "  File:     {}", fp.file_name);
        let _ = writeln!(o, "  Size:     {} bytes", fp.byte_size);
        let (date, time) = fp.modified.split_once('T').unwrap_or((&fp.modified, ""));
        let _ = writeln!(o, "  Date:     {date}");
        let _ = writeln!(o, "  Time:     {time}");
        let _ = writeln!(o, "  SHA-256:  {}", fp.content_hash);

        let _ = writeln!(o, "\nPROCEDURES PERFORMED");
        for (i, p) in self.procedures.iter().enumerate() {
            let _ = writeln!(o, "  {}. {p}", i + 1);
        }
        if !self.parameters.is_empty() {
            let _ = writeln!(o, "\nPARAMETERS");
            for (k, v) in &self.parameters {
                let _ = writeln!(o, "  {k}: {v}");
            }
        }

        if let Some(m) = &self.metrics {
            let _ = writeln!(o, "\nMETRICS");
            let _ = writeln!(o, "  cells: {}  formulas: {}  unique formulas: {}", m.total_cells, m.formula_cells, m.unique_formula_count);
            let _ = writeln!(o, "  original:repeated: {}", m.original_to_repeated_ratio);
            let _ = writeln!(
                o,
                "  edges: {} ({} same-sheet, {} cross-sheet)  summary ranges: {}",
                m.edge_count, m.same_sheet_edge_count, m.cross_sheet_edge_count, m.summary_edge_count
            );
            let _ = writeln!(o, "  max precedents: {}  max dependents: {}", m.max_precedents, m.max_dependents);
            let _ = writeln!(o, "  estimated review hours: {:.2}", m.estimated_review_hours);
        }

        let _ = writeln!(o, "\nFINDINGS");
        let _ = writeln!(o, "  total: {}", self.findings.total);
        let _ = writeln!(o, "  by rule: {}", counts(&self.findings.by_rule));
        let _ = writeln!(o, "  by severity: {}", counts(&self.findings.by_severity));
        let _ = writeln!(o, "  by status: {}", counts(&self.findings.by_status));

        let _ = writeln!(o, "\nUNRESOLVED ISSUES");
        if self.unresolved.is_empty() {
            let _ = writeln!(o, "  none");
        }
        for u in &self.unresolved {
            let _ = writeln!(o, "  #{} {} [{}] {} at {}: {}", u.id, u.rule, u.severity.as_str(), u.status.as_str(), u.loc.join(", "), u.msg);
            if let Some(n) = &u.note {
                let _ = writeln!(o, "      note: {n}");
            }
        }

        if !self.assertions.is_empty() {
            let _ = writeln!(o, "\nFINANCIAL ASSERTIONS");
            for a in &self.assertions {
                let status = match a.status {
                    AssertionStatus::Pass => "pass".to_string(),
                    AssertionStatus::NotRun => format!("not run (missing {})", a.missing_roles.join(", ")),
                    AssertionStatus::Fail => {
                        let p: Vec<String> = a.failing_periods.iter().map(|p| p.to_string()).collect();
                        format!("FAIL periods {} worst deviation {}", p.join(","), crate::formula::format_number(a.worst_deviation))
                    }
                };
                let _ = writeln!(o, "  {} {}: {status}", a.code, a.title);
            }
        }

        if !self.sensitivity.is_empty() {
            let _ = writeln!(o, "\nSENSITIVITIES");
            for s in &self.sensitivity {
                let outs: Vec<String> = s.outputs.iter().map(|(k, v)| format!("{k}={}", render_json(v))).collect();
                let _ = writeln!(
                    o,
                    "  {}: {} errors={} {}",
                    s.name,
                    if s.passed { "pass" } else { "FAIL" },
                    s.error_cells,
                    outs.join(" ")
                );
            }
        }

        if let Some(c) = &self.coverage {
            let _ = writeln!(o, "\nCOVERAGE");
            if c.stale {
                let _ = writeln!(o, "  ledger belongs to a different model version; all sign-offs void");
            }
            for s in &c.sheets {
                let flag = if s.zero_denominator { " (no non-blank cells)" } else { "" };
                let _ = writeln!(o, "  {}. {}: {}/{} {}{flag}", s.index, s.sheet, s.signed, s.total, pct(s.ratio));
            }
            let _ = writeln!(o, "  overall: {}", pct(c.overall()));
        }

        let _ = writeln!(o, "\nNOTES");
        for n in &self.notes {
            let _ = writeln!(o, "  - {n}");
        }
        let _ = writeln!(o, "\nCONCLUSION");
        let _ = writeln!(o, "  {}", self.conclusion);
        let _ = writeln!(o, "\nLIABILITY");
        let _ = writeln!(o, "{}", self.liability);
        o
    }
}

fn render_json(v: &serde_json::Value) -> String {
    match serde_json::from_value::<serde_json::Value>(v.clone()) {
        Ok(serde_json::Value::Number(n)) => n.as_f64().map(crate::formula::format_number).unwrap_or_else(|| n.to_string()),
        Ok(serde_json::Value::Object(m)) => m.get("error").and_then(|e| e.as_str()).unwrap_or("?").to_string(),
        Ok(serde_json::Value::Null) => Value::Blank.to_string(),
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowlevel::Status;
    use chrono::TimeZone;

    fn fp() -> ModelFingerprint {
        crate::model::fingerprint_bytes("model.json", b"{}", Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap())
    }

    fn inputs<'a>(fp: &'a ModelFingerprint, findings: &'a [Finding], mode: ReportMode) -> ReportInputs<'a> {
        ReportInputs {
            fingerprint: fp,
            mode,
            procedures: vec!["low-level formula checks".into()],
            parameters: BTreeMap::new(),
            metrics: None,
            findings,
            assertions: &[],
            sensitivity: &[],
            coverage: None,
            liability: "Liability is capped at the fee.",
        }
    }

    #[test]
    fn clean_agreed_report() {
        let fp = fp();
        let r = emit_report(&inputs(&fp, &[], ReportMode::AgreedProcedures), Utc::now());
        let text = r.to_text();
        assert!(text.contains("File:     model.json"));
        assert!(text.contains("Size:     2 bytes"));
        assert!(text.contains("Date:     2024-05-06"));
        assert!(text.contains("Time:     07:08:09Z"));
        assert!(text.contains(&fp.content_hash));
        assert!(text.contains("UNRESOLVED ISSUES\n  none\n"));
        assert!(text.contains("procedures listed above as agreed"));
        assert!(text.ends_with("Liability is capped at the fee.\n"));
    }

    #[test]
    fn waived_finding_listed() {
        let fp = fp();
        let mut f = Finding::new("R022", Severity::Warning, vec!["S!B2".into()], "constant 12");
        f.id = 4;
        f.transition(Status::Waived, 2, "months per year").unwrap();
        let mut done = Finding::new("R021", Severity::Warning, vec!["S!C2".into()], "dangling");
        done.id = 5;
        done.transition(Status::Corrected, 2, "").unwrap();
        done.transition(Status::Verified, 3, "").unwrap();
        let findings = [f, done];
        let r = emit_report(&inputs(&fp, &findings, ReportMode::MaterialErrorOpinion), Utc::now());
        assert_eq!(r.unresolved.len(), 1);
        let text = r.to_text();
        assert!(text.contains("#4 R022 [warning] waived at S!B2: constant 12\n      note: months per year"));
        assert!(text.contains("except for the 1 unresolved issue(s)"));
        assert_eq!(AuditReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn deterministic_apart_from_timestamp() {
        let fp = fp();
        let a = emit_report(&inputs(&fp, &[], ReportMode::AgreedProcedures), Utc.timestamp_opt(0, 0).unwrap());
        let b = emit_report(&inputs(&fp, &[], ReportMode::AgreedProcedures), Utc.timestamp_opt(99, 0).unwrap());
        let strip = |s: String| s.lines().filter(|l| !l.starts_with("Generated")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(a.to_text()), strip(b.to_text()));
        assert_ne!(a.generated_at, b.generated_at);
    }
}
