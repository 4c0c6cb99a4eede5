//! Engagement configuration and the end-to-end audit run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use crate::engine::{recalculate_parsed, verify_cached_values, RecalcResult, DEFAULT_TOLERANCE};
use crate::graph::{compute_metrics_with, DepGraph, Metrics, ParsedFormulas, DEFAULT_FORMULAS_PER_HOUR};
use crate::highlevel::{assertion_findings, load_schema, run_financial_assertions, AssertionResult, SchemaError};
use crate::lowlevel::{run_low_level, Finding, RuleConfig, RuleConfigError, Severity, Status};
use crate::model::{fingerprint_bytes, workbook_from_json, ModelError, ModelFingerprint, Workbook};
use crate::papertrail::{
    coverage_status, emit_report, render_all_maps, AuditReport, CellMap, CoverageLedger, CoverageStatus, FindingStore,
    MapMode, PaperError, ReportInputs, ReportMode,
};
use crate::sensitivity::{load_suite, run_sensitivity_suite, ScenarioResult, SensitivityError};

pub const LOCK_FILE: &str = ".cellsentry.lock";
pub const FINDINGS_FILE: &str = "findings.jsonl";
pub const LEDGER_FILE: &str = "coverage.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

pub const DEFAULT_LIABILITY: &str =
    "Liability arising from this review is limited as set out in the engagement terms.";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Paper(#[from] PaperError),
    #[error("rule configuration: {0}")]
    Rules(#[from] RuleConfigError),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} exists: another run is using this output directory (delete the file if no run is active)")]
    Locked(PathBuf),
    #[error("{0} unresolved error-severity low-level finding(s); high-level checks refused (use --force)")]
    Refused(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngagement {
    #[serde(default)]
    rules: RuleConfig,
    schema: Option<PathBuf>,
    scenarios: Option<PathBuf>,
    threshold: Option<Severity>,
    liability: Option<String>,
    mode: Option<ReportMode>,
    out: Option<PathBuf>,
    cache_tolerance: Option<f64>,
    formulas_per_hour: Option<f64>,
}

/// The agreed review scope. Paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EngagementConfig {
    pub rules: RuleConfig,
    pub schema: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub threshold: Severity,
    pub liability: String,
    pub mode: ReportMode,
    pub out: Option<PathBuf>,
    pub cache_tolerance: f64,
    pub formulas_per_hour: f64,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        EngagementConfig {
            rules: RuleConfig::default(),
            schema: None,
            scenarios: None,
            threshold: Severity::Warning,
            liability: DEFAULT_LIABILITY.to_string(),
            mode: ReportMode::AgreedProcedures,
            out: None,
            cache_tolerance: DEFAULT_TOLERANCE,
            formulas_per_hour: DEFAULT_FORMULAS_PER_HOUR,
        }
    }
}

impl EngagementConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let bad = |message: String| PipelineError::Config { path: base.to_path_buf(), message };
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawEngagement =
            serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            bad(format!("at {at}: {}", e.into_inner()))
        })?;
        raw.rules.validate()?;
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        let cfg = EngagementConfig {
            rules: raw.rules,
            schema: resolve(raw.schema),
            scenarios: resolve(raw.scenarios),
            threshold: raw.threshold.unwrap_or(Severity::Warning),
            liability: raw.liability.unwrap_or_else(|| DEFAULT_LIABILITY.to_string()),
            mode: raw.mode.unwrap_or(ReportMode::AgreedProcedures),
            out: resolve(raw.out),
            cache_tolerance: raw.cache_tolerance.unwrap_or(DEFAULT_TOLERANCE),
            formulas_per_hour: raw.formulas_per_hour.unwrap_or(DEFAULT_FORMULAS_PER_HOUR),
        };
        if !(cfg.cache_tolerance.is_finite() && cfg.cache_tolerance >= 0.0) {
            return Err(bad("cache_tolerance must be a non-negative number".into()));
        }
        if !(cfg.formulas_per_hour.is_finite() && cfg.formulas_per_hour > 0.0) {
            return Err(bad("formulas_per_hour must be positive".into()));
        }
        for p in [&cfg.schema, &cfg.scenarios].into_iter().flatten() {
            if !p.is_file() {
                return Err(bad(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| match e {
            PipelineError::Config { message, .. } => PipelineError::Config { path: path.to_path_buf(), message },
            other => other,
        })
    }
}

/// Reads a model file once, returning the workbook and its fingerprint.
pub fn load_model(path: &Path) -> Result<(Workbook, ModelFingerprint), PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    let modified = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let fp = fingerprint_bytes(&name, &bytes, DateTime::<Utc>::from(modified));
    let text = String::from_utf8(bytes)
        .map_err(|_| ModelError::Schema { path: String::new(), message: "model file is not UTF-8".into() })?;
    Ok((workbook_from_json(&text)?, fp))
}

/// Holds the output directory's lock file for the life of a run.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub force: bool,
    pub skip_sensitivity: bool,
    /// Overrides the schema's assertion tolerance.
    pub tolerance: Option<f64>,
    pub now: DateTime<Utc>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { force: false, skip_sensitivity: false, tolerance: None, now: Utc::now() }
    }
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub fingerprint: ModelFingerprint,
    pub metrics: Metrics,
    pub findings: Vec<Finding>,
    pub assertions: Vec<AssertionResult>,
    pub scenarios: Vec<ScenarioResult>,
    pub coverage: CoverageStatus,
    pub report: AuditReport,
    pub maps: Vec<CellMap>,
    /// High-level checks were configured but refused.
    pub high_level_blocked: bool,
    pub threshold: Severity,
}

impl AuditOutcome {
    /// Unresolved findings at or above the threshold.
    pub fn failing_findings(&self) -> usize {
        count_failing(&self.findings, self.threshold)
    }
}

pub fn count_failing(findings: &[Finding], threshold: Severity) -> usize {
    findings.iter().filter(|f| f.status.is_unresolved() && f.severity >= threshold).count()
}

/// Unresolved error-severity findings, the ones that hold back high-level checks.
pub fn blocking_findings(findings: &[Finding]) -> usize {
    findings.iter().filter(|f| f.status.is_unresolved() && f.severity == Severity::Error).count()
}

/// Low-level rules plus cached-value verification, numbered from 1.
pub fn low_level_phase(
    wb: &Workbook,
    graph: &DepGraph,
    parsed: &ParsedFormulas,
    result: &RecalcResult,
    config: &EngagementConfig,
) -> Vec<Finding> {
    let mut findings = run_low_level(wb, graph, parsed, &config.rules);
    if config.rules.is_enabled("R040") {
        for mut f in verify_cached_values(wb, result, config.cache_tolerance) {
            f.severity = config.rules.severity_for("R040", f.severity);
            f.id = findings.len() as u64 + 1;
            findings.push(f);
        }
    }
    findings
}

/// Applies the rule config's enable list and severity overrides to H findings.
fn filter_high_level(findings: Vec<Finding>, config: &RuleConfig) -> Vec<Finding> {
    findings
        .into_iter()
        .filter(|f| config.is_enabled(&f.rule))
        .map(|mut f| {
            f.severity = config.severity_for(&f.rule, f.severity);
            f
        })
        .collect()
}

/// Carries waivers from a previous run's store onto matching findings and
/// advances the feedback iteration.
fn merge_previous(findings: &mut [Finding], previous: &[Finding]) {
    let iteration = previous.iter().map(|f| f.iteration).max().map_or(1, |i| i + 1);
    let waived: BTreeMap<(&str, &[String]), &Finding> = previous
        .iter()
        .filter(|f| f.status == Status::Waived)
        .map(|f| ((f.rule.as_str(), f.loc.as_slice()), f))
        .collect();
    for f in findings {
        f.iteration = iteration;
        if let Some(w) = waived.get(&(f.rule.as_str(), f.loc.as_slice())) {
            f.status = Status::Waived;
            f.history = w.history.clone();
        }
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes") + "\n"
}

/// Full audit: graph and metrics, low-level checks, recalculation with cached
/// value verification, high-level assertions, sensitivities and the report.
/// Every artifact is written to `out`.
pub fn run_audit(
    model: &Path,
    config: &EngagementConfig,
    out: &Path,
    opts: &AuditOptions,
) -> Result<AuditOutcome, PipelineError> {
    let (wb, fp) = load_model(model)?;
    let _lock = DirLock::acquire(out)?;
    let mut procedures = vec![format!("Identified the model file and recorded its SHA-256 fingerprint ({}).", fp.file_name)];

    let parsed = ParsedFormulas::parse(&wb);
    let graph = DepGraph::build(&wb, &parsed);
    let metrics = compute_metrics_with(&wb, &graph, &parsed, config.formulas_per_hour);
    let maps = render_all_maps(&wb, MapMode::Type);
    procedures.push("Built the cell dependency graph and computed uniqueness and complexity metrics.".into());
    procedures.push("Produced cell-type maps for every sheet.".into());

    let result = recalculate_parsed(&wb, &parsed, &graph);
    let mut findings = low_level_phase(&wb, &graph, &parsed, &result, config);
    procedures.push("Ran low-level checks on named ranges, formulas, references, circularity and copied regions.".into());
    procedures.push("Recalculated the model and compared every cached formula value with the recalculated value.".into());

    let store_path = out.join(FINDINGS_FILE);
    if store_path.is_file() {
        let previous = FindingStore::load(&store_path)?;
        merge_previous(&mut findings, previous.findings());
    }

    let mut assertions = Vec::new();
    let mut blocked = false;
    if let Some(schema_path) = &config.schema {
        let blocking = blocking_findings(&findings);
        if blocking > 0 && !opts.force {
            blocked = true;
            procedures.push(format!(
                "High-level financial assertions were not run: {blocking} unresolved error-severity low-level finding(s)."
            ));
        } else {
            let mut schema = load_schema(schema_path, &wb)?;
            if let Some(t) = opts.tolerance {
                schema = schema.with_tolerance(t);
            }
            assertions = run_financial_assertions(&result, &schema);
            let iteration = findings.first().map_or(1, |f| f.iteration);
            for mut f in filter_high_level(assertion_findings(&assertions, &schema, &wb, 1), &config.rules) {
                f.id = findings.len() as u64 + 1;
                f.iteration = iteration;
                findings.push(f);
            }
            procedures.push(format!(
                "Ran high-level financial assertions H001-H006 with tolerance {}.",
                crate::formula::format_number(schema.tolerance)
            ));
        }
    }

    let mut scenarios = Vec::new();
    if let (Some(suite_path), false) = (&config.scenarios, opts.skip_sensitivity) {
        let suite = load_suite(suite_path)?;
        scenarios = run_sensitivity_suite(&wb, &suite, Some(&out.join("scenarios")))?;
        procedures.push(format!("Ran {} sensitivity scenario(s) against the base case.", suite.scenarios.len()));
    }

    let ledger_path = out.join(LEDGER_FILE);
    let ledger = if ledger_path.is_file() {
        CoverageLedger::open(&ledger_path)?
    } else {
        CoverageLedger::create(&ledger_path, fp.clone())?
    };
    let coverage = coverage_status(&ledger, &wb, &fp);
    procedures.push("Measured reviewer sign-off coverage from the coverage ledger.".into());

    let mut parameters = BTreeMap::new();
    parameters.insert("majority_threshold".to_string(), config.rules.majority_threshold.to_string());
    parameters.insert("min_run".to_string(), config.rules.min_run.to_string());
    parameters.insert("cache_tolerance".to_string(), crate::formula::format_number(config.cache_tolerance));
    parameters.insert("threshold".to_string(), config.threshold.as_str().to_string());
    if let Some(t) = opts.tolerance {
        parameters.insert("assertion_tolerance".to_string(), crate::formula::format_number(t));
    }

    let report = emit_report(
        &ReportInputs {
            fingerprint: &fp,
            mode: config.mode,
            procedures,
            parameters,
            metrics: Some(&metrics),
            findings: &findings,
            assertions: &assertions,
            sensitivity: &scenarios,
            coverage: Some(&coverage),
            liability: &config.liability,
        },
        opts.now,
    );

    write(&out.join("fingerprint.json"), pretty(&fp))?;
    write(&out.join("metrics.json"), pretty(&metrics))?;
    write(&store_path, FindingStore::new(findings.clone()).to_jsonl())?;
    write(&out.join("recalc.json"), pretty(&result.to_json()))?;
    write(&out.join("graph.txt"), graph.edge_lines().join("\n") + "\n")?;
    write(&out.join("maps.txt"), maps.iter().map(|m| m.to_text()).collect::<Vec<_>>().join("\n"))?;
    write(&out.join("maps.json"), pretty(&maps))?;
    if !assertions.is_empty() {
        write(&out.join("assertions.json"), pretty(&assertions))?;
    }
    if !scenarios.is_empty() {
        write(&out.join("sensitivity.json"), pretty(&scenarios))?;
    }
    write(&out.join(REPORT_JSON), report.to_json() + "\n")?;
    write(&out.join(REPORT_TEXT), report.to_text())?;

    Ok(AuditOutcome {
        fingerprint: fp,
        metrics,
        findings,
        assertions,
        scenarios,
        coverage,
        report,
        maps,
        high_level_blocked: blocked,
        threshold: config.threshold,
    })
}

/// Re-issues a report from an audit directory after findings were updated or
/// sign-offs recorded. `model` refreshes the coverage figures.
pub fn refresh_report(
    dir: &Path,
    mode: Option<ReportMode>,
    model: Option<&Path>,
    now: DateTime<Utc>,
) -> Result<AuditReport, PipelineError> {
    let _lock = DirLock::acquire(dir)?;
    let json_path = dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
    let previous = AuditReport::from_json(&text)
        .map_err(|e| PipelineError::Config { path: json_path.clone(), message: e.to_string() })?;
    let findings = FindingStore::load(&dir.join(FINDINGS_FILE))?.into_findings();
    let coverage = match model {
        Some(m) => {
            let (wb, fp) = load_model(m)?;
            Some(coverage_status(&CoverageLedger::open(&dir.join(LEDGER_FILE))?, &wb, &fp))
        }
        None => previous.coverage.clone(),
    };
    let mut report = emit_report(
        &ReportInputs {
            fingerprint: &previous.fingerprint,
            mode: mode.unwrap_or(previous.mode),
            procedures: previous.procedures.clone(),
            parameters: previous.parameters.clone(),
            metrics: previous.metrics.as_ref(),
            findings: &findings,
            assertions: &[],
            sensitivity: &[],
            coverage: coverage.as_ref(),
            liability: &previous.liability,
        },
        now,
    );
    report.assertions = previous.assertions;
    report.sensitivity = previous.sensitivity;
    write(&json_path, report.to_json() + "\n")?;
    write(&dir.join(REPORT_TEXT), report.to_text())?;
    Ok(report)
}

/// Rule codes that appear among `findings`, for quick summaries.
pub fn rules_hit(findings: &[Finding]) -> BTreeSet<String> {
    findings.iter().map(|f| f.rule.clone()).collect()
}
