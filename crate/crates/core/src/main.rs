use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use cellsentry::diff::{diff_workbooks, rereview_scope, DiffOptions};
use cellsentry::engine::{recalculate_parsed, resolve_target, Value};
use cellsentry::graph::{compute_metrics_with, DepGraph, Direction, ParsedFormulas};
use cellsentry::highlevel::{load_schema, run_financial_assertions, AssertionStatus};
use cellsentry::lowlevel::{Finding, Severity, Status};
use cellsentry::model::RangeRef;
use cellsentry::papertrail::{
    coverage_status, render_all_maps, render_cell_map, CoverageLedger, FindingStore, MapMode, ReportMode,
};
use cellsentry::pipeline::{
    blocking_findings, count_failing, load_model, low_level_phase, refresh_report, run_audit, AuditOptions,
    EngagementConfig, PipelineError,
};
use cellsentry::sensitivity::{load_suite, run_sensitivity_suite};

#[derive(Parser)]
#[command(name = "cellsentry", version, about = "Spreadsheet model audit toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Engagement config (JSON).
    #[arg(short = 'c', long = "config")]
    config: Option<PathBuf>,
    /// Lowest severity that makes the exit code 1.
    #[arg(long)]
    threshold: Option<Severity>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EngagementConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => EngagementConfig::load(p)?,
            None => EngagementConfig::default(),
        };
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit pipeline and write every artifact to the output directory.
    Audit {
        model: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
        /// Run high-level checks despite unresolved error findings.
        #[arg(long)]
        force: bool,
        /// Tolerance for the financial assertions.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ReportMode>,
        /// Skip the sensitivity suite.
        #[arg(long)]
        no_sens: bool,
        /// Print the machine report instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Print cell-type maps.
    Map {
        model: PathBuf,
        #[arg(long)]
        sheet: Option<String>,
        /// Code formula cells by copy origin instead of type.
        #[arg(long)]
        clone: bool,
        #[arg(long)]
        json: bool,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Dependency metrics, edges, cycles or links of one cell.
    Graph {
        model: PathBuf,
        /// List every edge.
        #[arg(long)]
        edges: bool,
        /// List circular reference groups.
        #[arg(long)]
        cycles: bool,
        /// Show links of this cell (Sheet!A1 or a name).
        #[arg(long)]
        cell: Option<String>,
        /// With --cell: follow precedents rather than dependents.
        #[arg(long)]
        precedents: bool,
        /// With --cell: follow links transitively.
        #[arg(long)]
        transitive: bool,
    },
    /// Low-level checks plus cached-value verification, as JSON lines.
    Check {
        model: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recalculate, optionally with overrides, and verify cached values.
    Recalc {
        model: PathBuf,
        /// Override a literal cell: Sheet!B2=5.
        #[arg(long = "set", value_name = "TARGET=VALUE")]
        set: Vec<String>,
        /// Only report these cells.
        #[arg(long = "cell")]
        cells: Vec<String>,
        /// Tolerance for cached-value comparison.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a sensitivity suite.
    Sens {
        model: PathBuf,
        suite: PathBuf,
        /// Directory for the scenario copies.
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Run the financial assertions.
    Hicheck {
        model: PathBuf,
        schema: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare two versions of a model.
    Diff {
        old: PathBuf,
        new: PathBuf,
        /// Also list the cells that need re-review.
        #[arg(long)]
        scope: bool,
        /// List every cell of added and removed sheets.
        #[arg(long)]
        verbose: bool,
        #[arg(long)]
        json: bool,
    },
    /// Reviewer sign-off ledger.
    Coverage {
        #[command(subcommand)]
        action: CoverageAction,
    },
    /// Re-issue the report of an audit directory.
    Report {
        dir: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ReportMode>,
        /// Model file, to refresh coverage figures from the ledger.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Move a finding through its lifecycle.
    Finding {
        /// Findings store (findings.jsonl).
        store: PathBuf,
        id: u64,
        #[arg(long = "to")]
        to: Status,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value_t = 1)]
        iteration: u32,
    },
}

#[derive(Subcommand)]
enum CoverageAction {
    /// Create a ledger bound to the model's current fingerprint.
    Init { ledger: PathBuf, model: PathBuf },
    /// Record a sign-off for every cell of a range.
    Sign {
        ledger: PathBuf,
        model: PathBuf,
        range: String,
        #[arg(long)]
        reviewer: String,
        #[arg(long, default_value = "low")]
        phase: String,
        /// Timestamp to record (RFC 3339); defaults to now.
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Per-sheet coverage.
    Status {
        ledger: PathBuf,
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn parse_mode(s: &str) -> Result<ReportMode, String> {
    s.parse()
}

struct Style {
    on: bool,
}

impl Style {
    fn detect() -> Self {
        Style { on: std::env::var_os("CELLSENTRY_NO_COLOR").is_none() && std::io::stdout().is_terminal() }
    }

    fn paint(&self, text: &str, code: &str) -> String {
        if self.on {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn severity(&self, s: Severity) -> String {
        match s {
            Severity::Error => self.paint("error", "31"),
            Severity::Warning => self.paint("warning", "33"),
            Severity::Info => self.paint("info", "36"),
        }
    }
}

type CmdResult = Result<u8, Box<dyn std::error::Error>>;

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

fn exit_for(failing: usize) -> u8 {
    u8::from(failing > 0)
}

fn parse_override(text: &str) -> Result<(String, Value), String> {
    let (target, raw) = text.split_once('=').ok_or_else(|| format!("`{text}`: expected TARGET=VALUE"))?;
    let raw = raw.trim();
    let value = if let Ok(n) = raw.parse::<f64>() {
        Value::number(n)
    } else if raw.eq_ignore_ascii_case("true") || raw.eq_ignore_ascii_case("false") {
        Value::Bool(raw.eq_ignore_ascii_case("true"))
    } else {
        Value::Text(raw.trim_matches('"').to_string())
    };
    Ok((target.trim().to_string(), value))
}

fn audit(
    model: &Path,
    cfg: &ConfigArgs,
    out: Option<PathBuf>,
    opts: AuditOptions,
    mode: Option<ReportMode>,
    json: bool,
) -> CmdResult {
    let mut config = cfg.load()?;
    if let Some(m) = mode {
        config.mode = m;
    }
    let out = out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("cellsentry-out"));
    let outcome = run_audit(model, &config, &out, &opts)?;
    if json {
        println!("{}", outcome.report.to_json());
    } else {
        let style = Style::detect();
        let m = &outcome.metrics;
        println!(
            "{}: {} cells, {} formulas, {} unique, ratio {}",
            outcome.fingerprint.file_name, m.total_cells, m.formula_cells, m.unique_formula_count, m.original_to_repeated_ratio
        );
        for f in outcome.findings.iter().filter(|f| f.status.is_unresolved()) {
            println!("#{} {} {} {}: {}", f.id, f.rule, style.severity(f.severity), f.loc.join(", "), f.msg);
        }
        if outcome.high_level_blocked {
            eprintln!("high-level checks not run: unresolved error findings (use --force)");
        }
        for a in outcome.assertions.iter().filter(|a| a.status != AssertionStatus::Pass) {
            println!("{} {:?}", a.code, a.status);
        }
        println!("findings: {}; artifacts in {}", outcome.findings.len(), out.display());
    }
    Ok(exit_for(outcome.failing_findings()))
}

fn map(model: &Path, sheet: Option<String>, clone: bool, json: bool, out: Option<PathBuf>) -> CmdResult {
    let (wb, _) = load_model(model)?;
    let mode = if clone { MapMode::Clone } else { MapMode::Type };
    let maps = match sheet {
        Some(s) => vec![render_cell_map(&wb, &s, mode)?],
        None => render_all_maps(&wb, mode),
    };
    let text = if json {
        serde_json::to_string_pretty(&maps)? + "\n"
    } else {
        maps.iter().map(|m| m.to_text()).collect::<Vec<_>>().join("\n")
    };
    match out {
        Some(p) => std::fs::write(&p, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn graph(model: &Path, edges: bool, cycles: bool, cell: Option<String>, precedents: bool, transitive: bool) -> CmdResult {
    let (wb, _) = load_model(model)?;
    let parsed = ParsedFormulas::parse(&wb);
    let g = DepGraph::build(&wb, &parsed);
    if let Some(c) = cell {
        let key = resolve_target(&wb, &c)?;
        let dir = if precedents { Direction::Precedents } else { Direction::Dependents };
        for k in g.query_links(key, dir, transitive) {
            println!("{}", g.label(k));
        }
        return Ok(0);
    }
    if cycles {
        let found = g.find_circularity();
        for c in &found {
            println!("{}", c.iter().map(|k| g.label(*k)).collect::<Vec<_>>().join(" "));
        }
        return Ok(exit_for(found.len()));
    }
    if edges {
        for line in g.edge_lines() {
            println!("{line}");
        }
        return Ok(0);
    }
    print_json(&compute_metrics_with(&wb, &g, &parsed, cellsentry::graph::DEFAULT_FORMULAS_PER_HOUR));
    Ok(0)
}

fn check_findings(model: &Path, config: &EngagementConfig) -> Result<Vec<Finding>, PipelineError> {
    let (wb, _) = load_model(model)?;
    let parsed = ParsedFormulas::parse(&wb);
    let g = DepGraph::build(&wb, &parsed);
    let result = recalculate_parsed(&wb, &parsed, &g);
    Ok(low_level_phase(&wb, &g, &parsed, &result, config))
}

fn check(model: &Path, cfg: &ConfigArgs) -> CmdResult {
    let config = cfg.load()?;
    let findings = check_findings(model, &config)?;
    for f in &findings {
        println!("{}", f.to_json_line());
    }
    eprintln!("{} finding(s)", findings.len());
    Ok(exit_for(count_failing(&findings, config.threshold)))
}

fn recalc(model: &Path, set: &[String], cells: &[String], tol: Option<f64>, cfg: &ConfigArgs) -> CmdResult {
    let mut config = cfg.load()?;
    if let Some(t) = tol {
        config.cache_tolerance = t;
    }
    let (mut wb, _) = load_model(model)?;
    if !set.is_empty() {
        let mut overrides = BTreeMap::new();
        for s in set {
            let (target, value) = parse_override(s)?;
            overrides.insert(resolve_target(&wb, &target)?, value);
        }
        wb = cellsentry::engine::apply_overrides(&wb, &overrides)?;
    }
    let parsed = ParsedFormulas::parse(&wb);
    let g = DepGraph::build(&wb, &parsed);
    let result = recalculate_parsed(&wb, &parsed, &g);
    let mismatches = if set.is_empty() {
        cellsentry::engine::verify_cached_values(&wb, &result, config.cache_tolerance)
    } else {
        vec![]
    };
    let values = if cells.is_empty() {
        result.to_json()
    } else {
        let mut picked = serde_json::Map::new();
        for c in cells {
            picked.insert(c.clone(), serde_json::to_value(result.lookup(&wb, c)?)?);
        }
        serde_json::json!({ "values": picked })
    };
    print_json(&serde_json::json!({ "result": values, "mismatches": mismatches }));
    Ok(exit_for(count_failing(&mismatches, config.threshold)))
}

fn sens(model: &Path, suite: &Path, out: Option<PathBuf>) -> CmdResult {
    let (wb, _) = load_model(model)?;
    let suite = load_suite(suite)?;
    let results = run_sensitivity_suite(&wb, &suite, out.as_deref())?;
    print_json(&results);
    Ok(exit_for(results.iter().filter(|r| !r.passed).count()))
}

fn hicheck(model: &Path, schema: &Path, tol: Option<f64>, force: bool, cfg: &ConfigArgs) -> CmdResult {
    let config = cfg.load()?;
    let findings = check_findings(model, &config)?;
    let blocking = blocking_findings(&findings);
    if blocking > 0 && !force {
        eprintln!("error: {}", PipelineError::Refused(blocking));
        return Ok(1);
    }
    let (wb, _) = load_model(model)?;
    let mut schema = load_schema(schema, &wb)?;
    if let Some(t) = tol {
        schema = schema.with_tolerance(t);
    }
    let parsed = ParsedFormulas::parse(&wb);
    let g = DepGraph::build(&wb, &parsed);
    let results = run_financial_assertions(&recalculate_parsed(&wb, &parsed, &g), &schema);
    print_json(&results);
    Ok(exit_for(results.iter().filter(|r| r.status == AssertionStatus::Fail).count()))
}

fn diff(old: &Path, new: &Path, scope: bool, verbose: bool, json: bool) -> CmdResult {
    let (a, _) = load_model(old)?;
    let (b, _) = load_model(new)?;
    let d = diff_workbooks(&a, &b, DiffOptions { verbose });
    let review = scope.then(|| {
        let g = cellsentry::graph::build_graph(&b);
        let s = rereview_scope(&d, &b, &g);
        let changed: Vec<String> = s.changed.iter().map(|k| g.label(*k)).collect();
        let impacted: Vec<String> = s.impacted.iter().map(|k| g.label(*k)).collect();
        (changed, impacted)
    });
    if json {
        let mut v = serde_json::json!({ "entries": d.entries });
        if let Some((changed, impacted)) = &review {
            v["scope"] = serde_json::json!({ "changed": changed, "impacted": impacted });
        }
        print_json(&v);
    } else {
        for e in &d.entries {
            println!("{e}");
        }
        if let Some((changed, impacted)) = &review {
            println!("re-review: {} changed, {} impacted", changed.len(), impacted.len());
            for c in changed.iter().chain(impacted) {
                println!("  {c}");
            }
        }
    }
    Ok(0)
}

fn coverage(action: CoverageAction) -> CmdResult {
    match action {
        CoverageAction::Init { ledger, model } => {
            if ledger.exists() {
                return Err(format!("{} already exists; ledgers are append-only", ledger.display()).into());
            }
            let (_, fp) = load_model(&model)?;
            CoverageLedger::create(&ledger, fp)?;
            Ok(0)
        }
        CoverageAction::Sign { ledger, model, range, reviewer, phase, at } => {
            let (wb, fp) = load_model(&model)?;
            let mut l = CoverageLedger::open(&ledger)?;
            let range: RangeRef = range.parse().map_err(|e| format!("`{range}`: {e}"))?;
            let n = l.record_signoff(&wb, &fp, &range, &reviewer, &phase, at.unwrap_or_else(Utc::now))?;
            eprintln!("{n} sign-off(s) recorded");
            Ok(0)
        }
        CoverageAction::Status { ledger, model, json } => {
            let (wb, fp) = load_model(&model)?;
            let st = coverage_status(&CoverageLedger::open(&ledger)?, &wb, &fp);
            if json {
                print_json(&st);
            } else {
                if st.stale {
                    println!("ledger was made for a different model version: coverage void");
                }
                for s in &st.sheets {
                    println!("{}. {}: {}/{} ({:.1}%)", s.index, s.sheet, s.signed, s.total, s.ratio * 100.0);
                }
            }
            Ok(0)
        }
    }
}

fn finding(store: &Path, id: u64, to: Status, note: &str, iteration: u32) -> CmdResult {
    let mut s = FindingStore::load(store)?;
    let f = s.manage_finding(id, to, note, iteration)?;
    println!("{}", f.to_json_line());
    s.save(store)?;
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Audit { model, cfg, out, force, tol, mode, no_sens, json } => {
            let opts = AuditOptions { force, skip_sensitivity: no_sens, tolerance: tol, now: Utc::now() };
            audit(&model, &cfg, out, opts, mode, json)
        }
        Command::Map { model, sheet, clone, json, out } => map(&model, sheet, clone, json, out),
        Command::Graph { model, edges, cycles, cell, precedents, transitive } => {
            graph(&model, edges, cycles, cell, precedents, transitive)
        }
        Command::Check { model, cfg } => check(&model, &cfg),
        Command::Recalc { model, set, cells, tol, cfg } => recalc(&model, &set, &cells, tol, &cfg),
        Command::Sens { model, suite, out } => sens(&model, &suite, out),
        Command::Hicheck { model, schema, tol, force, cfg } => hicheck(&model, &schema, tol, force, &cfg),
        Command::Diff { old, new, scope, verbose, json } => diff(&old, &new, scope, verbose, json),
        Command::Coverage { action } => coverage(action),
        Command::Report { dir, mode, model, json } => {
            let report = refresh_report(&dir, mode, model.as_deref(), Utc::now())?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(0)
        }
        Command::Finding { store, id, to, note, iteration } => finding(&store, id, to, &note, iteration),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    std::panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(3),
    }
}
