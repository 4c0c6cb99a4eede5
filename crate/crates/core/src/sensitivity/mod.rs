//! Scenario suites: named sets of input overrides, each recalculated in
//! isolation with watched outputs, optional expected ranges and a saved copy
//! of the changed model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{apply_overrides, recalculate_parsed, resolve_target, EngineError, Value};
use crate::graph::{CellKey, DepGraph, ParsedFormulas};
use crate::model::{workbook_to_json, Workbook};

pub const BASE_CASE: &str = "(base)";

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("cannot read suite {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("suite format error at {path}: {message}")]
    Format { path: String, message: String },
    #[error("the suite has no scenarios")]
    Empty,
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
    #[error("scenario `{scenario}`: {source}")]
    Target {
        scenario: String,
        #[source]
        source: EngineError,
    },
    #[error("scenario `{scenario}`: unsupported value for `{target}` (use a number, string or bool)")]
    BadValue { scenario: String, target: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Target (`Sheet!B2` or a single-cell name) to literal value.
    #[serde(default)]
    pub set: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub watch: Vec<String>,
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub scenarios: Vec<Scenario>,
}

pub fn suite_from_json(text: &str) -> Result<Suite, SensitivityError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| SensitivityError::Format {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

pub fn load_suite(path: &Path) -> Result<Suite, SensitivityError> {
    let text = std::fs::read_to_string(path).map_err(|source| SensitivityError::Io { path: path.into(), source })?;
    suite_from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WatchedValue {
    pub target: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationResult {
    pub target: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub value: Value,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub overrides: Vec<WatchedValue>,
    pub outputs: Vec<WatchedValue>,
    /// Formula cells that evaluated to an error value.
    pub error_cells: Vec<String>,
    pub expectations: Vec<ExpectationResult>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saved: Option<PathBuf>,
}

/// A scenario with every target resolved.
struct Resolved {
    scenario: Scenario,
    overrides: BTreeMap<CellKey, Value>,
    watch: Vec<(String, CellKey)>,
    expect: Vec<(String, CellKey, Expectation)>,
}

fn resolve(wb: &Workbook, scenario: &Scenario) -> Result<Resolved, SensitivityError> {
    let err = |source| SensitivityError::Target { scenario: scenario.name.clone(), source };
    let mut overrides = BTreeMap::new();
    for (target, raw) in &scenario.set {
        let key = resolve_target(wb, target).map_err(err)?;
        let value = match Value::from_json(raw) {
            Some(v @ (Value::Number(_) | Value::Text(_) | Value::Bool(_))) => v,
            _ => return Err(SensitivityError::BadValue { scenario: scenario.name.clone(), target: target.clone() }),
        };
        if wb.cell(key.sheet, key.coord).is_some_and(|c| c.is_formula()) {
            return Err(err(EngineError::OverrideFormula(target.clone())));
        }
        overrides.insert(key, value);
    }
    let watch = scenario
        .watch
        .iter()
        .map(|t| resolve_target(wb, t).map(|k| (t.clone(), k)))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let expect = scenario
        .expect
        .iter()
        .map(|(t, e)| resolve_target(wb, t).map(|k| (t.clone(), k, *e)))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    Ok(Resolved { scenario: scenario.clone(), overrides, watch, expect })
}

fn execute(wb: &Workbook, r: &Resolved) -> Result<(ScenarioResult, Workbook), SensitivityError> {
    let patched = apply_overrides(wb, &r.overrides)
        .map_err(|source| SensitivityError::Target { scenario: r.scenario.name.clone(), source })?;
    let parsed = ParsedFormulas::parse(&patched);
    let graph = DepGraph::build(&patched, &parsed);
    let result = recalculate_parsed(&patched, &parsed, &graph);
    let expectations: Vec<ExpectationResult> = r
        .expect
        .iter()
        .map(|(target, key, e)| {
            let value = result.value(key);
            let pass = value.as_number().is_some_and(|v| e.min.is_none_or(|m| v >= m) && e.max.is_none_or(|m| v <= m));
            ExpectationResult { target: target.clone(), min: e.min, max: e.max, value, pass }
        })
        .collect();
    let out = ScenarioResult {
        name: r.scenario.name.clone(),
        overrides: r
            .scenario
            .set
            .keys()
            .map(|t| WatchedValue { target: t.clone(), value: Value::from_json(&r.scenario.set[t]).expect("validated") })
            .collect(),
        outputs: r.watch.iter().map(|(t, k)| WatchedValue { target: t.clone(), value: result.value(k) }).collect(),
        error_cells: result.cells_in_error.iter().chain(&result.cycle_cells).map(|k| result.label(*k)).collect(),
        passed: expectations.iter().all(|e| e.pass),
        expectations,
        saved: None,
    };
    // saved copy carries the recalculated results as cached values
    let mut builder = patched.to_builder();
    for key in parsed.cells.keys() {
        let mut cell = patched.cell(key.sheet, key.coord).expect("formula cell").clone();
        cell.cached = result.value(key).to_literal();
        builder.set_cell(key.sheet, key.coord, cell).expect("existing position");
    }
    Ok((out, builder.build().expect("patched workbook is valid")))
}

/// Runs one scenario without saving anything.
pub fn run_scenario(wb: &Workbook, scenario: &Scenario) -> Result<ScenarioResult, SensitivityError> {
    Ok(execute(wb, &resolve(wb, scenario)?)?.0)
}

fn file_stem(index: usize, name: &str) -> String {
    let safe: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{:02}_{safe}", index + 1)
}

/// Validates the whole suite, then runs the base case followed by every
/// scenario (in parallel, results in file order). With `out_dir`, each
/// scenario's changed model is written to `out_dir/NN_name.json`.
pub fn run_sensitivity_suite(
    wb: &Workbook,
    suite: &Suite,
    out_dir: Option<&Path>,
) -> Result<Vec<ScenarioResult>, SensitivityError> {
    if suite.scenarios.is_empty() {
        return Err(SensitivityError::Empty);
    }
    let mut seen = BTreeSet::new();
    for s in &suite.scenarios {
        if s.name == BASE_CASE || !seen.insert(s.name.as_str()) {
            return Err(SensitivityError::DuplicateName(s.name.clone()));
        }
    }
    let mut watch_all: Vec<String> = Vec::new();
    for t in suite.scenarios.iter().flat_map(|s| &s.watch) {
        if !watch_all.contains(t) {
            watch_all.push(t.clone());
        }
    }
    let base = Scenario { name: BASE_CASE.to_string(), set: BTreeMap::new(), watch: watch_all, expect: BTreeMap::new() };
    let mut resolved = vec![resolve(wb, &base)?];
    for s in &suite.scenarios {
        resolved.push(resolve(wb, s)?);
    }

    let runs: Vec<(ScenarioResult, Workbook)> =
        resolved.par_iter().map(|r| execute(wb, r)).collect::<Result<_, _>>()?;

    let mut results = Vec::with_capacity(runs.len());
    for (i, (mut result, copy)) in runs.into_iter().enumerate() {
        if let (Some(dir), true) = (out_dir, i > 0) {
            std::fs::create_dir_all(dir).map_err(|source| SensitivityError::Write { path: dir.into(), source })?;
            let path = dir.join(format!("{}.json", file_stem(i - 1, &result.name)));
            std::fs::write(&path, workbook_to_json(&copy))
                .map_err(|source| SensitivityError::Write { path: path.clone(), source })?;
            result.saved = Some(path);
        }
        results.push(result);
    }
    Ok(results)
}
