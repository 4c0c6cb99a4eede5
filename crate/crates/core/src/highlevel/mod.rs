//! Financial integrity assertions over recalculated values, driven by a
//! schema that binds accounting roles to period-aligned ranges.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RecalcResult, Value};
use crate::graph::CellKey;
use crate::lowlevel::{Finding, Severity};
use crate::model::{Coord, RangeRef, Workbook};

pub const DEFAULT_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    TotalAssets,
    TotalLiabilities,
    Equity,
    RetainedEarnings,
    NetIncome,
    Dividends,
    DebtBalance,
    DebtFinalPeriod,
    FixedAssetNbv,
    Revenue,
    Costs,
    Production,
    TaxCharge,
}

impl Role {
    pub const ALL: [Role; 13] = [
        Role::TotalAssets,
        Role::TotalLiabilities,
        Role::Equity,
        Role::RetainedEarnings,
        Role::NetIncome,
        Role::Dividends,
        Role::DebtBalance,
        Role::DebtFinalPeriod,
        Role::FixedAssetNbv,
        Role::Revenue,
        Role::Costs,
        Role::Production,
        Role::TaxCharge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::TotalAssets => "total_assets",
            Role::TotalLiabilities => "total_liabilities",
            Role::Equity => "equity",
            Role::RetainedEarnings => "retained_earnings",
            Role::NetIncome => "net_income",
            Role::Dividends => "dividends",
            Role::DebtBalance => "debt_balance",
            Role::DebtFinalPeriod => "debt_final_period",
            Role::FixedAssetNbv => "fixed_asset_nbv",
            Role::Revenue => "revenue",
            Role::Costs => "costs",
            Role::Production => "production",
            Role::TaxCharge => "tax_charge",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Role::ALL.into_iter().find(|r| r.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema format error at {path}: {message}")]
    Format { path: String, message: String },
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("{what}: `{text}` does not resolve to a range in the workbook")]
    Unresolved { what: String, text: String },
    #[error("{what}: `{text}` must be a single row or column")]
    NotVector { what: String, text: String },
    #[error("role `{role}` covers {got} cells but the period axis has {expected}")]
    LengthMismatch { role: Role, expected: usize, got: usize },
    #[error("tolerance must be a finite non-negative number")]
    Tolerance,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    period_axis: String,
    tolerance: Option<f64>,
    #[serde(default)]
    roles: BTreeMap<String, String>,
}

/// Period-aligned role bindings. Each bound range is a row or column with
/// one cell per period.
#[derive(Debug, Clone, PartialEq)]
pub struct FinancialSchema {
    pub period_axis: RangeRef,
    pub periods: usize,
    pub tolerance: f64,
    pub roles: BTreeMap<Role, RangeRef>,
    sheets: BTreeMap<Role, usize>,
}

fn vector(wb: &Workbook, what: &str, text: &str) -> Result<(RangeRef, usize), SchemaError> {
    let unresolved = || SchemaError::Unresolved { what: what.to_string(), text: text.to_string() };
    let range: RangeRef = match text.parse::<RangeRef>() {
        Ok(r) if r.sheet().is_some() => r,
        _ => wb.resolve_name(text).map_err(|_| unresolved())?,
    };
    let sheet = range.sheet().and_then(|s| wb.sheet_index(s)).ok_or_else(unresolved)?;
    if range.width() != 1 && range.height() != 1 {
        return Err(SchemaError::NotVector { what: what.to_string(), text: text.to_string() });
    }
    let canonical = range.with_sheet(Some(wb.sheets()[sheet].name().to_string()));
    Ok((canonical, sheet))
}

impl FinancialSchema {
    pub fn from_json(text: &str, wb: &Workbook) -> Result<Self, SchemaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawSchema = serde_path_to_error::deserialize(de)
            .map_err(|e| SchemaError::Format { path: e.path().to_string(), message: e.into_inner().to_string() })?;
        let tolerance = raw.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !tolerance.is_finite() || tolerance < 0.0 {
            return Err(SchemaError::Tolerance);
        }
        let (period_axis, _) = vector(wb, "period_axis", &raw.period_axis)?;
        let periods = period_axis.area() as usize;
        let mut roles = BTreeMap::new();
        let mut sheets = BTreeMap::new();
        for (key, text) in &raw.roles {
            let role: Role = key.parse().map_err(|_| SchemaError::UnknownRole(key.clone()))?;
            let (range, sheet) = vector(wb, key, text)?;
            let got = range.area() as usize;
            if got != periods {
                return Err(SchemaError::LengthMismatch { role, expected: periods, got });
            }
            roles.insert(role, range);
            sheets.insert(role, sheet);
        }
        Ok(FinancialSchema { period_axis, periods, tolerance, roles, sheets })
    }

    /// Position of `role` in period `t` (0-based).
    pub fn cell(&self, role: Role, t: usize) -> Option<CellKey> {
        let r = self.roles.get(&role)?;
        let coord = if r.height() == 1 {
            Coord::new(r.start.col + t as u32, r.start.row)
        } else {
            Coord::new(r.start.col, r.start.row + t as u32)
        };
        Some(CellKey { sheet: self.sheets[&role], coord })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

pub fn load_schema(path: &Path, wb: &Workbook) -> Result<FinancialSchema, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io { path: path.into(), source })?;
    FinancialSchema::from_json(&text, wb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionStatus {
    Pass,
    Fail,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionResult {
    pub code: &'static str,
    pub title: &'static str,
    pub status: AssertionStatus,
    pub severity: Severity,
    /// 1-based period numbers.
    pub failing_periods: Vec<usize>,
    pub worst_deviation: f64,
    /// Roles that were needed but not bound (for not-run assertions).
    pub missing_roles: Vec<String>,
    /// Roles whose cells locate a failure.
    #[serde(skip)]
    roles: Vec<Role>,
}

impl AssertionResult {
    pub fn passed(&self) -> bool {
        self.status == AssertionStatus::Pass
    }
}

pub const ASSERTIONS: [(&str, &str, Severity); 6] = [
    ("H001", "balance sheet balances", Severity::Error),
    ("H002", "retained earnings roll forward from profit", Severity::Error),
    ("H003", "debt fully repaid by the final period", Severity::Error),
    ("H004", "fixed assets never depreciate below zero", Severity::Error),
    ("H005", "no revenue or costs without production", Severity::Error),
    ("H006", "tax charge sign matches pre-tax income", Severity::Warning),
];

struct Series<'a> {
    schema: &'a FinancialSchema,
    result: &'a RecalcResult,
}

impl Series<'_> {
    /// Numeric value of a role in period `t`; blanks read 0, anything else
    /// non-numeric is `None`.
    fn at(&self, role: Role, t: usize) -> Option<f64> {
        match self.result.value(&self.schema.cell(role, t)?) {
            Value::Number(n) => Some(n),
            Value::Blank => Some(0.0),
            _ => None,
        }
    }
}

fn outcome(
    index: usize,
    roles: Vec<Role>,
    deviations: impl IntoIterator<Item = (usize, Option<f64>)>,
    tol: f64,
) -> AssertionResult {
    let (code, title, severity) = ASSERTIONS[index];
    let mut failing = Vec::new();
    let mut worst: f64 = 0.0;
    for (t, d) in deviations {
        match d {
            Some(d) => {
                worst = worst.max(d);
                if d > tol {
                    failing.push(t + 1);
                }
            }
            // a non-numeric value can never satisfy the check
            None => failing.push(t + 1),
        }
    }
    let status = if failing.is_empty() { AssertionStatus::Pass } else { AssertionStatus::Fail };
    AssertionResult { code, title, status, severity, failing_periods: failing, worst_deviation: worst, missing_roles: vec![], roles }
}

fn not_run(index: usize, missing: Vec<Role>) -> AssertionResult {
    let (code, title, severity) = ASSERTIONS[index];
    AssertionResult {
        code,
        title,
        status: AssertionStatus::NotRun,
        severity,
        failing_periods: vec![],
        worst_deviation: 0.0,
        missing_roles: missing.iter().map(|r| r.to_string()).collect(),
        roles: vec![],
    }
}

/// H001-H006 against recalculated values. Assertions whose roles are not
/// bound come back as not-run.
pub fn run_financial_assertions(result: &RecalcResult, schema: &FinancialSchema) -> Vec<AssertionResult> {
    let s = Series { schema, result };
    let tol = schema.tolerance;
    let n = schema.periods;
    let bound = |r: Role| schema.roles.contains_key(&r);
    let missing = |need: &[Role]| need.iter().copied().filter(|r| !bound(*r)).collect::<Vec<_>>();
    let mut out = Vec::new();

    use Role::*;
    let need = [TotalAssets, TotalLiabilities, Equity];
    out.push(if missing(&need).is_empty() {
        let devs = (0..n).map(|t| Some((s.at(TotalAssets, t)? - s.at(TotalLiabilities, t)? - s.at(Equity, t)?).abs()));
        outcome(0, need.to_vec(), devs.enumerate(), tol)
    } else {
        not_run(0, missing(&need))
    });

    let need = [RetainedEarnings, NetIncome];
    out.push(if missing(&need).is_empty() {
        let div = |t| if bound(Dividends) { s.at(Dividends, t) } else { Some(0.0) };
        let devs = (1..n).map(|t| {
            let expected = s.at(RetainedEarnings, t - 1)? + s.at(NetIncome, t)? - div(t)?;
            Some((t, (s.at(RetainedEarnings, t)? - expected).abs()))
        });
        let devs: Vec<(usize, Option<f64>)> =
            devs.zip(1..n).map(|(d, t)| (t, d.map(|(_, v)| v))).collect();
        let mut roles = vec![RetainedEarnings, NetIncome];
        if bound(Dividends) {
            roles.push(Dividends);
        }
        outcome(1, roles, devs, tol)
    } else {
        not_run(1, missing(&need))
    });

    let need = [DebtBalance];
    out.push(if missing(&need).is_empty() && n > 0 {
        let flagged = if bound(DebtFinalPeriod) {
            (0..n).find(|&t| s.at(DebtFinalPeriod, t).is_some_and(|v| v != 0.0))
        } else {
            None
        };
        let last = flagged.unwrap_or(n - 1);
        outcome(2, need.to_vec(), [(last, s.at(DebtBalance, last).map(f64::abs))], tol)
    } else {
        not_run(2, missing(&need))
    });

    let need = [FixedAssetNbv];
    out.push(if missing(&need).is_empty() {
        let devs = (0..n).map(|t| s.at(FixedAssetNbv, t).map(|v| (-v).max(0.0)));
        outcome(3, need.to_vec(), devs.enumerate(), tol)
    } else {
        not_run(3, missing(&need))
    });

    let linked: Vec<Role> = [Revenue, Costs].into_iter().filter(|r| bound(*r)).collect();
    out.push(if bound(Production) && !linked.is_empty() {
        let devs = (0..n).map(|t| {
            let production = s.at(Production, t);
            match production {
                Some(p) if p.abs() <= tol => linked
                    .iter()
                    .map(|r| s.at(*r, t).map(f64::abs))
                    .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v))),
                Some(_) => Some(0.0),
                None => None,
            }
        });
        let mut roles = vec![Production];
        roles.extend(&linked);
        outcome(4, roles, devs.enumerate(), tol)
    } else {
        let mut m = missing(&[Production]);
        if linked.is_empty() {
            m.extend([Revenue, Costs]);
        }
        not_run(4, m)
    });

    let need = [TaxCharge, NetIncome];
    out.push(if missing(&need).is_empty() {
        let devs = (0..n).map(|t| {
            let tax = s.at(TaxCharge, t)?;
            let pbt = s.at(NetIncome, t)? + tax;
            let inconsistent = (tax > tol && pbt < -tol) || (tax < -tol && pbt > tol);
            Some(if inconsistent { tax.abs() } else { 0.0 })
        });
        outcome(5, need.to_vec(), devs.enumerate(), tol)
    } else {
        not_run(5, missing(&need))
    });
    out
}

/// One finding per failed assertion, located at the bound cells of every
/// failing period. Ids start at `first_id`.
pub fn assertion_findings(
    results: &[AssertionResult],
    schema: &FinancialSchema,
    wb: &Workbook,
    first_id: u64,
) -> Vec<Finding> {
    let mut out = Vec::new();
    for r in results.iter().filter(|r| r.status == AssertionStatus::Fail) {
        let mut loc = Vec::new();
        for &p in &r.failing_periods {
            for role in &r.roles {
                if let Some(k) = schema.cell(*role, p - 1) {
                    let label = wb.cell_label(k.sheet, k.coord);
                    if !loc.contains(&label) {
                        loc.push(label);
                    }
                }
            }
        }
        let periods: Vec<String> = r.failing_periods.iter().map(|p| p.to_string()).collect();
        let mut f = Finding::new(
            r.code,
            r.severity,
            loc,
            format!(
                "{} fails in period(s) {}; worst deviation {}",
                r.title,
                periods.join(", "),
                crate::formula::format_number(r.worst_deviation)
            ),
        );
        f.id = first_id + out.len() as u64;
        out.push(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::recalculate;
    use crate::model::workbook_from_json;

    /// Rows: 1 periods, 2 assets, 3 liabilities, 4 equity, 5 debt, 6 nbv.
    fn model(equity: [f64; 3], debt_end: f64) -> Workbook {
        let mut cells = Vec::new();
        for (i, col) in ["B", "C", "D"].iter().enumerate() {
            cells.push(format!(r#""{col}1":{{"v":{}}}"#, i + 1));
            cells.push(format!(r#""{col}2":{{"v":100}}"#));
            cells.push(format!(r#""{col}3":{{"v":60}}"#));
            cells.push(format!(r#""{col}4":{{"v":{}}}"#, equity[i]));
            let debt = if i == 2 { debt_end } else { 50.0 };
            cells.push(format!(r#""{col}5":{{"v":{debt}}}"#));
            cells.push(format!(r#""{col}6":{{"f":"=10-{col}1*3"}}"#));
        }
        workbook_from_json(&format!(r#"{{"sheets":[{{"name":"Fin","cells":{{{}}}}}]}}"#, cells.join(","))).unwrap()
    }

    const SCHEMA: &str = r#"{"period_axis":"Fin!B1:D1","roles":{"total_assets":"Fin!B2:D2","total_liabilities":"Fin!B3:D3","equity":"Fin!B4:D4","debt_balance":"Fin!B5:D5","fixed_asset_nbv":"Fin!B6:D6"}}"#;

    fn run(wb: &Workbook) -> Vec<AssertionResult> {
        let schema = FinancialSchema::from_json(SCHEMA, wb).unwrap();
        run_financial_assertions(&recalculate(wb, &BTreeMap::new()).unwrap(), &schema)
    }

    #[test]
    fn balanced_model() {
        let r = run(&model([40.0; 3], 0.004));
        assert!(r[0].passed());
        assert!(r[2].passed(), "{:?}", r[2]);
        assert_eq!(r[1].status, AssertionStatus::NotRun);
        assert_eq!(r[4].status, AssertionStatus::NotRun);
        // nbv goes 7, 4, 1: never negative
        assert!(r[3].passed());
    }

    #[test]
    fn imbalance_and_debt() {
        let wb = model([40.0, 40.0, 39.0], 0.02);
        let r = run(&wb);
        assert_eq!(r[0].failing_periods, vec![3]);
        assert_eq!(r[0].worst_deviation, 1.0);
        assert_eq!(r[2].status, AssertionStatus::Fail);
        let schema = FinancialSchema::from_json(SCHEMA, &wb).unwrap();
        let f = assertion_findings(&r, &schema, &wb, 10);
        assert_eq!(f[0].rule, "H001");
        assert_eq!(f[0].id, 10);
        assert_eq!(f[0].loc, vec!["Fin!D2", "Fin!D3", "Fin!D4"]);
    }

    #[test]
    fn schema_errors() {
        let wb = model([40.0; 3], 0.0);
        let short = r#"{"period_axis":"Fin!B1:D1","roles":{"equity":"Fin!B4:C4"}}"#;
        assert!(matches!(FinancialSchema::from_json(short, &wb), Err(SchemaError::LengthMismatch { .. })));
        let typo = r#"{"period_axis":"Fin!B1:D1","roles":{"goodwilll":"Fin!B4:D4"}}"#;
        assert!(matches!(FinancialSchema::from_json(typo, &wb), Err(SchemaError::UnknownRole(_))));
        let missing = r#"{"period_axis":"Nope!B1:D1"}"#;
        assert!(matches!(FinancialSchema::from_json(missing, &wb), Err(SchemaError::Unresolved { .. })));
        let ok = FinancialSchema::from_json(r#"{"period_axis":"Fin!B1:D1","roles":{"equity":"Fin!B4:D4"}}"#, &wb).unwrap();
        assert_eq!(ok.periods, 3);
        assert_eq!(ok.tolerance, DEFAULT_TOLERANCE);
    }

    #[test]
    fn retained_earnings_and_production() {
        let wb = workbook_from_json(
            r#"{"sheets":[{"name":"F","cells":{
                "A1":{"v":1},"B1":{"v":2},"C1":{"v":3},
                "A2":{"v":10},"B2":{"v":15},"C2":{"v":19},
                "A3":{"v":10},"B3":{"v":5},"C3":{"v":5},
                "A4":{"v":5},"B4":{"v":0},"C4":{"v":0},
                "A5":{"v":50},"B5":{"v":0},"C5":{"v":0},
                "A6":{"v":50},"B6":{"v":0},"C6":{"v":7},
                "A7":{"v":-2},"B7":{"v":1},"C7":{"v":0}}}]}"#,
        )
        .unwrap();
        let schema = FinancialSchema::from_json(
            r#"{"period_axis":"F!A1:C1","roles":{"retained_earnings":"F!A2:C2","net_income":"F!A3:C3",
                "production":"F!A4:C4","revenue":"F!A5:C5","costs":"F!A6:C6","tax_charge":"F!A7:C7"}}"#,
            &wb,
        )
        .unwrap();
        let r = run_financial_assertions(&recalculate(&wb, &BTreeMap::new()).unwrap(), &schema);
        // RE: 10 -> 15 ok, 15 + 5 = 20 but 19 reported
        assert_eq!(r[1].failing_periods, vec![3]);
        assert_eq!(r[4].failing_periods, vec![3]);
        assert_eq!(r[4].worst_deviation, 7.0);
        // period 1: tax -2 with pre-tax 8
        assert_eq!(r[5].failing_periods, vec![1]);
        assert_eq!(r[5].severity, Severity::Warning);
    }
}
