//! Acceptance run: one pass/fail line per criterion, non-zero exit if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cellsentry::diff::{diff_workbooks, rereview_scope, DiffOptions};
use cellsentry::engine::{recalculate, resolve_target, Value};
use cellsentry::formula::{parse_formula, render_a1};
use cellsentry::graph::{build_graph, compute_metrics, CellKey, OriginalToRepeated};
use cellsentry::highlevel::{load_schema, run_financial_assertions};
use cellsentry::model::{fingerprint_model, load_workbook, workbook_to_json, Cell, CellContent, Coord, Workbook};
use cellsentry::papertrail::{CoverageLedger, PaperError};
use cellsentry::pipeline::{run_audit, AuditOptions, EngagementConfig};
use cellsentry::sensitivity::{load_suite, run_scenario, run_sensitivity_suite, Scenario};
use chrono::Utc;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("AC1", "scale anchor", ac1_scale),
        ("AC2", "seeded-defect recall", ac2_recall),
        ("AC3", "parser round-trip", ac3_round_trip),
        ("AC4", "evaluator oracle equivalence", ac4_oracle),
        ("AC5", "circularity", ac5_circularity),
        ("AC6", "clone metrics", ac6_clones),
        ("AC7", "diff and re-review scope", ac7_rereview),
        ("AC8", "sensitivity determinism and isolation", ac8_sensitivity),
        ("AC9", "high-level assertions", ac9_assertions),
        ("AC10", "paper-trail integrity", ac10_paper_trail),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, title, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {detail}");
            }
        }
    }
    let _ = std::panic::take_hook();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn addr(col: u32, row: u32) -> String {
    Coord::new(col, row).to_string()
}

fn ac1_scale() -> Outcome {
    const ROWS: u32 = 10_000;
    let mut b = Workbook::builder().sheet("Data");
    for row in 1..=ROWS {
        b = b
            .cell(&addr(1, row), Cell::number(f64::from(row)))
            .cell(&addr(2, row), Cell::number(f64::from(row % 97) / 10.0))
            .cell(&addr(3, row), Cell::number(f64::from(row % 13)));
        // the absolute anchor makes every formula its own unique form
        let chain = if row > 1 { format!("+D{}", row - 1) } else { String::new() };
        b = b.cell(&addr(4, row), Cell::formula(format!("=$A${row}*B{row}+C{row}{chain}")));
    }
    let wb = b.build().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("synthetic.json");
    std::fs::write(&model, workbook_to_json(&wb)).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let opts = AuditOptions { skip_sensitivity: true, ..Default::default() };
    let outcome = run_audit(&model, &EngagementConfig::default(), &dir.path().join("out"), &opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let m = &outcome.metrics;
    ensure!(m.total_cells == 40_000, "total cells {}", m.total_cells);
    ensure!(m.unique_formula_count == 10_000, "unique formulas {}", m.unique_formula_count);
    ensure!(secs < 60.0, "audit took {secs:.1}s");
    Ok(format!("40000 cells, 10000 unique formulas, audit in {secs:.2}s"))
}

const SEEDED: [(&str, &str); 18] = [
    ("R010", "CapexBlock"),
    ("R011", "Spare"),
    ("R012", "OldRate"),
    ("R013", "title_cell"),
    ("R020", "Inputs!B17"),
    ("R021", "Calc!B36"),
    ("R022", "Calc!B38"),
    ("R023", "Calc!B40"),
    ("R024", "Calc!B42"),
    ("R025", "Calc!B44"),
    ("R026", "Calc!F6"),
    ("R030", "Calc!E11"),
    ("R040", "Calc!B33"),
    ("H001", "Calc!E23"),
    ("H002", "Calc!D19"),
    ("H003", "Calc!G17"),
    ("H004", "Calc!F9"),
    ("H005", "Calc!G4"),
];

fn corpus_audit(model: &str, force: bool) -> Result<cellsentry::pipeline::AuditOutcome, String> {
    let config = EngagementConfig::load(&common::corpus("engagement.json")).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = AuditOptions { force, skip_sensitivity: true, ..Default::default() };
    run_audit(&common::corpus(model), &config, out.path(), &opts).map_err(|e| e.to_string())
}

fn ac2_recall() -> Outcome {
    let seeded = corpus_audit("seeded_model.json", true)?;
    let mut missed = Vec::new();
    for (rule, loc) in SEEDED {
        let hit = seeded.findings.iter().any(|f| f.rule == rule && f.loc.iter().any(|l| l == loc));
        if !hit {
            missed.push(format!("{rule}@{loc}"));
        }
    }
    ensure!(missed.is_empty(), "missed {missed:?}");
    let clean = corpus_audit("clean_model.json", false)?;
    ensure!(clean.findings.is_empty(), "clean model has {} finding(s)", clean.findings.len());
    Ok(format!("{}/{} seeded defects found, 0 findings on the clean model", SEEDED.len(), SEEDED.len()))
}

fn ac3_round_trip() -> Outcome {
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]));
    let strategy = common::expr();
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let tree = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?;
        let source = render_a1(&tree.current());
        let first = match parse_formula(&source) {
            Ok(ast) => ast,
            Err(e) => {
                failures.push(format!("{source}: {e}"));
                continue;
            }
        };
        let again = parse_formula(&render_a1(&first));
        if again.as_ref().ok() != Some(&first) {
            failures.push(source);
        }
    }
    ensure!(failures.is_empty(), "{} failure(s), first {:?}", failures.len(), failures.first());
    Ok("1000 formulas, 0 failures".into())
}

/// Three-year loan-funded project on one sheet, 20 cells.
fn toy_model() -> Workbook {
    let mut b = Workbook::builder()
        .sheet("Loan")
        .cell("B1", Cell::number(1000.0))
        .cell("B2", Cell::number(0.06))
        .cell("B3", Cell::number(0.05))
        .cell("B4", Cell::number(0.10))
        .cell("B6", Cell::number(3.0))
        .cell("C7", Cell::number(800.0))
        .cell("D7", Cell::formula("=C7*(1+$B$3)"))
        .cell("E7", Cell::formula("=D7*(1+$B$3)"))
        .cell("C8", Cell::formula("=$B$1"));
    for (c, p) in [("D", "C"), ("E", "D")] {
        b = b.cell(&format!("{c}8"), Cell::formula(format!("={p}8-$B$1/$B$6")));
    }
    for c in ["C", "D", "E"] {
        b = b
            .cell(&format!("{c}9"), Cell::formula(format!("={c}8*$B$2")))
            .cell(&format!("{c}10"), Cell::formula(format!("={c}7-{c}9-$B$1/$B$6")));
    }
    b.cell("B10", Cell::formula("=-$B$1"))
        .cell("B11", Cell::formula("=B10+NPV($B$4,C10:E10)"))
        .cell("B12", Cell::formula("=IRR(B10:E10)"))
        .build()
        .expect("toy model is valid")
}

fn bisect_irr(flows: &[f64]) -> f64 {
    let npv = |r: f64| flows.iter().enumerate().map(|(t, cf)| cf / (1.0 + r).powi(t as i32)).sum::<f64>();
    let (mut lo, mut hi) = (-0.99, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (npv(lo) > 0.0) == (npv(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ac4_oracle() -> Outcome {
    // straight-line evaluation, no graph
    let (p, r, g, d, n) = (1000.0f64, 0.06f64, 0.05f64, 0.10f64, 3.0f64);
    let mut want: BTreeMap<&str, f64> = BTreeMap::new();
    want.insert("B1", p);
    want.insert("B2", r);
    want.insert("B3", g);
    want.insert("B4", d);
    want.insert("B6", n);
    let rev = [800.0, 800.0 * (1.0 + g), 800.0 * (1.0 + g) * (1.0 + g)];
    let opening = [p, p - p / n, p - p / n - p / n];
    let cols = ["C", "D", "E"];
    let mut names = Vec::new();
    let mut flows = vec![-p];
    for t in 0..3 {
        let interest = opening[t] * r;
        let cf = rev[t] - interest - p / n;
        names.push((format!("{}7", cols[t]), rev[t]));
        names.push((format!("{}8", cols[t]), opening[t]));
        names.push((format!("{}9", cols[t]), interest));
        names.push((format!("{}10", cols[t]), cf));
        flows.push(cf);
    }
    let npv = -p + flows[1..].iter().enumerate().map(|(t, cf)| cf / (1.0 + d).powi(t as i32 + 1)).sum::<f64>();
    let irr = bisect_irr(&flows);

    let wb = toy_model();
    ensure!(wb.cell_count() == 20, "toy model has {} cells", wb.cell_count());
    let result = recalculate(&wb, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let got = |a: &str| match result.value(&CellKey { sheet: 0, coord: Coord::parse_a1(a).unwrap() }) {
        Value::Number(x) => Ok(x),
        other => Err(format!("{a} evaluated to {other}")),
    };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (a, v) in want.iter().map(|(a, v)| (a.to_string(), *v)).chain(names).chain([("B10".to_string(), -p)]) {
        let diff = (got(&a)? - v).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-9, "{a}: {} vs oracle {v}", got(&a)?);
        checked += 1;
    }
    let npv_diff = (got("B11")? - npv).abs();
    ensure!(npv_diff <= 1e-9, "NPV {} vs oracle {npv}", got("B11")?);
    let irr_diff = (got("B12")? - irr).abs();
    ensure!(irr_diff <= 1e-7, "IRR {} vs bisection {irr}", got("B12")?);
    Ok(format!(
        "{} cells within {worst:.1e}, NPV within {npv_diff:.1e}, IRR within {irr_diff:.1e}",
        checked + 2
    ))
}

fn node_addr(i: usize) -> String {
    addr((i % 20) as u32 + 1, (i / 20) as u32 + 1)
}

fn ac5_circularity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut with_cycles = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=200usize);
        let density = 0.0005 + 0.03 * (case as f64 / 99.0).powi(2);
        // preds[i]: cells that cell i references
        let preds: Vec<Vec<usize>> = (0..n).map(|_| (0..n).filter(|_| rng.random_bool(density)).collect()).collect();
        let mut b = Workbook::builder().sheet("G");
        for (i, ps) in preds.iter().enumerate() {
            let cell = if ps.is_empty() {
                Cell::number(i as f64)
            } else {
                Cell::formula(format!("=SUM({})", ps.iter().map(|&j| node_addr(j)).collect::<Vec<_>>().join(",")))
            };
            b = b.cell(&node_addr(i), cell);
        }
        let wb = b.build().map_err(|e| e.to_string())?;

        let mut succ = vec![Vec::new(); n];
        for (i, ps) in preds.iter().enumerate() {
            for &j in ps {
                succ[j].push(i);
            }
        }
        let mut oracle = BTreeSet::new();
        for v in 0..n {
            let mut seen = vec![false; n];
            let mut stack = succ[v].clone();
            while let Some(w) = stack.pop() {
                if w == v {
                    oracle.insert(node_addr(v));
                    break;
                }
                if !std::mem::replace(&mut seen[w], true) {
                    stack.extend(&succ[w]);
                }
            }
        }
        let found: BTreeSet<String> =
            build_graph(&wb).find_circularity().into_iter().flatten().map(|k| k.coord.to_string()).collect();
        ensure!(found == oracle, "case {case} (n={n}): {} cells vs oracle {}", found.len(), oracle.len());
        if !oracle.is_empty() {
            with_cycles += 1;
        }
    }
    Ok(format!("100 digraphs agree with the DFS oracle ({with_cycles} cyclic)"))
}

fn ac6_clones() -> Outcome {
    for n in [2u32, 10, 100] {
        let mut b = Workbook::builder().sheet("S");
        for row in 1..=n {
            b = b.cell(&addr(1, row), Cell::number(f64::from(row))).cell(&addr(2, row), Cell::formula(format!("=A{row}*2")));
        }
        let wb = b.build().map_err(|e| e.to_string())?;
        let m = compute_metrics(&wb, &build_graph(&wb));
        let want = OriginalToRepeated { original: 1, repeated: n as usize - 1 };
        ensure!(m.original_to_repeated_ratio == want, "N={n}: {} (want {want})", m.original_to_repeated_ratio);
    }
    Ok("1:1, 1:9, 1:99".into())
}

/// Cells a toy-model formula reads, from its text alone.
fn referenced(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"\$?([A-Z]+)\$?(\d+)(?::\$?([A-Z]+)\$?(\d+))?").unwrap();
    let mut out = Vec::new();
    for c in re.captures_iter(text) {
        let start = Coord::parse_a1(&format!("{}{}", &c[1], &c[2])).unwrap();
        let end = match (c.get(3), c.get(4)) {
            (Some(col), Some(row)) => Coord::parse_a1(&format!("{}{}", col.as_str(), row.as_str())).unwrap(),
            _ => start,
        };
        for row in start.row.min(end.row)..=start.row.max(end.row) {
            for col in start.col.min(end.col)..=start.col.max(end.col) {
                out.push(addr(col, row));
            }
        }
    }
    out
}

fn ac7_rereview() -> Outcome {
    let base = toy_model();
    let cells: Vec<String> = base.sheets()[0].cells().map(|(c, _)| c.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let target = cells[rng.random_range(0..cells.len())].clone();
        let coord = Coord::parse_a1(&target).unwrap();
        let old = base.cell(0, coord).unwrap();
        let new_cell = if old.is_formula() {
            let a = &cells[rng.random_range(0..cells.len())];
            let b = &cells[rng.random_range(0..cells.len())];
            Cell::formula(format!("={a}*2+{b}"))
        } else {
            Cell::number(f64::from(rng.random_range(1..1000u32)) / 7.0)
        };
        let mut builder = base.to_builder();
        builder.set_cell(0, coord, new_cell).map_err(|e| e.to_string())?;
        let edited = builder.build().map_err(|e| e.to_string())?;

        let diff = diff_workbooks(&base, &edited, DiffOptions::default());
        ensure!(diff.len() == 1, "case {case}: {} diff entries for one edit", diff.len());
        let scope = rereview_scope(&diff, &edited, &build_graph(&edited));

        let deps: Vec<(String, Vec<String>)> = edited.sheets()[0]
            .cells()
            .filter_map(|(c, cell)| Some((c.to_string(), referenced(cell.formula_text()?))))
            .collect();
        let mut reached: BTreeSet<String> = BTreeSet::new();
        loop {
            let before = reached.len();
            for (cell, reads) in &deps {
                if reads.iter().any(|r| *r == target || reached.contains(r)) {
                    reached.insert(cell.clone());
                }
            }
            if reached.len() == before {
                break;
            }
        }
        reached.remove(&target);
        let impacted: BTreeSet<String> = scope.impacted.iter().map(|k| k.coord.to_string()).collect();
        ensure!(impacted == reached, "case {case} edit {target}: {impacted:?} vs oracle {reached:?}");
    }
    for m in ["clean_model.json", "seeded_model.json"] {
        let wb = load_workbook(&common::corpus(m)).map_err(|e| e.to_string())?;
        ensure!(diff_workbooks(&wb, &wb, DiffOptions::default()).is_empty(), "diff({m}, {m}) not empty");
    }
    ensure!(diff_workbooks(&base, &base, DiffOptions::default()).is_empty(), "diff(toy, toy) not empty");
    Ok("50 edits match brute-force reachability; self-diffs empty".into())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializes")
}

fn outputs_by_target(r: &cellsentry::sensitivity::ScenarioResult) -> BTreeMap<String, String> {
    r.outputs.iter().map(|o| (o.target.clone(), json(&o.value))).collect()
}

fn ac8_sensitivity() -> Outcome {
    let wb = load_workbook(&common::corpus("clean_model.json")).map_err(|e| e.to_string())?;
    let suite = load_suite(&common::corpus("suite.json")).map_err(|e| e.to_string())?;
    ensure!(suite.scenarios.len() == 6, "suite has {} scenarios", suite.scenarios.len());
    let runs: Vec<String> = (0..3)
        .map(|_| run_sensitivity_suite(&wb, &suite, None).map(|r| json(&r)).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure!(runs[0] == runs[1] && runs[1] == runs[2], "repeated runs differ");

    let reference = run_sensitivity_suite(&wb, &suite, None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..3 {
        let mut shuffled = suite.clone();
        shuffled.scenarios.shuffle(&mut rng);
        let results = run_sensitivity_suite(&wb, &shuffled, None).map_err(|e| e.to_string())?;
        for r in &results {
            let same = reference.iter().find(|x| x.name == r.name).ok_or(format!("missing {}", r.name))?;
            ensure!(outputs_by_target(r) == outputs_by_target(same), "{} differs after shuffling", r.name);
            ensure!(json(&r.overrides) == json(&same.overrides) && r.passed == same.passed, "{} differs", r.name);
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let saved = run_sensitivity_suite(&wb, &suite, Some(dir.path())).map_err(|e| e.to_string())?;
    for r in saved.iter().skip(1) {
        let path = r.saved.as_ref().ok_or(format!("{} not saved", r.name))?;
        let copy = load_workbook(path).map_err(|e| e.to_string())?;
        let again = recalculate(&copy, &BTreeMap::new()).map_err(|e| e.to_string())?;
        for o in &r.outputs {
            let key = resolve_target(&copy, &o.target).map_err(|e| e.to_string())?;
            ensure!(json(&again.value(&key)) == json(&o.value), "{} {} differs on reload", r.name, o.target);
        }
    }
    let untouched = load_workbook(&common::corpus("clean_model.json")).map_err(|e| e.to_string())?;
    ensure!(diff_workbooks(&untouched, &wb, DiffOptions::default()).is_empty(), "suite modified the base model");

    let loan = toy_model();
    let rate = Scenario {
        name: "rate".into(),
        set: [("Loan!B2".to_string(), serde_json::json!(0.10))].into(),
        watch: vec!["Loan!C9".into()],
        expect: BTreeMap::new(),
    };
    let r = run_scenario(&loan, &rate).map_err(|e| e.to_string())?;
    ensure!(r.outputs[0].value == Value::Number(1000.0 * 0.10), "loan interest {}", r.outputs[0].value);
    Ok("3 identical runs, order-independent, 6 saved copies reproduce".into())
}

/// Copy of `wb` with every monetary literal multiplied by `k`. Rates, years,
/// production volumes, period numbers and flags are left alone.
fn scale_money(wb: &Workbook, k: f64) -> Workbook {
    let money = |sheet: &str, c: Coord| match sheet {
        "Inputs" => matches!(c.row, 3..=5 | 14) && c.col == 2 || (21..=24).contains(&c.row) && c.col >= 3,
        "Calc" => c.col == 2 && matches!(c.row, 7 | 9 | 17 | 19 | 21 | 22),
        _ => false,
    };
    let mut b = wb.to_builder();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            if let (CellContent::Number(x), true) = (&cell.content, money(sheet.name(), coord)) {
                b.set_cell(si, coord, Cell::number(x * k)).expect("existing cell");
            }
        }
    }
    b.build().expect("scaled model is valid")
}

fn ac9_assertions() -> Outcome {
    let clean = load_workbook(&common::corpus("clean_model.json")).map_err(|e| e.to_string())?;
    let schema = load_schema(&common::corpus("schema.json"), &clean).map_err(|e| e.to_string())?;
    ensure!(schema.tolerance == 0.005, "schema tolerance {}", schema.tolerance);
    let h001 = |wb: &Workbook| -> Result<(Vec<usize>, f64), String> {
        let r = recalculate(wb, &BTreeMap::new()).map_err(|e| e.to_string())?;
        let a = run_financial_assertions(&r, &schema).into_iter().find(|a| a.code == "H001").unwrap();
        Ok((a.failing_periods, a.worst_deviation))
    };
    ensure!(h001(&clean)?.0.is_empty(), "clean model fails H001");

    // other assets in period 3 enter total assets only
    let mut b = clean.to_builder();
    b.set_cell(0, Coord::parse_a1("E23").unwrap(), Cell::number(0.01)).map_err(|e| e.to_string())?;
    let skewed = b.build().map_err(|e| e.to_string())?;
    let (periods, dev) = h001(&skewed)?;
    ensure!(periods == vec![3], "failing periods {periods:?}");
    ensure!((dev - 0.01).abs() < 1e-9, "deviation {dev}");

    let scaled = scale_money(&skewed, 1000.0);
    let (scaled_periods, scaled_dev) = h001(&scaled)?;
    ensure!(scaled_periods == vec![3], "scaled failing periods {scaled_periods:?}");
    let ratio = scaled_dev / dev;
    ensure!((ratio - 1000.0).abs() <= 1000.0 * 1e-6, "deviation ratio {ratio}");
    ensure!(h001(&scale_money(&clean, 1000.0))?.0.is_empty(), "scaled clean model fails H001");
    Ok(format!("period 3 flagged at deviation {dev:.6}; x1000 gives {scaled_dev:.3} (ratio {ratio:.9})"))
}

fn ac10_paper_trail() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("seeded_model.json");
    std::fs::copy(common::corpus("seeded_model.json"), &model).map_err(|e| e.to_string())?;
    let config = EngagementConfig::load(&common::corpus("engagement.json")).map_err(|e| e.to_string())?;
    let out = dir.path().join("audit");
    let outcome = run_audit(&model, &config, &out, &AuditOptions::default()).map_err(|e| e.to_string())?;

    let fp = fingerprint_model(&model).map_err(|e| e.to_string())?;
    let mut ledger = CoverageLedger::open(&out.join("coverage.jsonl")).map_err(|e| e.to_string())?;
    ensure!(ledger.fingerprint() == &outcome.fingerprint && ledger.fingerprint().same_model(&fp), "ledger not bound to the model");
    let wb = load_workbook(&model).map_err(|e| e.to_string())?;
    let range = "Calc!B31:B33".parse().map_err(|e: cellsentry::model::AddressError| e.to_string())?;
    ledger.record_signoff(&wb, &fp, &range, "lee", "low", Utc::now()).map_err(|e| e.to_string())?;

    let mut text = std::fs::read_to_string(&model).map_err(|e| e.to_string())?;
    text = text.replacen("\"Legacy input\"", "\"Legacy inputs\"", 1);
    std::fs::write(&model, text).map_err(|e| e.to_string())?;
    let changed = fingerprint_model(&model).map_err(|e| e.to_string())?;
    let before = ledger.entries().len();
    let refused = ledger.record_signoff(&wb, &changed, &range, "lee", "low", Utc::now());
    ensure!(matches!(refused, Err(PaperError::FingerprintMismatch { .. })), "modified model accepted: {refused:?}");
    ensure!(ledger.entries().len() == before, "ledger grew after a refused sign-off");
    let reopened = CoverageLedger::open(&out.join("coverage.jsonl")).map_err(|e| e.to_string())?;
    ensure!(reopened.entries().len() == before, "ledger file holds {} entries", reopened.entries().len());

    let report = std::fs::read_to_string(out.join("report.txt")).map_err(|e| e.to_string())?;
    let (date, time) = fp.modified.split_once('T').ok_or("timestamp without T")?;
    let mut required = vec![
        fp.file_name.clone(),
        format!("{} bytes", fp.byte_size),
        date.to_string(),
        time.to_string(),
        fp.content_hash.clone(),
        config.liability.clone(),
    ];
    required.extend(outcome.findings.iter().filter(|f| f.status.is_unresolved()).map(|f| format!("#{} {}", f.id, f.rule)));
    let missing: Vec<&String> = required.iter().filter(|s| !report.contains(s.as_str())).collect();
    ensure!(missing.is_empty(), "report lacks {missing:?}");
    ensure!(!outcome.findings.is_empty(), "seeded audit found nothing");
    Ok(format!("ledger bound to {}, modified model refused, report lists {} unresolved issue(s)", &fp.content_hash[..12], outcome.findings.len()))
}
