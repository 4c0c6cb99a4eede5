#![allow(dead_code)]

use std::path::PathBuf;

use cellsentry::formula::{BinaryOp, Expr, UnaryOp};
use cellsentry::model::{CellRef, ErrorCode, RangeRef};
use proptest::prelude::*;

pub fn corpus(file: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus")).join(file)
}

const SHEETS: [&str; 5] = ["Calc", "Inputs", "My Sheet", "Q1-2024", "it's"];
const NAMES: [&str; 5] = ["RATE", "TAX_RATE", "GROWTH_PCT", "PRICE.BASE", "_HIDDEN"];
const FUNCS: [&str; 8] = ["SUM", "IF", "NPV", "ROUND", "INDEX", "MATCH", "MAX", "MY_FUNC"];

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (0u64..10_000_000, 0u32..7).prop_map(|(m, k)| m as f64 / 10f64.powi(k as i32)),
        (1u32..10, -12i32..12).prop_map(|(m, e)| f64::from(m) * 10f64.powi(e)),
    ]
}

fn text() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just('a'), Just('Z'), Just(' '), Just('"'), Just('#'), Just('1'), Just('é')], 0..6)
        .prop_map(|cs| cs.into_iter().collect())
}

pub fn cell_ref(max_col: u32, max_row: u32) -> impl Strategy<Value = CellRef> {
    (proptest::option::of(0..SHEETS.len()), 1..=max_col, 1..=max_row, any::<bool>(), any::<bool>()).prop_map(
        |(sheet, col, row, ca, ra)| CellRef {
            sheet: sheet.map(|i| SHEETS[i].to_string()),
            col,
            row,
            col_abs: ca,
            row_abs: ra,
        },
    )
}

fn range() -> impl Strategy<Value = RangeRef> {
    (cell_ref(16384, 1_048_576), 1u32..=16384, 1u32..=1_048_576, any::<bool>(), any::<bool>()).prop_map(
        |(start, col, row, ca, ra)| {
            let end = CellRef { sheet: start.sheet.clone(), col, row, col_abs: ca, row_abs: ra };
            RangeRef::new(start, end)
        },
    )
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        4 => number().prop_map(Expr::Number),
        1 => text().prop_map(Expr::Text),
        1 => any::<bool>().prop_map(Expr::Bool),
        1 => (0..ErrorCode::LITERALS.len()).prop_map(|i| Expr::Error(ErrorCode::LITERALS[i])),
        4 => cell_ref(16384, 1_048_576).prop_map(Expr::Ref),
        2 => range().prop_map(Expr::Range),
        1 => (0..NAMES.len()).prop_map(|i| Expr::Name(NAMES[i].to_string())),
    ]
}

const BINOPS: [BinaryOp; 12] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Pow,
    BinaryOp::Concat,
    BinaryOp::Eq,
    BinaryOp::Ne,
    BinaryOp::Lt,
    BinaryOp::Le,
    BinaryOp::Gt,
    BinaryOp::Ge,
];

/// Arbitrary formula trees of bounded depth.
pub fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            (prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Plus), Just(UnaryOp::Percent)], inner.clone())
                .prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (0..BINOPS.len(), inner.clone(), inner.clone())
                .prop_map(|(i, a, b)| Expr::Binary(BINOPS[i], Box::new(a), Box::new(b))),
            (0..FUNCS.len(), proptest::collection::vec(inner, 0..4))
                .prop_map(|(i, args)| Expr::Call(FUNCS[i].to_string(), args)),
        ]
    })
}

/// Arbitrary formulas whose references stay near the top-left corner, so
/// copies can move them around without leaving the grid.
pub fn local_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        number().prop_map(Expr::Number),
        cell_ref(50, 50).prop_map(|mut r| {
            r.sheet = None;
            Expr::Ref(r)
        }),
        (cell_ref(50, 50), 1u32..50, 1u32..50).prop_map(|(mut s, c, r)| {
            s.sheet = None;
            let e = CellRef { sheet: None, col: c, row: r, col_abs: s.col_abs, row_abs: s.row_abs };
            Expr::Range(RangeRef::new(s, e))
        }),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            (0..4usize, inner.clone(), inner.clone())
                .prop_map(|(i, a, b)| Expr::Binary(BINOPS[i], Box::new(a), Box::new(b))),
            proptest::collection::vec(inner, 1..3).prop_map(|args| Expr::Call("SUM".into(), args)),
        ]
    })
}
