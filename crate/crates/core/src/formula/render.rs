use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{quote_sheet_name, CellRef};

use super::ast::{Expr, UnaryOp, PREC_POSTFIX, PREC_PREFIX};
use super::RenderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefStyle {
    A1,
    R1C1,
}

/// Copy-invariant canonical text of a formula: relative references written as
/// offsets from the owning cell, absolute ones as fixed coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NormalizedFormula(pub String);

impl NormalizedFormula {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NormalizedFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Renders a formula. `origin` is required for R1C1 output.
pub fn render(ast: &Expr, style: RefStyle, origin: Option<&CellRef>) -> Result<String, RenderError> {
    match style {
        RefStyle::A1 => Ok(render_a1(ast)),
        RefStyle::R1C1 => {
            let origin = origin.ok_or(RenderError::MissingOrigin)?;
            if !origin.in_bounds() {
                return Err(RenderError::InvalidOrigin(origin.to_string()));
            }
            let mut out = String::from("=");
            write_expr(ast, &mut out, Some(origin));
            Ok(out)
        }
    }
}

pub fn render_a1(ast: &Expr) -> String {
    let mut out = String::from("=");
    write_expr(ast, &mut out, None);
    out
}

/// R1C1 canonical form of `ast` as owned by the cell at `origin`.
pub fn normalize_r1c1(ast: &Expr, origin: &CellRef) -> NormalizedFormula {
    let mut out = String::from("=");
    write_expr(ast, &mut out, Some(origin));
    NormalizedFormula(out)
}

pub(crate) fn format_number(n: f64) -> String {
    let a = n.abs();
    if a != 0.0 && !(1e-6..1e16).contains(&a) {
        format!("{n:e}")
    } else {
        format!("{n}")
    }
}

fn write_sheet(sheet: &Option<String>, out: &mut String) {
    if let Some(s) = sheet {
        out.push_str(&quote_sheet_name(s));
        out.push('!');
    }
}

fn write_r1c1(r: &CellRef, origin: &CellRef, out: &mut String) {
    let part = |out: &mut String, tag: char, abs: bool, value: u32, base: u32| {
        out.push(tag);
        if abs {
            out.push_str(&value.to_string());
        } else {
            let d = i64::from(value) - i64::from(base);
            if d != 0 {
                out.push_str(&format!("[{d}]"));
            }
        }
    };
    part(out, 'R', r.row_abs, r.row, origin.row);
    part(out, 'C', r.col_abs, r.col, origin.col);
}

fn write_child(e: &Expr, paren: bool, out: &mut String, origin: Option<&CellRef>) {
    if paren {
        out.push('(');
        write_expr(e, out, origin);
        out.push(')');
    } else {
        write_expr(e, out, origin);
    }
}

fn write_expr(e: &Expr, out: &mut String, origin: Option<&CellRef>) {
    match e {
        Expr::Number(n) => out.push_str(&format_number(*n)),
        Expr::Text(t) => {
            out.push('"');
            out.push_str(&t.replace('"', "\"\""));
            out.push('"');
        }
        Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Expr::Error(code) => out.push_str(code.as_str()),
        Expr::Ref(r) => {
            write_sheet(&r.sheet, out);
            match origin {
                Some(o) => write_r1c1(r, o, out),
                None => r.fmt_a1_local(out),
            }
        }
        Expr::Range(rg) => {
            write_sheet(&rg.start.sheet, out);
            match origin {
                Some(o) => {
                    write_r1c1(&rg.start, o, out);
                    out.push(':');
                    write_r1c1(&rg.end, o, out);
                }
                None => {
                    rg.start.fmt_a1_local(out);
                    out.push(':');
                    rg.end.fmt_a1_local(out);
                }
            }
        }
        Expr::Name(n) => out.push_str(n),
        Expr::Unary(UnaryOp::Percent, x) => {
            write_child(x, x.precedence() < PREC_POSTFIX, out, origin);
            out.push('%');
        }
        Expr::Unary(op, x) => {
            out.push(if *op == UnaryOp::Neg { '-' } else { '+' });
            write_child(x, x.precedence() < PREC_PREFIX, out, origin);
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            write_child(l, l.precedence() < p, out, origin);
            out.push_str(op.symbol());
            write_child(r, r.precedence() <= p, out, origin);
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_expr(a, out, origin);
            }
            out.push(')');
        }
    }
}
