use std::cmp::Ordering;

use crate::formula::Expr;
use crate::model::{Coord, ErrorCode, RangeRef};

use super::eval::{Arg, Ctx};
use super::round::{round_decimal, RoundMode};
use super::Value;

pub(crate) const IRR_TOLERANCE: f64 = 1e-9;
const IRR_MAX_STEPS: usize = 100;
const IRR_BRACKET: (f64, f64) = (-0.9999, 10.0);

type Result<T> = std::result::Result<T, ErrorCode>;

/// Dispatches a call whose name and arity were already checked.
pub(crate) fn call(ctx: &Ctx<'_>, name: &str, args: &[Expr]) -> Value {
    let out = match name {
        // IF evaluates only the branch it takes
        "IF" => {
            return match ctx.eval(&args[0]).to_bool() {
                Err(code) => Value::Error(code),
                Ok(true) => ctx.eval(&args[1]),
                Ok(false) => args.get(2).map_or(Value::Bool(false), |e| ctx.eval(e)),
            }
        }
        "SUM" => numbers(ctx, args).map(|v| Value::number(v.iter().sum())),
        "MIN" => numbers(ctx, args).map(|v| Value::number(v.iter().copied().reduce(f64::min).unwrap_or(0.0))),
        "MAX" => numbers(ctx, args).map(|v| Value::number(v.iter().copied().reduce(f64::max).unwrap_or(0.0))),
        "AVERAGE" => numbers(ctx, args).and_then(|v| {
            if v.is_empty() {
                Err(ErrorCode::Div0)
            } else {
                Ok(Value::number(v.iter().sum::<f64>() / v.len() as f64))
            }
        }),
        "COUNT" => Ok(Value::Number(count(ctx, args, |v, direct| {
            matches!(v, Value::Number(_)) || (direct && matches!(v, Value::Bool(_)))
        }) as f64)),
        "COUNTA" => Ok(Value::Number(count(ctx, args, |v, _| !matches!(v, Value::Blank)) as f64)),
        "AND" => logicals(ctx, args).map(|v| Value::Bool(v.iter().all(|b| *b))),
        "OR" => logicals(ctx, args).map(|v| Value::Bool(v.iter().any(|b| *b))),
        "NOT" => ctx.eval(&args[0]).to_bool().map(|b| Value::Bool(!b)),
        "ABS" => num(ctx, &args[0]).map(|n| Value::number(n.abs())),
        "ROUND" => rounding(ctx, args, RoundMode::Nearest),
        "ROUNDUP" => rounding(ctx, args, RoundMode::Up),
        "ROUNDDOWN" => rounding(ctx, args, RoundMode::Down),
        "INDEX" => index(ctx, args),
        "MATCH" => match_fn(ctx, args),
        "VLOOKUP" => vlookup(ctx, args),
        "NPV" => npv_fn(ctx, args),
        "IRR" => irr_fn(ctx, args),
        _ => Err(ErrorCode::Name),
    };
    out.unwrap_or_else(Value::Error)
}

fn num(ctx: &Ctx<'_>, e: &Expr) -> Result<f64> {
    ctx.eval(e).to_number()
}

/// Aggregator view: numbers inside ranges (text, bools, blanks skipped) and
/// direct arguments coerced; the first error wins.
fn numbers(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for a in args {
        match ctx.arg(a) {
            Arg::Scalar(v) => out.push(v.to_number()?),
            Arg::Area { sheet, range } => {
                for v in ctx.area_values(sheet, &range) {
                    match v {
                        Value::Number(n) => out.push(n),
                        Value::Error(code) => return Err(code),
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(out)
}

fn count(ctx: &Ctx<'_>, args: &[Expr], counts: impl Fn(&Value, bool) -> bool) -> usize {
    let mut n = 0;
    for a in args {
        match ctx.arg(a) {
            Arg::Scalar(v) => n += usize::from(counts(&v, true)),
            Arg::Area { sheet, range } => {
                n += ctx.area_values(sheet, &range).iter().filter(|v| counts(v, false)).count();
            }
        }
    }
    n
}

fn logicals(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for a in args {
        match ctx.arg(a) {
            Arg::Scalar(v) => out.push(v.to_bool()?),
            Arg::Area { sheet, range } => {
                for v in ctx.area_values(sheet, &range) {
                    match v {
                        Value::Bool(b) => out.push(b),
                        Value::Number(n) => out.push(n != 0.0),
                        Value::Error(code) => return Err(code),
                        _ => {}
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ErrorCode::Value);
    }
    Ok(out)
}

fn rounding(ctx: &Ctx<'_>, args: &[Expr], mode: RoundMode) -> Result<Value> {
    let x = num(ctx, &args[0])?;
    let digits = num(ctx, &args[1])?.trunc().clamp(-400.0, 400.0) as i64;
    Ok(Value::number(round_decimal(x, digits, mode)))
}

fn area_arg(ctx: &Ctx<'_>, e: &Expr) -> Result<(usize, RangeRef)> {
    match ctx.arg(e) {
        Arg::Area { sheet, range } => Ok((sheet, range)),
        Arg::Scalar(Value::Error(code)) => Err(code),
        Arg::Scalar(_) => Err(ErrorCode::Value),
    }
}

/// Value at 1-based (`row`, `col`) inside `range`.
fn cell_at(ctx: &Ctx<'_>, sheet: usize, range: &RangeRef, row: u32, col: u32) -> Value {
    ctx.env.value(sheet, Coord::new(range.start.col + col - 1, range.start.row + row - 1))
}

fn position(ctx: &Ctx<'_>, e: &Expr) -> Result<i64> {
    let n = num(ctx, e)?.trunc();
    if n < 0.0 {
        return Err(ErrorCode::Value);
    }
    Ok(n.min(f64::from(u32::MAX)) as i64)
}

fn index(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Value> {
    let (sheet, range) = area_arg(ctx, &args[0])?;
    let first = position(ctx, &args[1])?;
    let (row, col) = match args.get(2) {
        Some(c) => (first, position(ctx, c)?),
        None if range.height() == 1 => (1, first),
        None if range.width() == 1 => (first, 1),
        None => return Err(ErrorCode::Ref),
    };
    // zero selects a whole row or column, which has no scalar value
    let row = if row == 0 && range.height() == 1 { 1 } else { row };
    let col = if col == 0 && range.width() == 1 { 1 } else { col };
    if row < 1 || col < 1 || row > i64::from(range.height()) || col > i64::from(range.width()) {
        return Err(ErrorCode::Ref);
    }
    Ok(cell_at(ctx, sheet, &range, row as u32, col as u32))
}

/// 1-based position of the match in `keys`. Exact: first equal key.
/// Approximate: the largest key not above `target` among keys of the same
/// type, the last one when several tie.
fn lookup(keys: &[Value], target: &Value, exact: bool) -> Option<usize> {
    if exact {
        return keys.iter().position(|k| k.same_kind_eq(target) || matches!((k, target), (Value::Blank, Value::Blank))).map(|i| i + 1);
    }
    let mut best: Option<(usize, &Value)> = None;
    for (i, k) in keys.iter().enumerate() {
        let comparable = std::mem::discriminant(k) == std::mem::discriminant(target);
        if !comparable || k.compare(target) == Ordering::Greater {
            continue;
        }
        if best.is_none_or(|(_, b)| k.compare(b) != Ordering::Less) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i + 1)
}

fn match_fn(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Value> {
    let target = ctx.eval(&args[0]);
    if let Value::Error(code) = target {
        return Err(code);
    }
    let (sheet, range) = area_arg(ctx, &args[1])?;
    let mode = args.get(2).map(|e| num(ctx, e)).transpose()?.unwrap_or(1.0);
    if mode != 0.0 && mode != 1.0 {
        return Err(ErrorCode::NA);
    }
    let keys: Vec<Value> = if range.height() == 1 {
        (1..=range.width()).map(|c| cell_at(ctx, sheet, &range, 1, c)).collect()
    } else if range.width() == 1 {
        (1..=range.height()).map(|r| cell_at(ctx, sheet, &range, r, 1)).collect()
    } else {
        return Err(ErrorCode::NA);
    };
    lookup(&keys, &target, mode == 0.0).map(|p| Value::Number(p as f64)).ok_or(ErrorCode::NA)
}

fn vlookup(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Value> {
    let target = ctx.eval(&args[0]);
    if let Value::Error(code) = target {
        return Err(code);
    }
    let (sheet, range) = area_arg(ctx, &args[1])?;
    let col = num(ctx, &args[2])?.trunc();
    if col < 1.0 {
        return Err(ErrorCode::Value);
    }
    if col > f64::from(range.width()) {
        return Err(ErrorCode::Ref);
    }
    let approximate = match args.get(3) {
        None => true,
        Some(e) => ctx.eval(e).to_bool()?,
    };
    let keys: Vec<Value> = (1..=range.height()).map(|r| cell_at(ctx, sheet, &range, r, 1)).collect();
    let row = lookup(&keys, &target, !approximate).ok_or(ErrorCode::NA)?;
    Ok(cell_at(ctx, sheet, &range, row as u32, col as u32))
}

/// Present value of `flows` received at the end of periods 1, 2, ...
pub fn npv(rate: f64, flows: &[f64]) -> f64 {
    flows.iter().enumerate().map(|(i, v)| v / (1.0 + rate).powi(i as i32 + 1)).sum()
}

fn npv_fn(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Value> {
    let rate = num(ctx, &args[0])?;
    if rate == -1.0 {
        return Err(ErrorCode::Div0);
    }
    let flows = numbers(ctx, &args[1..])?;
    Ok(Value::number(npv(rate, &flows)))
}

/// Net present value with the first flow at time 0.
fn npv0(rate: f64, flows: &[f64]) -> f64 {
    flows.iter().enumerate().map(|(i, v)| v / (1.0 + rate).powi(i as i32)).sum()
}

/// Internal rate of return: Newton's method from `guess`, then bisection over
/// [-0.9999, 10] if Newton fails and the ends bracket a root.
pub fn irr(flows: &[f64], guess: f64) -> Option<f64> {
    let has_pos = flows.iter().any(|v| *v > 0.0);
    let has_neg = flows.iter().any(|v| *v < 0.0);
    if !has_pos || !has_neg {
        return None;
    }
    let mut r = guess;
    for _ in 0..IRR_MAX_STEPS {
        let f = npv0(r, flows);
        if !f.is_finite() {
            break;
        }
        if f.abs() < IRR_TOLERANCE {
            return Some(r);
        }
        let df: f64 =
            flows.iter().enumerate().map(|(i, v)| -(i as f64) * v / (1.0 + r).powi(i as i32 + 1)).sum();
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let next = r - f / df;
        if !next.is_finite() || next <= -1.0 {
            break;
        }
        r = next;
    }
    let (mut lo, mut hi) = IRR_BRACKET;
    let (mut flo, fhi) = (npv0(lo, flows), npv0(hi, flows));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fmid = npv0(mid, flows);
        if fmid.abs() < IRR_TOLERANCE || hi - lo < 1e-15 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn irr_fn(ctx: &Ctx<'_>, args: &[Expr]) -> Result<Value> {
    let flows = numbers(ctx, &args[..1])?;
    let guess = args.get(1).map(|e| num(ctx, e)).transpose()?.unwrap_or(0.1);
    irr(&flows, guess).map(Value::number).ok_or(ErrorCode::Num)
}
