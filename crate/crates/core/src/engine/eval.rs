use crate::formula::{signature, BinaryOp, Expr, UnaryOp};
use crate::model::{CellRef, Coord, ErrorCode, RangeRef, Workbook};

use super::functions::call;
use super::Value;

/// Cell values visible to a formula being evaluated.
pub trait Environment {
    fn workbook(&self) -> &Workbook;
    /// Current value at a position; `Value::Blank` where nothing is stored.
    fn value(&self, sheet: usize, coord: Coord) -> Value;
}

/// A function argument: either a plain value or a rectangular block of cells.
pub(crate) enum Arg {
    Scalar(Value),
    Area { sheet: usize, range: RangeRef },
}

pub(crate) struct Ctx<'a> {
    pub env: &'a dyn Environment,
    /// Sheet index of the formula's own cell, if the sheet exists.
    pub sheet: Option<usize>,
}

impl Ctx<'_> {
    fn sheet_of(&self, name: &Option<String>) -> Option<usize> {
        match name {
            None => self.sheet,
            Some(s) => self.env.workbook().sheet_index(s),
        }
    }

    /// Non-blank member values in row-major order.
    pub fn area_values(&self, sheet: usize, range: &RangeRef) -> Vec<Value> {
        let wb = self.env.workbook();
        wb.sheets()[sheet].cells_in(range).map(|(c, _)| self.env.value(sheet, c)).collect()
    }

    /// Resolves a reference-like expression to a block of cells.
    fn area(&self, e: &Expr) -> Result<(usize, RangeRef), ErrorCode> {
        match e {
            Expr::Ref(r) => Ok((self.sheet_of(&r.sheet).ok_or(ErrorCode::Ref)?, RangeRef::single(r.clone()))),
            Expr::Range(r) => Ok((self.sheet_of(&r.start.sheet).ok_or(ErrorCode::Ref)?, r.clone())),
            Expr::Name(n) => {
                let wb = self.env.workbook();
                if wb.name(n).is_none() {
                    return Err(ErrorCode::Name);
                }
                let target = wb.resolve_name(n).map_err(|_| ErrorCode::Ref)?;
                let sheet = target.sheet().and_then(|s| wb.sheet_index(s)).ok_or(ErrorCode::Ref)?;
                Ok((sheet, target))
            }
            _ => unreachable!("area() only takes references"),
        }
    }

    pub fn arg(&self, e: &Expr) -> Arg {
        match e {
            Expr::Ref(_) | Expr::Range(_) | Expr::Name(_) => match self.area(e) {
                Ok((sheet, range)) => Arg::Area { sheet, range },
                Err(code) => Arg::Scalar(Value::Error(code)),
            },
            _ => Arg::Scalar(self.eval(e)),
        }
    }

    /// Scalar evaluation; a multi-cell reference here is `#VALUE!`.
    pub fn eval(&self, e: &Expr) -> Value {
        match e {
            Expr::Number(n) => Value::number(*n),
            Expr::Text(t) => Value::Text(t.clone()),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Error(code) => Value::Error(*code),
            Expr::Ref(_) | Expr::Range(_) | Expr::Name(_) => match self.area(e) {
                Ok((sheet, range)) if range.is_single_cell() => self.env.value(sheet, range.start.coord()),
                Ok(_) => Value::Error(ErrorCode::Value),
                Err(code) => Value::Error(code),
            },
            Expr::Unary(op, x) => {
                let v = self.eval(x);
                match (op, v.to_number()) {
                    (_, Err(code)) => Value::Error(code),
                    (UnaryOp::Neg, Ok(n)) => Value::number(-n),
                    (UnaryOp::Percent, Ok(n)) => Value::number(n / 100.0),
                    (UnaryOp::Plus, Ok(n)) => match v {
                        Value::Blank => Value::Number(0.0),
                        Value::Bool(_) => v,
                        _ => Value::number(n),
                    },
                }
            }
            Expr::Binary(op, l, r) => binary(*op, self.eval(l), self.eval(r)),
            Expr::Call(name, args) => match signature(name) {
                None => Value::Error(ErrorCode::Name),
                Some(sig) if args.len() < sig.min_args || args.len() > sig.max_args => Value::Error(ErrorCode::Value),
                Some(_) => call(self, name, args),
            },
        }
    }
}

fn binary(op: BinaryOp, l: Value, r: Value) -> Value {
    if let Value::Error(code) = l {
        return Value::Error(code);
    }
    if let Value::Error(code) = r {
        return Value::Error(code);
    }
    match op {
        BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow => {
            let (a, b) = match (l.to_number(), r.to_number()) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(c), _) | (_, Err(c)) => return Value::Error(c),
            };
            match op {
                BinaryOp::Add => Value::number(a + b),
                BinaryOp::Sub => Value::number(a - b),
                BinaryOp::Mul => Value::number(a * b),
                BinaryOp::Div if b == 0.0 => Value::Error(ErrorCode::Div0),
                BinaryOp::Div => Value::number(a / b),
                BinaryOp::Pow if a == 0.0 && b == 0.0 => Value::Error(ErrorCode::Num),
                BinaryOp::Pow if a == 0.0 && b < 0.0 => Value::Error(ErrorCode::Div0),
                _ => Value::number(a.powf(b)),
            }
        }
        BinaryOp::Concat => match (l.to_text(), r.to_text()) {
            (Ok(a), Ok(b)) => Value::Text(a + &b),
            (Err(c), _) | (_, Err(c)) => Value::Error(c),
        },
        BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ord = l.compare(&r);
            let result = match op {
                BinaryOp::Eq => ord.is_eq(),
                BinaryOp::Ne => ord.is_ne(),
                BinaryOp::Lt => ord.is_lt(),
                BinaryOp::Le => ord.is_le(),
                BinaryOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            };
            Value::Bool(result)
        }
    }
}

/// Evaluates a parsed formula owned by the cell at `origin`. Never fails: all
/// problems come back as error values. A blank result reads as 0.
pub fn eval_formula(ast: &Expr, origin: &CellRef, env: &dyn Environment) -> Value {
    let sheet = origin.sheet.as_deref().and_then(|s| env.workbook().sheet_index(s));
    match (Ctx { env, sheet }).eval(ast) {
        Value::Blank => Value::Number(0.0),
        v => v,
    }
}
