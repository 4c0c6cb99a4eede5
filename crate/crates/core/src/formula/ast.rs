use crate::model::{CellRef, ErrorCode, RangeRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Plus,
    /// Postfix `%`.
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    /// Binding strength; larger binds tighter.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 1,
            BinaryOp::Concat => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
            BinaryOp::Pow => 5,
        }
    }
}

pub(crate) const PREC_PREFIX: u8 = 6;
pub(crate) const PREC_POSTFIX: u8 = 7;
pub(crate) const PREC_ATOM: u8 = 8;

/// Parsed formula tree.
///
/// Number literals are never negative: a leading minus parses as
/// [`UnaryOp::Neg`]. Function and defined-name identifiers are stored
/// uppercase.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorCode),
    Ref(CellRef),
    Range(RangeRef),
    Name(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

pub type FormulaAst = Expr;

impl Expr {
    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnaryOp::Percent, _) => PREC_POSTFIX,
            Expr::Unary(..) => PREC_PREFIX,
            _ => PREC_ATOM,
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, x) => x.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    /// Rebuilds the tree bottom-up, applying `f` to every reference node.
    pub fn map_refs<E>(&self, f: &mut impl FnMut(&Expr) -> Result<Expr, E>) -> Result<Expr, E> {
        Ok(match self {
            Expr::Ref(_) | Expr::Range(_) => f(self)?,
            Expr::Unary(op, x) => Expr::Unary(*op, Box::new(x.map_refs(f)?)),
            Expr::Binary(op, l, r) => Expr::Binary(*op, Box::new(l.map_refs(f)?), Box::new(r.map_refs(f)?)),
            Expr::Call(name, args) => {
                Expr::Call(name.clone(), args.iter().map(|a| a.map_refs(f)).collect::<Result<_, _>>()?)
            }
            other => other.clone(),
        })
    }

    /// The formula as it would read after copying its cell by (`dcol`, `drow`):
    /// relative coordinates move, `$`-fixed ones stay. `None` if a moved
    /// reference would leave the grid.
    pub fn fill_copy(&self, dcol: i64, drow: i64) -> Option<Expr> {
        let shift = |r: &CellRef| -> Option<CellRef> {
            let col = if r.col_abs { i64::from(r.col) } else { i64::from(r.col) + dcol };
            let row = if r.row_abs { i64::from(r.row) } else { i64::from(r.row) + drow };
            let moved = CellRef { col: u32::try_from(col).ok()?, row: u32::try_from(row).ok()?, ..r.clone() };
            moved.in_bounds().then_some(moved)
        };
        self.map_refs(&mut |e| match e {
            Expr::Ref(r) => shift(r).map(Expr::Ref).ok_or(()),
            Expr::Range(rg) => {
                let (s, e) = (shift(&rg.start).ok_or(())?, shift(&rg.end).ok_or(())?);
                Ok(Expr::Range(RangeRef::new(s, e)))
            }
            _ => unreachable!("map_refs only visits references"),
        })
        .ok()
    }
}
