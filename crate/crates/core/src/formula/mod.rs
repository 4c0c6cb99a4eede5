//! Formula lexing, parsing, rendering and reference extraction.

mod ast;
mod functions;
mod lexer;
mod parser;
mod refs;
mod render;

use std::fmt;

use thiserror::Error;

pub use ast::{BinaryOp, Expr, FormulaAst, UnaryOp};
pub use functions::{signature, ArgKind, Signature, FUNCTIONS};
pub use parser::{parse_formula, MAX_ARGS};
pub use refs::{collect_refs, CollectedRef, DanglingReason};
pub use render::{normalize_r1c1, render, render_a1, NormalizedFormula, RefStyle};

pub(crate) use render::format_number;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingEquals,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    UnterminatedString,
    UnknownErrorLiteral(String),
    ReferenceOutOfBounds(String),
    ExpectedReference,
    BadNumber(String),
    TooManyArguments(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::MissingEquals => f.write_str("formula must begin with `=`"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of formula"),
            ParseErrorKind::UnterminatedString => f.write_str("unterminated string or sheet name"),
            ParseErrorKind::UnknownErrorLiteral(t) => write!(f, "unknown error literal `{t}`"),
            ParseErrorKind::ReferenceOutOfBounds(r) => write!(f, "reference `{r}` is outside the grid"),
            ParseErrorKind::ExpectedReference => f.write_str("expected a cell reference"),
            ParseErrorKind::BadNumber(n) => write!(f, "malformed number `{n}`"),
            ParseErrorKind::TooManyArguments(name) => write!(f, "{name} has more than {MAX_ARGS} arguments"),
        }
    }
}

/// Syntax error with the character offset (0-based, counting the leading `=`).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at character {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(src: &str, byte_at: usize, kind: ParseErrorKind) -> Self {
        let byte_at = byte_at.min(src.len());
        let offset = src.get(..byte_at).map_or(byte_at, |s| s.chars().count());
        ParseError { offset, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("R1C1 rendering needs an origin cell")]
    MissingOrigin,
    #[error("origin `{0}` is outside the grid")]
    InvalidOrigin(String),
}
