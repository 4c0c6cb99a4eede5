use std::cmp::Ordering;
use std::fmt;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::formula::format_number;
use crate::model::{Cell, CellContent, ErrorCode, Literal};

/// Result of evaluating a cell. Numbers are always finite.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorCode),
    Blank,
}

impl Value {
    /// Wraps `n`, turning NaN and infinities into `#NUM!`.
    pub fn number(n: f64) -> Value {
        if n.is_finite() {
            Value::Number(n)
        } else {
            Value::Error(ErrorCode::Num)
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    /// Arithmetic view: bools count 1/0, blanks 0, text is `#VALUE!`.
    pub fn to_number(&self) -> Result<f64, ErrorCode> {
        match self {
            Value::Number(n) => Ok(*n),
            Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
            Value::Blank => Ok(0.0),
            Value::Text(_) => Err(ErrorCode::Value),
            Value::Error(e) => Err(*e),
        }
    }

    pub fn to_bool(&self) -> Result<bool, ErrorCode> {
        match self {
            Value::Bool(b) => Ok(*b),
            Value::Number(n) => Ok(*n != 0.0),
            Value::Blank => Ok(false),
            Value::Text(_) => Err(ErrorCode::Value),
            Value::Error(e) => Err(*e),
        }
    }

    pub fn to_text(&self) -> Result<String, ErrorCode> {
        match self {
            Value::Number(n) => Ok(format_number(*n)),
            Value::Text(t) => Ok(t.clone()),
            Value::Bool(b) => Ok(if *b { "TRUE" } else { "FALSE" }.to_string()),
            Value::Blank => Ok(String::new()),
            Value::Error(e) => Err(*e),
        }
    }

    /// Value of a non-formula cell.
    pub fn from_content(content: &CellContent) -> Value {
        match content {
            CellContent::Blank | CellContent::Formula(_) => Value::Blank,
            CellContent::Label(t) => Value::Text(t.clone()),
            CellContent::Number(n) => Value::Number(*n),
            CellContent::Bool(b) => Value::Bool(*b),
            CellContent::Error(e) => Value::Error(*e),
        }
    }

    /// Cell holding this value as a literal.
    pub fn to_cell(&self) -> Cell {
        match self {
            Value::Number(n) => Cell::number(*n),
            Value::Text(t) => Cell::label(t.clone()),
            Value::Bool(b) => Cell::boolean(*b),
            Value::Error(e) => Cell::error(*e),
            Value::Blank => Cell { content: CellContent::Blank, cached: None },
        }
    }

    /// Cached-value form; errors and blanks have none.
    pub fn to_literal(&self) -> Option<Literal> {
        match self {
            Value::Number(n) => Some(Literal::Number(*n)),
            Value::Text(t) => Some(Literal::Text(t.clone())),
            Value::Bool(b) => Some(Literal::Bool(*b)),
            Value::Error(_) | Value::Blank => None,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        match v {
            serde_json::Value::Number(n) => n.as_f64().filter(|x| x.is_finite()).map(Value::Number),
            serde_json::Value::String(s) => Some(Value::Text(s.clone())),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Null => Some(Value::Blank),
            _ => None,
        }
    }

    fn type_rank(&self) -> u8 {
        match self {
            Value::Blank | Value::Number(_) => 0,
            Value::Text(_) => 1,
            Value::Bool(_) => 2,
            Value::Error(_) => 3,
        }
    }

    /// Ordering used by comparison operators and lookups: numbers < text <
    /// booleans, text case-insensitive, blank taking the other side's zero value.
    pub fn compare(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Blank, Value::Blank) => Ordering::Equal,
            (Value::Blank, Value::Text(t)) => "".cmp(t.as_str()),
            (Value::Text(t), Value::Blank) => t.as_str().cmp(""),
            (Value::Blank, Value::Bool(b)) => false.cmp(b),
            (Value::Bool(b), Value::Blank) => b.cmp(&false),
            (Value::Blank, Value::Number(n)) => 0.0f64.total_cmp(n),
            (Value::Number(n), Value::Blank) => n.total_cmp(&0.0),
            (Value::Number(a), Value::Number(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Value::Text(a), Value::Text(b)) => a.to_lowercase().cmp(&b.to_lowercase()),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            _ => self.type_rank().cmp(&other.type_rank()),
        }
    }

    /// True when both are the same kind of value and equal under [`Value::compare`].
    pub fn same_kind_eq(&self, other: &Value) -> bool {
        self.type_rank() == other.type_rank() && self.compare(other) == Ordering::Equal
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => f.write_str(&format_number(*n)),
            Value::Text(t) => write!(f, "{t:?}"),
            Value::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            Value::Error(e) => f.write_str(e.as_str()),
            Value::Blank => f.write_str("(blank)"),
        }
    }
}

/// Numbers, strings and bools map to JSON scalars, blank to null and errors
/// to `{"error": "#DIV/0!"}`.
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(n) => s.serialize_f64(*n),
            Value::Text(t) => s.serialize_str(t),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Blank => s.serialize_none(),
            Value::Error(e) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("error", e.as_str())?;
                m.end()
            }
        }
    }
}
