use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "info" => Ok(Severity::Info),
            "warning" => Ok(Severity::Warning),
            "error" => Ok(Severity::Error),
            _ => Err(format!("unknown severity `{s}` (expected error, warning or info)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Open,
    Corrected,
    Verified,
    Waived,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Open => "open",
            Status::Corrected => "corrected",
            Status::Verified => "verified",
            Status::Waived => "waived",
        }
    }

    /// Legal moves: open -> corrected -> verified, open -> waived.
    pub fn can_move_to(self, to: Status) -> bool {
        matches!(
            (self, to),
            (Status::Open, Status::Corrected) | (Status::Corrected, Status::Verified) | (Status::Open, Status::Waived)
        )
    }

    /// Anything short of verified still needs attention in the report.
    pub fn is_unresolved(self) -> bool {
        self != Status::Verified
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(Status::Open),
            "corrected" => Ok(Status::Corrected),
            "verified" => Ok(Status::Verified),
            "waived" => Ok(Status::Waived),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusChange {
    pub from: Status,
    pub to: Status,
    pub iteration: u32,
    pub note: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("finding {id}: cannot move from {from} to {to}")]
pub struct IllegalTransition {
    pub id: u64,
    pub from: Status,
    pub to: Status,
}

/// One review observation. `loc` holds `Sheet!A1`, `Sheet!A1:B2` or defined
/// names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: u64,
    pub rule: String,
    pub severity: Severity,
    pub loc: Vec<String>,
    pub msg: String,
    pub status: Status,
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<StatusChange>,
}

impl Finding {
    pub fn new(rule: &str, severity: Severity, loc: Vec<String>, msg: impl Into<String>) -> Self {
        Finding {
            id: 0,
            rule: rule.to_string(),
            severity,
            loc,
            msg: msg.into(),
            status: Status::Open,
            iteration: 1,
            history: Vec::new(),
        }
    }

    pub fn transition(&mut self, to: Status, iteration: u32, note: impl Into<String>) -> Result<(), IllegalTransition> {
        if !self.status.can_move_to(to) {
            return Err(IllegalTransition { id: self.id, from: self.status, to });
        }
        self.history.push(StatusChange { from: self.status, to, iteration, note: note.into() });
        self.status = to;
        self.iteration = iteration;
        Ok(())
    }

    /// Single JSON line without history.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            id: u64,
            rule: &'a str,
            severity: Severity,
            loc: &'a [String],
            msg: &'a str,
            status: Status,
            iteration: u32,
        }
        serde_json::to_string(&Line {
            id: self.id,
            rule: &self.rule,
            severity: self.severity,
            loc: &self.loc,
            msg: &self.msg,
            status: self.status,
            iteration: self.iteration,
        })
        .expect("finding serializes")
    }
}
