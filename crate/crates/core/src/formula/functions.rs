//! Signature table for the supported worksheet functions.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Any,
    /// Scalar used arithmetically; a text literal or a multi-cell range is a type error.
    Number,
    /// Must be a cell reference, range or defined name.
    Reference,
}

#[derive(Debug, Clone, Copy)]
pub struct Signature {
    pub name: &'static str,
    pub min_args: usize,
    pub max_args: usize,
    /// Kinds of the leading positional arguments.
    pub kinds: &'static [ArgKind],
    /// Kind of every argument beyond `kinds`.
    pub rest: ArgKind,
    /// Argument positions (0-based) that hold structural parameters such as
    /// digit counts, column indices and match modes.
    pub structural: &'static [usize],
}

impl Signature {
    pub fn kind_of(&self, pos: usize) -> ArgKind {
        self.kinds.get(pos).copied().unwrap_or(self.rest)
    }
}

use ArgKind::{Any, Number, Reference};

const fn sig(
    name: &'static str,
    min_args: usize,
    max_args: usize,
    kinds: &'static [ArgKind],
    rest: ArgKind,
    structural: &'static [usize],
) -> Signature {
    Signature { name, min_args, max_args, kinds, rest, structural }
}

pub const FUNCTIONS: &[Signature] = &[
    sig("SUM", 1, 255, &[], Any, &[]),
    sig("MIN", 1, 255, &[], Any, &[]),
    sig("MAX", 1, 255, &[], Any, &[]),
    sig("AVERAGE", 1, 255, &[], Any, &[]),
    sig("COUNT", 1, 255, &[], Any, &[]),
    sig("COUNTA", 1, 255, &[], Any, &[]),
    sig("IF", 2, 3, &[], Any, &[]),
    sig("AND", 1, 255, &[], Any, &[]),
    sig("OR", 1, 255, &[], Any, &[]),
    sig("NOT", 1, 1, &[], Any, &[]),
    sig("ABS", 1, 1, &[Number], Any, &[]),
    sig("ROUND", 2, 2, &[Number, Number], Any, &[1]),
    sig("ROUNDUP", 2, 2, &[Number, Number], Any, &[1]),
    sig("ROUNDDOWN", 2, 2, &[Number, Number], Any, &[1]),
    sig("INDEX", 2, 3, &[Reference, Number, Number], Any, &[1, 2]),
    sig("MATCH", 2, 3, &[Any, Reference, Number], Any, &[2]),
    sig("VLOOKUP", 3, 4, &[Any, Reference, Number, Any], Any, &[2, 3]),
    sig("NPV", 2, 255, &[Number], Any, &[]),
    sig("IRR", 1, 2, &[Reference, Number], Any, &[1]),
];

/// Looks up a function by its uppercase name.
pub fn signature(name: &str) -> Option<&'static Signature> {
    FUNCTIONS.iter().find(|s| s.name == name)
}
