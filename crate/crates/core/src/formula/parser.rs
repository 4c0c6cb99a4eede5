//! Precedence-climbing parser over the token stream.
//!
//! ```text
//! formula    := "=" comparison
//! comparison := concat (("=" | "<>" | "<" | "<=" | ">" | ">=") concat)*
//! concat     := additive ("&" additive)*
//! additive   := term (("+" | "-") term)*
//! term       := power (("*" | "/") power)*
//! power      := prefix ("^" prefix)*
//! prefix     := ("-" | "+") prefix | postfix
//! postfix    := primary "%"*
//! primary    := number | string | TRUE | FALSE | error | ref | range | name
//!             | function "(" [comparison ("," comparison)*] ")" | "(" comparison ")"
//! ```

use super::ast::{BinaryOp, Expr, UnaryOp};
use super::lexer::{Lexer, Tok, Token};
use super::{ParseError, ParseErrorKind};

pub const MAX_ARGS: usize = 255;

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token>,
    pos: usize,
}

pub fn parse_formula(text: &str) -> Result<Expr, ParseError> {
    let Some(body_start) = text.find(|c: char| !c.is_whitespace()) else {
        return Err(ParseError::new(text, 0, ParseErrorKind::MissingEquals));
    };
    if !text[body_start..].starts_with('=') {
        return Err(ParseError::new(text, body_start, ParseErrorKind::MissingEquals));
    }
    let toks = Lexer::new(text, body_start + 1).tokenize()?;
    let mut p = Parser { src: text, toks, pos: 0 };
    let expr = p.comparison()?;
    if let Some(t) = p.toks.get(p.pos) {
        return Err(ParseError::new(text, t.at, ParseErrorKind::UnexpectedToken(describe(&t.tok))));
    }
    Ok(expr)
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Number(n) => n.to_string(),
        Tok::Text(t) => format!("\"{t}\""),
        Tok::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        Tok::Error(e) => e.to_string(),
        Tok::Ref(r) => r.to_string(),
        Tok::Range(r) => r.to_string(),
        Tok::Name(n) => n.clone(),
        Tok::Func(f) => format!("{f}("),
        Tok::Op(op) => op.to_string(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Comma => ",".into(),
    }
}

fn binary_op(tok: &Tok) -> Option<BinaryOp> {
    let Tok::Op(op) = tok else { return None };
    Some(match *op {
        "+" => BinaryOp::Add,
        "-" => BinaryOp::Sub,
        "*" => BinaryOp::Mul,
        "/" => BinaryOp::Div,
        "^" => BinaryOp::Pow,
        "&" => BinaryOp::Concat,
        "=" => BinaryOp::Eq,
        "<>" => BinaryOp::Ne,
        "<" => BinaryOp::Lt,
        "<=" => BinaryOp::Le,
        ">" => BinaryOp::Gt,
        ">=" => BinaryOp::Ge,
        _ => return None,
    })
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn end_offset(&self) -> usize {
        self.src.len()
    }

    fn error_here(&self, kind: ParseErrorKind) -> ParseError {
        let at = self.toks.get(self.pos).map_or(self.end_offset(), |t| t.at);
        ParseError::new(self.src, at, kind)
    }

    fn unexpected(&self) -> ParseError {
        match self.toks.get(self.pos) {
            Some(t) => self.error_here(ParseErrorKind::UnexpectedToken(describe(&t.tok))),
            None => self.error_here(ParseErrorKind::UnexpectedEnd),
        }
    }

    /// One left-associative binary level.
    fn level(
        &mut self,
        prec: u8,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        while let Some(op) = self.peek().and_then(binary_op).filter(|op| op.precedence() == prec) {
            self.pos += 1;
            let rhs = next(self)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        self.level(1, Self::concat)
    }

    fn concat(&mut self) -> Result<Expr, ParseError> {
        self.level(2, Self::additive)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        self.level(3, Self::term)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        self.level(4, Self::power)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        self.level(5, Self::prefix)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek() {
            Some(Tok::Op("-")) => UnaryOp::Neg,
            Some(Tok::Op("+")) => UnaryOp::Plus,
            _ => return self.postfix(),
        };
        self.pos += 1;
        Ok(Expr::Unary(op, Box::new(self.prefix()?)))
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while let Some(Tok::Op("%")) = self.peek() {
            self.pos += 1;
            e = Expr::Unary(UnaryOp::Percent, Box::new(e));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected());
        };
        let expr = match tok {
            Tok::Number(n) => Expr::Number(n),
            Tok::Text(t) => Expr::Text(t),
            Tok::Bool(b) => Expr::Bool(b),
            Tok::Error(e) => Expr::Error(e),
            Tok::Ref(r) => Expr::Ref(r),
            Tok::Range(r) => Expr::Range(r),
            Tok::Name(n) => Expr::Name(n),
            Tok::LParen => {
                self.pos += 1;
                let inner = self.comparison()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.unexpected());
                }
                self.pos += 1;
                return Ok(inner);
            }
            Tok::Func(name) => {
                let call_at = self.pos;
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() == Some(&Tok::RParen) {
                    self.pos += 1;
                    return Ok(Expr::Call(name, args));
                }
                loop {
                    args.push(self.comparison()?);
                    match self.peek() {
                        Some(Tok::Comma) => self.pos += 1,
                        Some(Tok::RParen) => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.unexpected()),
                    }
                }
                if args.len() > MAX_ARGS {
                    let at = self.toks[call_at].at;
                    return Err(ParseError::new(self.src, at, ParseErrorKind::TooManyArguments(name)));
                }
                return Ok(Expr::Call(name, args));
            }
            Tok::Op(_) | Tok::RParen | Tok::Comma => return Err(self.unexpected()),
        };
        self.pos += 1;
        Ok(expr)
    }
}
