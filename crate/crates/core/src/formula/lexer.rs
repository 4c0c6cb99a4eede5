use crate::model::{letters_to_col, looks_like_a1, CellRef, ErrorCode, RangeRef, MAX_COLS, MAX_ROWS};

use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorCode),
    Ref(CellRef),
    Range(RangeRef),
    Name(String),
    /// Identifier immediately followed by `(`; the paren is consumed.
    Func(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// Byte offset into the full formula text.
    pub at: usize,
}

pub(crate) struct Lexer<'s> {
    src: &'s str,
    pos: usize,
}

const OPERATORS: [&str; 13] = ["<>", "<=", ">=", "+", "-", "*", "/", "^", "&", "=", "<", ">", "%"];

impl<'s> Lexer<'s> {
    pub fn new(src: &'s str, start: usize) -> Self {
        Lexer { src, pos: start }
    }

    fn err(&self, kind: ParseErrorKind, at: usize) -> ParseError {
        ParseError::new(self.src, at, kind)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn rest(&self) -> &'s str {
        &self.src[self.pos..]
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.pos += self.peek().map_or(0, char::len_utf8);
            }
            let Some(c) = self.peek() else { break };
            let at = self.pos;
            let tok = match c {
                '(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                ')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                ',' => {
                    self.pos += 1;
                    Tok::Comma
                }
                '"' => self.string()?,
                '#' => self.error_literal()?,
                '0'..='9' | '.' => self.number()?,
                '\'' => {
                    let sheet = self.quoted_sheet()?;
                    self.sheet_qualified(sheet, at)?
                }
                c if c.is_ascii_alphabetic() || c == '_' || c == '$' => self.word()?,
                _ => match OPERATORS.iter().find(|op| self.rest().starts_with(**op)) {
                    Some(op) => {
                        self.pos += op.len();
                        Tok::Op(op)
                    }
                    None => return Err(self.err(ParseErrorKind::UnexpectedChar(c), at)),
                },
            };
            out.push(Token { tok, at });
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut text = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.err(ParseErrorKind::UnterminatedString, start));
            };
            self.pos += c.len_utf8();
            if c == '"' {
                if self.peek() == Some('"') {
                    self.pos += 1;
                    text.push('"');
                } else {
                    return Ok(Tok::Text(text));
                }
            } else {
                text.push(c);
            }
        }
    }

    fn error_literal(&mut self) -> Result<Tok, ParseError> {
        let rest = self.rest();
        for code in ErrorCode::LITERALS {
            let s = code.as_str();
            if rest.len() >= s.len() && rest.is_char_boundary(s.len()) && rest[..s.len()].eq_ignore_ascii_case(s) {
                self.pos += s.len();
                return Ok(Tok::Error(code));
            }
        }
        let word: String = rest.chars().take_while(|c| !c.is_whitespace() && !"(),+-*/^&=<>".contains(*c)).collect();
        Err(self.err(ParseErrorKind::UnknownErrorLiteral(word), self.pos))
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        self.pos = i;
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(Tok::Number(n)),
            _ => Err(self.err(ParseErrorKind::BadNumber(text.to_string()), start)),
        }
    }

    fn quoted_sheet(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut name = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.err(ParseErrorKind::UnterminatedString, start));
            };
            self.pos += c.len_utf8();
            if c == '\'' {
                if self.peek() == Some('\'') {
                    self.pos += 1;
                    name.push('\'');
                    continue;
                }
                break;
            }
            name.push(c);
        }
        if name.is_empty() || self.peek() != Some('!') {
            return Err(self.err(ParseErrorKind::ExpectedReference, self.pos));
        }
        self.pos += 1;
        Ok(name)
    }

    fn take_word(&mut self) -> &'s str {
        let start = self.pos;
        let len = self.rest().find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'));
        self.pos += len.unwrap_or(self.rest().len());
        &self.src[start..self.pos]
    }

    fn word(&mut self) -> Result<Tok, ParseError> {
        let at = self.pos;
        let word = self.take_word();
        match self.peek() {
            Some('!') => {
                if word.contains('$') {
                    return Err(self.err(ParseErrorKind::UnexpectedChar('$'), at));
                }
                self.pos += 1;
                return self.sheet_qualified(word.to_string(), at);
            }
            Some('(') if !word.contains('$') => {
                self.pos += 1;
                return Ok(Tok::Func(word.to_ascii_uppercase()));
            }
            _ => {}
        }
        if looks_like_a1(&word.replace('$', "")) && a1_dollars_ok(word) {
            let start = self.cell(word, at)?;
            return self.maybe_range(None, start);
        }
        if word.contains('$') {
            return Err(self.err(ParseErrorKind::UnexpectedChar('$'), at));
        }
        if word.eq_ignore_ascii_case("TRUE") {
            return Ok(Tok::Bool(true));
        }
        if word.eq_ignore_ascii_case("FALSE") {
            return Ok(Tok::Bool(false));
        }
        if word.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            return Err(self.err(ParseErrorKind::UnexpectedChar(word.chars().next().unwrap_or('?')), at));
        }
        Ok(Tok::Name(word.to_ascii_uppercase()))
    }

    /// After `Sheet!`: a cell or range on that sheet.
    fn sheet_qualified(&mut self, sheet: String, at: usize) -> Result<Tok, ParseError> {
        let word_at = self.pos;
        let word = self.take_word();
        if !(looks_like_a1(&word.replace('$', "")) && a1_dollars_ok(word)) {
            return Err(self.err(ParseErrorKind::ExpectedReference, word_at));
        }
        let _ = at;
        let start = self.cell(word, word_at)?;
        self.maybe_range(Some(sheet), start)
    }

    fn maybe_range(&mut self, sheet: Option<String>, start: CellRef) -> Result<Tok, ParseError> {
        if self.peek() != Some(':') {
            return Ok(Tok::Ref(start.with_sheet(sheet)));
        }
        self.pos += 1;
        let end_at = self.pos;
        let word = self.take_word();
        if !(looks_like_a1(&word.replace('$', "")) && a1_dollars_ok(word)) {
            return Err(self.err(ParseErrorKind::ExpectedReference, end_at));
        }
        let end = self.cell(word, end_at)?;
        Ok(Tok::Range(RangeRef::new(start, end).with_sheet(sheet)))
    }

    fn cell(&self, word: &str, at: usize) -> Result<CellRef, ParseError> {
        let col_abs = word.starts_with('$');
        let body = word.trim_start_matches('$');
        let letters_len = body.bytes().take_while(u8::is_ascii_alphabetic).count();
        let (letters, tail) = body.split_at(letters_len);
        let row_abs = tail.starts_with('$');
        let digits = tail.trim_start_matches('$');
        let col = letters_to_col(letters).unwrap_or(u32::MAX);
        let row = digits.parse::<u64>().unwrap_or(u64::MAX);
        if col > MAX_COLS || row == 0 || row > u64::from(MAX_ROWS) {
            return Err(self.err(ParseErrorKind::ReferenceOutOfBounds(word.to_string()), at));
        }
        Ok(CellRef { sheet: None, col, row: row as u32, col_abs, row_abs })
    }
}

/// `$` may only appear before the letters and before the digits.
fn a1_dollars_ok(word: &str) -> bool {
    let body = word.strip_prefix('$').unwrap_or(word);
    let letters = body.bytes().take_while(u8::is_ascii_alphabetic).count();
    let tail = &body[letters..];
    let digits = tail.strip_prefix('$').unwrap_or(tail);
    !digits.contains('$') && !body[..letters].contains('$')
}
