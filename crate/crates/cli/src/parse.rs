//! Text syntax for payoff expressions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := prefix ("*" prefix)*
//! prefix  := "-" prefix | postfix
//! postfix := atom ("^" integer)*
//! atom    := number | "x" index | "abs" "(" expr ")"
//!          | "min" "(" expr "," expr ")" | "max" "(" expr "," expr ")"
//!          | "max" "[" binders "]" "(" expr ")" | "(" expr ")"
//! binders := "x" index "in" "[" number "," number "]" ("," ...)*
//! ```
//!
//! The `max[...]` form is the partial maximization the engine prints for
//! conditioned quantities; accepting it makes every printed expression parse
//! back to the same tree.  Division is rejected on purpose — the engine only
//! certifies division-free expressions.

use std::fmt;

use maxfield_core::{Expr, UncertaintyInterval};

/// Syntax or name error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parse an expression; variables are written `x0`, `x1`, …
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text.as_bytes(), text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error_here("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error_here("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    /// Consume `c` if it is next (after whitespace).
    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, context: &str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{}` {context}", c as char)))
        }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> ParseError {
        let upto = &self.text[..pos.min(self.text.len())];
        let line = upto.bytes().filter(|&b| b == b'\n').count() + 1;
        let column = upto.bytes().rev().take_while(|&b| b != b'\n').count() + 1;
        ParseError { line, column, message: message.into() }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            if self.eat(b'+') {
                e = e + self.term()?;
            } else if self.eat(b'-') {
                e = e - self.term()?;
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.prefix()?;
        loop {
            self.skip_ws();
            if self.peek() == Some(b'/') {
                return Err(self.error_here("division is not supported"));
            }
            if self.eat(b'*') {
                e = e * self.prefix()?;
            } else {
                return Ok(e);
            }
        }
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            // Fold a negated literal into the constant so `-2` parses to the
            // same tree the printer produced it from.
            Ok(match self.prefix()? {
                Expr::Const(c) => Expr::constant(-c),
                e => -e,
            })
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        while self.eat(b'^') {
            self.skip_ws();
            let at = self.pos;
            let k: u32 = self
                .take_while(|b| b.is_ascii_digit())
                .parse()
                .map_err(|_| self.error_at(at, "expected an integer exponent"))?;
            e = e.pow(k).map_err(|err| self.error_at(at, err.to_string()))?;
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let at = self.pos;
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "to close the group")?;
                Ok(e)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                let name = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
                match name {
                    "abs" => {
                        self.expect(b'(', "after `abs`")?;
                        let e = self.expr()?;
                        self.expect(b')', "to close `abs`")?;
                        Ok(e.abs())
                    }
                    "min" | "max" => {
                        if name == "max" && self.eat(b'[') {
                            return self.box_max(at);
                        }
                        self.expect(b'(', &format!("after `{name}`"))?;
                        let a = self.expr()?;
                        self.expect(b',', "between the two arguments")?;
                        let b = self.expr()?;
                        self.expect(b')', &format!("to close `{name}`"))?;
                        Ok(if name == "min" { Expr::min_of(a, b) } else { Expr::max_of(a, b) })
                    }
                    _ => match variable_index(name) {
                        Some(i) => Ok(Expr::var(i)),
                        None => Err(self.error_at(at, format!("unknown identifier `{name}`"))),
                    },
                }
            }
            _ => Err(self.error_here("expected a number, variable, function, or `(`")),
        }
    }

    // `max[` already consumed; `at` points at the `max` for error reporting.
    fn box_max(&mut self, at: usize) -> Result<Expr, ParseError> {
        let mut vars = Vec::new();
        let mut bounds = Vec::new();
        loop {
            self.skip_ws();
            let vat = self.pos;
            let name = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
            let i = variable_index(name)
                .ok_or_else(|| self.error_at(vat, "expected a bound variable like `x0`"))?;
            self.skip_ws();
            let kat = self.pos;
            if self.take_while(|b| b.is_ascii_alphabetic()) != "in" {
                return Err(self.error_at(kat, "expected `in`"));
            }
            self.expect(b'[', "to open the bound interval")?;
            let lo = self.signed_number()?;
            self.expect(b',', "between the interval bounds")?;
            let hi = self.signed_number()?;
            self.expect(b']', "to close the bound interval")?;
            let b = UncertaintyInterval::new(lo, hi)
                .map_err(|err| self.error_at(vat, err.to_string()))?;
            vars.push(i);
            bounds.push(b);
            if !self.eat(b',') {
                break;
            }
        }
        self.expect(b']', "to close the binder list")?;
        self.expect(b'(', "to open the maximized body")?;
        let body = self.expr()?;
        self.expect(b')', "to close the maximized body")?;
        Expr::box_max(vars, bounds, body).map_err(|err| self.error_at(at, err.to_string()))
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let at = self.pos;
        let mut end = self.pos;
        while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.') {
            end += 1;
        }
        if end < self.src.len() && matches!(self.src[end], b'e' | b'E') {
            let mut cursor = end + 1;
            if cursor < self.src.len() && matches!(self.src[cursor], b'+' | b'-') {
                cursor += 1;
            }
            if cursor < self.src.len() && self.src[cursor].is_ascii_digit() {
                while cursor < self.src.len() && self.src[cursor].is_ascii_digit() {
                    cursor += 1;
                }
                end = cursor;
            }
        }
        let lit = &self.text[at..end];
        self.pos = end;
        lit.parse::<f64>()
            .map(Expr::constant)
            .map_err(|_| self.error_at(at, format!("invalid number `{lit}`")))
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let negative = self.eat(b'-');
        self.skip_ws();
        match self.number()? {
            Expr::Const(c) => Ok(if negative { -c } else { c }),
            _ => unreachable!("number() only builds constants"),
        }
    }

    fn take_while(&mut self, keep: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() && keep(self.src[self.pos]) {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }
}

/// `x` followed by a decimal index, e.g. `x0`, `x12`.
fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}
