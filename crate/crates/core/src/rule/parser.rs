//! Lexer and recursive-descent parser for rule text.
//!
//! Precedence, loosest first: `implies` (right-associative), `or`, `and`,
//! `not`, then comparisons / inclusion / string predicates over terms.

use std::fmt;

use thiserror::Error;

use super::ast::{CmpOp, Expr, InclusionOp, Literal, StringOp, Term};
use super::value::parse_iso_date;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Dec(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Cmp(CmpOp),
    And,
    Or,
    Not,
    Implies,
    In,
    NotIn,
    Substring,
    StartsWith,
    EndsWith,
    Date,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Dec(d) => write!(f, "decimal {d}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::And => f.write_str("`and`"),
            Tok::Or => f.write_str("`or`"),
            Tok::Not => f.write_str("`not`"),
            Tok::Implies => f.write_str("`implies`"),
            Tok::In => f.write_str("`in`"),
            Tok::NotIn => f.write_str("`notIn`"),
            Tok::Substring => f.write_str("`substring`"),
            Tok::StartsWith => f.write_str("`startswith`"),
            Tok::EndsWith => f.write_str("`endswith`"),
            Tok::Date => f.write_str("`date`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// Tokens that would have been accepted at this position.
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn at_end_of_input(&self) -> bool {
        self.message.contains("end of input")
    }
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected one of: {})", expected.join(", "))
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.char_indices().peekable(), src, line: 1, column: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len())
    }

    fn error(&self, line: usize, column: usize, message: String) -> ParseError {
        ParseError { line, column, message, expected: Vec::new() }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else {
                out.push(Spanned { tok: Tok::Eof, line, column });
                return Ok(out);
            };
            let tok = match c {
                '(' => self.single(Tok::LParen),
                ')' => self.single(Tok::RParen),
                '[' => self.single(Tok::LBracket),
                ']' => self.single(Tok::RBracket),
                ',' => self.single(Tok::Comma),
                '=' => {
                    self.bump();
                    if self.peek() == Some('=') {
                        self.bump();
                    }
                    Tok::Cmp(CmpOp::Eq)
                }
                '!' => {
                    self.bump();
                    if self.peek() != Some('=') {
                        return Err(self.error(line, column, "expected `!=`".into()));
                    }
                    self.bump();
                    Tok::Cmp(CmpOp::Ne)
                }
                '<' | '>' => {
                    self.bump();
                    let eq = self.peek() == Some('=');
                    if eq {
                        self.bump();
                    }
                    Tok::Cmp(match (c, eq) {
                        ('<', false) => CmpOp::Lt,
                        ('<', true) => CmpOp::Le,
                        ('>', false) => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    })
                }
                '\'' | '"' => self.string(c, line, column)?,
                '-' | '0'..='9' => self.number(line, column)?,
                c if c.is_alphabetic() || c == '_' => self.word(),
                other => return Err(self.error(line, column, format!("unexpected character {other:?}"))),
            };
            out.push(Spanned { tok, line, column });
        }
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn string(&mut self, quote: char, line: usize, column: usize) -> Result<Tok, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(line, column, "unterminated string literal".into())),
                Some('\\') => match self.bump() {
                    Some(c) => s.push(c),
                    None => return Err(self.error(line, column, "unterminated string literal".into())),
                },
                Some(c) if c == quote => return Ok(Tok::Str(s)),
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let start = self.offset();
        if self.peek() == Some('-') {
            self.bump();
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error(line, column, "expected digits after `-`".into()));
            }
        }
        let mut decimal = false;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') {
            decimal = true;
            self.bump();
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error(line, column, "expected digits after decimal point".into()));
            }
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            decimal = true;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error(line, column, "expected exponent digits".into()));
            }
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        let text = &self.src[start..self.offset()];
        if decimal {
            text.parse::<f64>()
                .ok()
                .filter(|d| d.is_finite())
                .map(Tok::Dec)
                .ok_or_else(|| self.error(line, column, format!("invalid decimal literal {text}")))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.error(line, column, format!("integer literal {text} out of range")))
        }
    }

    fn word(&mut self) -> Tok {
        let start = self.offset();
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.') {
            self.bump();
        }
        match &self.src[start..self.offset()] {
            "and" => Tok::And,
            "or" => Tok::Or,
            "not" => Tok::Not,
            "implies" => Tok::Implies,
            "in" => Tok::In,
            "notIn" => Tok::NotIn,
            "substring" => Tok::Substring,
            "startswith" => Tok::StartsWith,
            "endswith" => Tok::EndsWith,
            "date" => Tok::Date,
            w => Tok::Ident(w.to_string()),
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

const TERM_START: &[&str] = &["identifier", "literal", "`substring`", "`date`"];
const ATOM_START: &[&str] = &[
    "`not`",
    "`(`",
    "`startswith`",
    "`endswith`",
    "identifier",
    "literal",
    "`substring`",
    "`date`",
];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let at = &self.toks[self.pos];
        ParseError {
            line: at.line,
            column: at.column,
            message: format!("unexpected {}", at.tok),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn implies(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.next();
            let rhs = self.implies()?;
            return Ok(Expr::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.and()?;
        while *self.peek() == Tok::Or {
            self.next();
            e = Expr::or(e, self.and()?);
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.not()?;
        while *self.peek() == Tok::And {
            self.next();
            e = Expr::and(e, self.not()?);
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Not {
            self.next();
            return Ok(Expr::not(self.not()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                let e = self.implies()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::StartsWith | Tok::EndsWith => {
                let op = if self.next() == Tok::StartsWith { StringOp::StartsWith } else { StringOp::EndsWith };
                self.expect(Tok::LParen, "`(`")?;
                let var = self.ident()?;
                self.expect(Tok::Comma, "`,`")?;
                let pattern = match self.peek().clone() {
                    Tok::Str(s) => {
                        self.next();
                        s
                    }
                    _ => return Err(self.error(&["string literal"])),
                };
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::StringPredicate { op, var, pattern })
            }
            Tok::Ident(_) | Tok::Int(_) | Tok::Dec(_) | Tok::Str(_) | Tok::Substring | Tok::Date => {
                let lhs = self.term()?;
                match self.peek().clone() {
                    Tok::Cmp(op) => {
                        self.next();
                        let rhs = self.term()?;
                        Ok(Expr::Compare { op, lhs, rhs })
                    }
                    Tok::In | Tok::NotIn => {
                        let op = if self.next() == Tok::In { InclusionOp::In } else { InclusionOp::NotIn };
                        let list = self.list()?;
                        Ok(Expr::Inclusion { op, term: lhs, list })
                    }
                    _ => Err(self.error(&["comparison operator", "`in`", "`notIn`"])),
                }
            }
            _ => Err(self.error(ATOM_START)),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.next();
                Ok(name)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn index(&mut self) -> Result<u32, ParseError> {
        match self.peek().clone() {
            Tok::Int(i) if (0..=i64::from(u32::MAX)).contains(&i) => {
                self.next();
                Ok(i as u32)
            }
            _ => Err(self.error(&["non-negative integer"])),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.next();
                Ok(Term::Var(name))
            }
            Tok::Substring => {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let var = self.ident()?;
                self.expect(Tok::Comma, "`,`")?;
                let start = self.index()?;
                self.expect(Tok::Comma, "`,`")?;
                let end = self.index()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Term::Substring { var, start, end })
            }
            Tok::Int(_) | Tok::Dec(_) | Tok::Str(_) | Tok::Date => Ok(Term::Lit(self.literal()?)),
            _ => Err(self.error(TERM_START)),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.next();
                Ok(Literal::Integer(i))
            }
            Tok::Dec(d) => {
                self.next();
                Ok(Literal::Decimal(d))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Literal::Text(s))
            }
            Tok::Date => {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let at = self.pos;
                let text = match self.peek().clone() {
                    Tok::Str(s) => {
                        self.next();
                        s
                    }
                    _ => return Err(self.error(&["string literal"])),
                };
                let date = parse_iso_date(&text).ok_or_else(|| {
                    let t = &self.toks[at];
                    ParseError {
                        line: t.line,
                        column: t.column,
                        message: format!("malformed date literal {text:?}, expected YYYY-MM-DD"),
                        expected: Vec::new(),
                    }
                })?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Literal::Date(date))
            }
            _ => Err(self.error(&["literal"])),
        }
    }

    fn list(&mut self) -> Result<Vec<Literal>, ParseError> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut items = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.next();
            items.push(self.literal()?);
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(items)
    }
}

/// Parses rule text into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    if toks.len() == 1 {
        return Err(ParseError {
            line: toks[0].line,
            column: toks[0].column,
            message: "empty rule text".into(),
            expected: ATOM_START.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.implies()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.error(&["`and`", "`or`", "`implies`", "end of input"]));
    }
    Ok(expr)
}
