//! Hand-rolled lexer and recursive-descent parser for blueprint text.
//!
//! Shape of the input:
//!
//! ```text
//! blueprint "tag" revision 3;
//!
//! const NAME = 1.5;
//!
//! scheme name {
//!   param f : [1, 3] [GHz];
//!   param step : {1, 1.5, 2};
//!   outcome watts;
//!   formula draw when f >= 2 : (NAME + f) ^ 2 -> watts;
//! }
//! ```
//!
//! Params, outcomes, and formulas must appear in that order. `//` starts
//! a line comment. Units are raw text between brackets, read in a
//! separate lexer mode so they are not tokenized.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{
    BinOp, Blueprint, CmpOp, Comparison, ConstDecl, Expr, FeasibleSet, Formula, Guard, ParamSpec,
    Scheme,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}, column {col}: {message}")]
    Syntax {
        line: u32,
        col: u32,
        message: String,
    },
    #[error("line {line}, column {col}: unknown identifier `{name}`")]
    UnknownIdentifier { line: u32, col: u32, name: String },
    #[error("line {line}, column {col}: `{name}` is already defined")]
    DuplicateName { line: u32, col: u32, name: String },
    #[error("line {line}, column {col}: interval lower bound exceeds upper bound")]
    EmptyInterval { line: u32, col: u32 },
}

impl ParseError {
    fn syntax(line: u32, col: u32, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }
}

const RESERVED: &[&str] = &[
    "blueprint",
    "revision",
    "const",
    "scheme",
    "param",
    "outcome",
    "formula",
    "when",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Assign,
    Arrow,
    Le,
    Lt,
    Ge,
    Gt,
    EqEq,
    Ne,
    AndAnd,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek_byte()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek_byte() {
                Some(b' ') | Some(b'\t') | Some(b'\r') | Some(b'\n') => {
                    self.bump();
                }
                Some(b'/') if self.bytes.get(self.pos + 1) == Some(&b'/') => {
                    while let Some(b) = self.peek_byte() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let at = |tok| Ok(Token { tok, line, col });
        let b = match self.peek_byte() {
            None => return at(Tok::Eof),
            Some(b) => b,
        };
        match b {
            b'{' => {
                self.bump();
                at(Tok::LBrace)
            }
            b'}' => {
                self.bump();
                at(Tok::RBrace)
            }
            b'(' => {
                self.bump();
                at(Tok::LParen)
            }
            b')' => {
                self.bump();
                at(Tok::RParen)
            }
            b'[' => {
                self.bump();
                at(Tok::LBracket)
            }
            b']' => {
                self.bump();
                at(Tok::RBracket)
            }
            b':' => {
                self.bump();
                at(Tok::Colon)
            }
            b';' => {
                self.bump();
                at(Tok::Semi)
            }
            b',' => {
                self.bump();
                at(Tok::Comma)
            }
            b'+' => {
                self.bump();
                at(Tok::Plus)
            }
            b'*' => {
                self.bump();
                at(Tok::Star)
            }
            b'/' => {
                self.bump();
                at(Tok::Slash)
            }
            b'^' => {
                self.bump();
                at(Tok::Caret)
            }
            b'-' => {
                self.bump();
                if self.peek_byte() == Some(b'>') {
                    self.bump();
                    at(Tok::Arrow)
                } else {
                    at(Tok::Minus)
                }
            }
            b'=' => {
                self.bump();
                if self.peek_byte() == Some(b'=') {
                    self.bump();
                    at(Tok::EqEq)
                } else {
                    at(Tok::Assign)
                }
            }
            b'<' => {
                self.bump();
                if self.peek_byte() == Some(b'=') {
                    self.bump();
                    at(Tok::Le)
                } else {
                    at(Tok::Lt)
                }
            }
            b'>' => {
                self.bump();
                if self.peek_byte() == Some(b'=') {
                    self.bump();
                    at(Tok::Ge)
                } else {
                    at(Tok::Gt)
                }
            }
            b'!' => {
                self.bump();
                if self.peek_byte() == Some(b'=') {
                    self.bump();
                    at(Tok::Ne)
                } else {
                    Err(ParseError::syntax(line, col, "expected `!=`"))
                }
            }
            b'&' => {
                self.bump();
                if self.peek_byte() == Some(b'&') {
                    self.bump();
                    at(Tok::AndAnd)
                } else {
                    Err(ParseError::syntax(line, col, "expected `&&`"))
                }
            }
            b'"' => {
                self.bump();
                let start = self.pos;
                loop {
                    match self.peek_byte() {
                        None | Some(b'\n') => {
                            return Err(ParseError::syntax(line, col, "unterminated string"))
                        }
                        Some(b'"') => break,
                        Some(_) => {
                            self.bump();
                        }
                    }
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos])
                    .map_err(|_| ParseError::syntax(line, col, "string is not valid UTF-8"))?
                    .to_string();
                self.bump(); // closing quote
                at(Tok::Str(text))
            }
            b'0'..=b'9' => {
                let start = self.pos;
                while matches!(self.peek_byte(), Some(b'0'..=b'9')) {
                    self.bump();
                }
                if self.peek_byte() == Some(b'.') {
                    self.bump();
                    if !matches!(self.peek_byte(), Some(b'0'..=b'9')) {
                        return Err(ParseError::syntax(
                            self.line,
                            self.col,
                            "expected digit after decimal point",
                        ));
                    }
                    while matches!(self.peek_byte(), Some(b'0'..=b'9')) {
                        self.bump();
                    }
                }
                if matches!(self.peek_byte(), Some(b'e') | Some(b'E')) {
                    self.bump();
                    if matches!(self.peek_byte(), Some(b'+') | Some(b'-')) {
                        self.bump();
                    }
                    if !matches!(self.peek_byte(), Some(b'0'..=b'9')) {
                        return Err(ParseError::syntax(
                            self.line,
                            self.col,
                            "expected digit in exponent",
                        ));
                    }
                    while matches!(self.peek_byte(), Some(b'0'..=b'9')) {
                        self.bump();
                    }
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::syntax(line, col, format!("bad number `{text}`")))?;
                if !value.is_finite() {
                    return Err(ParseError::syntax(
                        line,
                        col,
                        format!("number `{text}` overflows"),
                    ));
                }
                at(Tok::Number(value))
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = self.pos;
                while matches!(
                    self.peek_byte(),
                    Some(b'A'..=b'Z') | Some(b'a'..=b'z') | Some(b'0'..=b'9') | Some(b'_')
                ) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos])
                    .unwrap()
                    .to_string();
                at(Tok::Ident(text))
            }
            other => Err(ParseError::syntax(
                line,
                col,
                format!("unexpected character `{}`", other as char),
            )),
        }
    }

    /// Raw-mode scan for a unit: called with the cursor just past `[`,
    /// consumes up to and including `]`, returns the trimmed text.
    fn take_unit_text(&mut self) -> Result<String, ParseError> {
        let (line, col) = (self.line, self.col);
        let start = self.pos;
        loop {
            match self.peek_byte() {
                None | Some(b'\n') => {
                    return Err(ParseError::syntax(line, col, "unterminated unit"))
                }
                Some(b']') => break,
                Some(_) => {
                    self.bump();
                }
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| ParseError::syntax(line, col, "unit is not valid UTF-8"))?
            .trim()
            .to_string();
        self.bump(); // `]`
        if text.is_empty() {
            return Err(ParseError::syntax(line, col, "empty unit"));
        }
        Ok(text)
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Token>,
}

pub fn parse_blueprint(text: &str) -> Result<Blueprint, ParseError> {
    Parser::new(text).blueprint()
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            lexer: Lexer::new(src),
            peeked: None,
        }
    }

    fn peek(&mut self) -> Result<&Token, ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Token, ParseError> {
        let t = self.next()?;
        if t.tok != want {
            return Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected {}, found {}", want.describe(), t.tok.describe()),
            ));
        }
        Ok(t)
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Ident(s) if s == word => Ok(()),
            other => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected `{word}`, found {}", other.describe()),
            )),
        }
    }

    fn at_keyword(&mut self, word: &str) -> Result<bool, ParseError> {
        Ok(matches!(&self.peek()?.tok, Tok::Ident(s) if s == word))
    }

    /// An identifier usable as a declared name; reserved words refused.
    fn name(&mut self) -> Result<(String, u32, u32), ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => {
                if RESERVED.contains(&s.as_str()) {
                    Err(ParseError::syntax(
                        t.line,
                        t.col,
                        format!("`{s}` is a reserved word"),
                    ))
                } else {
                    Ok((s, t.line, t.col))
                }
            }
            other => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected a name, found {}", other.describe()),
            )),
        }
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Number(v) => Ok(v),
            Tok::Minus => {
                let t2 = self.next()?;
                match t2.tok {
                    Tok::Number(v) => Ok(-v),
                    other => Err(ParseError::syntax(
                        t2.line,
                        t2.col,
                        format!("expected a number after `-`, found {}", other.describe()),
                    )),
                }
            }
            other => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected a number, found {}", other.describe()),
            )),
        }
    }

    fn blueprint(&mut self) -> Result<Blueprint, ParseError> {
        self.expect_keyword("blueprint")?;
        let t = self.next()?;
        let tag = match t.tok {
            Tok::Str(s) if !s.is_empty() => s,
            Tok::Str(_) => {
                return Err(ParseError::syntax(
                    t.line,
                    t.col,
                    "blueprint tag must be non-empty",
                ))
            }
            other => {
                return Err(ParseError::syntax(
                    t.line,
                    t.col,
                    format!("expected a quoted tag, found {}", other.describe()),
                ))
            }
        };
        self.expect_keyword("revision")?;
        let t = self.next()?;
        let revision = match t.tok {
            Tok::Number(v) if v >= 0.0 && v.fract() == 0.0 && v <= 2f64.powi(53) => v as u64,
            other => {
                return Err(ParseError::syntax(
                    t.line,
                    t.col,
                    format!(
                        "revision must be a non-negative integer, found {}",
                        other.describe()
                    ),
                ))
            }
        };
        self.expect(Tok::Semi)?;

        let mut consts: Vec<ConstDecl> = Vec::new();
        while self.at_keyword("const")? {
            self.next()?;
            let (name, line, col) = self.name()?;
            if consts.iter().any(|c| c.name == name) {
                return Err(ParseError::DuplicateName { line, col, name });
            }
            self.expect(Tok::Assign)?;
            let value = self.signed_number()?;
            self.expect(Tok::Semi)?;
            consts.push(ConstDecl { name, value });
        }
        let const_names: BTreeSet<String> = consts.iter().map(|c| c.name.clone()).collect();

        let mut schemes: Vec<Scheme> = Vec::new();
        loop {
            if self.peek()?.tok == Tok::Eof {
                break;
            }
            if !self.at_keyword("scheme")? {
                let t = self.peek()?;
                let (line, col) = (t.line, t.col);
                let msg = format!(
                    "expected `scheme` or end of input, found {}",
                    t.tok.describe()
                );
                return Err(ParseError::syntax(line, col, msg));
            }
            self.next()?;
            let (sname, line, col) = self.name()?;
            if schemes.iter().any(|s| s.name == sname) {
                return Err(ParseError::DuplicateName {
                    line,
                    col,
                    name: sname,
                });
            }
            schemes.push(self.scheme_body(sname, &const_names)?);
        }
        Ok(Blueprint {
            tag,
            revision,
            consts,
            schemes,
        })
    }

    fn scheme_body(
        &mut self,
        name: String,
        const_names: &BTreeSet<String>,
    ) -> Result<Scheme, ParseError> {
        self.expect(Tok::LBrace)?;

        // One namespace per scheme; no scheme-local name may collide
        // with a blueprint constant.
        let mut local = BTreeSet::new();
        let mut claim = |name: String, line: u32, col: u32| -> Result<String, ParseError> {
            if const_names.contains(&name) || !local.insert(name.clone()) {
                return Err(ParseError::DuplicateName { line, col, name });
            }
            Ok(name)
        };

        let mut params: Vec<ParamSpec> = Vec::new();
        while self.at_keyword("param")? {
            self.next()?;
            let (pname, line, col) = self.name()?;
            let pname = claim(pname, line, col)?;
            self.expect(Tok::Colon)?;
            let feasible = self.feasible_set()?;
            let unit = if self.peek()?.tok == Tok::LBracket {
                self.next()?; // `[` consumed; lexer cursor sits right after it
                debug_assert!(self.peeked.is_none());
                Some(self.lexer.take_unit_text()?)
            } else {
                None
            };
            self.expect(Tok::Semi)?;
            params.push(ParamSpec {
                name: pname,
                feasible,
                unit,
            });
        }

        let mut outcomes: Vec<String> = Vec::new();
        while self.at_keyword("outcome")? {
            self.next()?;
            let (oname, line, col) = self.name()?;
            let oname = claim(oname, line, col)?;
            self.expect(Tok::Semi)?;
            outcomes.push(oname);
        }

        let mut formulas: Vec<Formula> = Vec::new();
        let idents: BTreeSet<String> = params
            .iter()
            .map(|p| p.name.clone())
            .chain(const_names.iter().cloned())
            .collect();
        while self.at_keyword("formula")? {
            self.next()?;
            let (fname, line, col) = self.name()?;
            let fname = claim(fname, line, col)?;
            let guard = if self.at_keyword("when")? {
                self.next()?;
                Some(self.guard(&idents)?)
            } else {
                None
            };
            self.expect(Tok::Colon)?;
            let expr = self.expr(&idents)?;
            self.expect(Tok::Arrow)?;
            let (outcome, oline, ocol) = self.name()?;
            if !outcomes.contains(&outcome) {
                return Err(ParseError::UnknownIdentifier {
                    line: oline,
                    col: ocol,
                    name: outcome,
                });
            }
            self.expect(Tok::Semi)?;
            formulas.push(Formula {
                name: fname,
                guard,
                expr,
                outcome,
            });
        }

        // Anything else that looks like a declaration is out of order.
        {
            let t = self.peek()?;
            let misplaced = matches!(
                &t.tok,
                Tok::Ident(s) if ["param", "outcome", "formula"].contains(&s.as_str())
            );
            if misplaced {
                return Err(ParseError::syntax(
                    t.line,
                    t.col,
                    "declarations must appear in order: params, outcomes, formulas",
                ));
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(Scheme {
            name,
            params,
            outcomes,
            formulas,
        })
    }

    fn feasible_set(&mut self) -> Result<FeasibleSet, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::LBrace => {
                let mut values = vec![self.signed_number()?];
                loop {
                    let t = self.next()?;
                    match t.tok {
                        Tok::Comma => {
                            let v = self.signed_number()?;
                            if values.contains(&v) {
                                return Err(ParseError::syntax(
                                    t.line,
                                    t.col,
                                    format!("duplicate value {v} in feasible set"),
                                ));
                            }
                            values.push(v);
                        }
                        Tok::RBrace => break,
                        other => {
                            return Err(ParseError::syntax(
                                t.line,
                                t.col,
                                format!("expected `,` or `}}`, found {}", other.describe()),
                            ))
                        }
                    }
                }
                Ok(FeasibleSet::Discrete(values))
            }
            Tok::LBracket => {
                let lo = self.signed_number()?;
                self.expect(Tok::Comma)?;
                let hi = self.signed_number()?;
                self.expect(Tok::RBracket)?;
                if lo > hi {
                    return Err(ParseError::EmptyInterval {
                        line: t.line,
                        col: t.col,
                    });
                }
                Ok(FeasibleSet::Interval { lo, hi })
            }
            other => Err(ParseError::syntax(
                t.line,
                t.col,
                format!(
                    "expected `{{values}}` or `[lo, hi]`, found {}",
                    other.describe()
                ),
            )),
        }
    }

    fn guard(&mut self, idents: &BTreeSet<String>) -> Result<Guard, ParseError> {
        let mut clauses = vec![self.comparison(idents)?];
        while self.peek()?.tok == Tok::AndAnd {
            self.next()?;
            clauses.push(self.comparison(idents)?);
        }
        Ok(Guard { clauses })
    }

    fn comparison(&mut self, idents: &BTreeSet<String>) -> Result<Comparison, ParseError> {
        let lhs = self.expr(idents)?;
        let t = self.next()?;
        let op = match t.tok {
            Tok::Le => CmpOp::Le,
            Tok::Lt => CmpOp::Lt,
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            other => {
                return Err(ParseError::syntax(
                    t.line,
                    t.col,
                    format!("expected a comparison operator, found {}", other.describe()),
                ))
            }
        };
        let rhs = self.expr(idents)?;
        Ok(Comparison { lhs, op, rhs })
    }

    fn expr(&mut self, idents: &BTreeSet<String>) -> Result<Expr, ParseError> {
        let mut lhs = self.term(idents)?;
        loop {
            let op = match self.peek()?.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.next()?;
            let rhs = self.term(idents)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self, idents: &BTreeSet<String>) -> Result<Expr, ParseError> {
        let mut lhs = self.power(idents)?;
        loop {
            let op = match self.peek()?.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.next()?;
            let rhs = self.power(idents)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn power(&mut self, idents: &BTreeSet<String>) -> Result<Expr, ParseError> {
        let base = self.primary(idents)?;
        if self.peek()?.tok == Tok::Caret {
            self.next()?;
            // Right-associative: recurse at the same level.
            let exp = self.power(idents)?;
            return Ok(Expr::Binary {
                op: BinOp::Pow,
                lhs: Box::new(base),
                rhs: Box::new(exp),
            });
        }
        Ok(base)
    }

    fn primary(&mut self, idents: &BTreeSet<String>) -> Result<Expr, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Number(v) => Ok(Expr::Num(v)),
            Tok::Minus => {
                let t2 = self.next()?;
                match t2.tok {
                    Tok::Number(v) => Ok(Expr::Num(-v)),
                    other => Err(ParseError::syntax(
                        t2.line,
                        t2.col,
                        format!(
                            "unary minus applies only to numeric literals, found {}",
                            other.describe()
                        ),
                    )),
                }
            }
            Tok::Ident(s) => {
                if RESERVED.contains(&s.as_str()) {
                    return Err(ParseError::syntax(
                        t.line,
                        t.col,
                        format!("`{s}` is a reserved word"),
                    ));
                }
                if !idents.contains(&s) {
                    return Err(ParseError::UnknownIdentifier {
                        line: t.line,
                        col: t.col,
                        name: s,
                    });
                }
                Ok(Expr::Ident(s))
            }
            Tok::LParen => {
                let inner = self.expr(idents)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }
}
