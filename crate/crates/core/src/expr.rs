//! Deterministic mechanism expressions.
//!
//! Grammar (loosest binding first):
//!
//! ```text
//! expr    := "if" expr "then" expr "else" expr
//!          | "case" expr "of" "inl" ident "=>" expr "|" "inr" ident "=>" expr
//!          | sum ("<" sum)?
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | postfix
//! postfix := primary ("." ("0" | "1"))*
//! primary := "$" digits | int | real | ident | "()" | "(" expr ("," expr)* ")"
//!          | ("neg" | "exp" | "ln") "(" expr ")" | ("min" | "max") "(" expr "," expr ")"
//!          | ("inl" | "inr") "(" expr ")" | "if" .. | "case" ..
//! ```
//!
//! `$i` refers to the i-th bound input of the enclosing [`DetMap`]. `<`
//! yields a `Finite(2)` value; conditionals treat any nonzero integer as true.

use std::fmt;

use thiserror::Error;

use crate::space::{membership, Space, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result in {0}")]
    NonFinite(String),
    #[error("integer overflow")]
    Overflow,
    #[error("value {value} does not fit {space}")]
    OutOfRange { value: String, space: String },
    #[error("input {value} does not match binder of {space}")]
    BadInput { value: String, space: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Exp,
    Ln,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Input(usize),
    Var(String),
    Int(i64),
    Real(f64),
    Unit,
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Tuple(Box<Expr>, Box<Expr>),
    /// `.0` is `false`, `.1` is `true`.
    Proj(Box<Expr>, bool),
    Inl(Box<Expr>),
    Inr(Box<Expr>),
    Case { scrutinee: Box<Expr>, left_var: String, left: Box<Expr>, right_var: String, right: Box<Expr> },
    If { cond: Box<Expr>, then: Box<Expr>, otherwise: Box<Expr> },
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn tuple(a: Expr, b: Expr) -> Self {
        Expr::Tuple(Box::new(a), Box::new(b))
    }

    pub fn tuple_of<I: IntoIterator<Item = Expr>>(parts: I) -> Self {
        let mut iter = parts.into_iter();
        match iter.next() {
            None => Expr::Unit,
            Some(first) => iter.fold(first, Expr::tuple),
        }
    }

    pub fn fst(e: Expr) -> Self {
        Expr::Proj(Box::new(e), false)
    }

    pub fn snd(e: Expr) -> Self {
        Expr::Proj(Box::new(e), true)
    }

    pub fn if_then_else(cond: Expr, then: Expr, otherwise: Expr) -> Self {
        Expr::If { cond: Box::new(cond), then: Box::new(then), otherwise: Box::new(otherwise) }
    }

    /// Builds the projection of component `i` out of a left-nested tuple of
    /// `arity` components rooted at `base`.
    pub fn component(base: Expr, arity: usize, i: usize) -> Self {
        assert!(i < arity);
        if arity == 1 {
            return base;
        }
        let mut e = base;
        // walk down the left spine to the pair whose right child is i
        let depth = if i == 0 { arity - 1 } else { arity - i };
        for _ in 1..depth {
            e = Expr::fst(e);
        }
        if i == 0 {
            Expr::fst(e)
        } else {
            Expr::snd(e)
        }
    }

    /// Whether the expression references any `$i` input.
    pub fn uses_inputs(&self) -> bool {
        match self {
            Expr::Input(_) => true,
            Expr::Var(_) | Expr::Int(_) | Expr::Real(_) | Expr::Unit => false,
            Expr::Binary(_, a, b) | Expr::Tuple(a, b) => a.uses_inputs() || b.uses_inputs(),
            Expr::Unary(_, a) | Expr::Proj(a, _) | Expr::Inl(a) | Expr::Inr(a) => a.uses_inputs(),
            Expr::Case { scrutinee, left, right, .. } => {
                scrutinee.uses_inputs() || left.uses_inputs() || right.uses_inputs()
            }
            Expr::If { cond, then, otherwise } => {
                cond.uses_inputs() || then.uses_inputs() || otherwise.uses_inputs()
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Input(i) => write!(f, "${i}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Int(i) if *i < 0 => write!(f, "({i})"),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Real(x) if x.is_sign_negative() => write!(f, "({x:?})"),
            Expr::Real(x) => write!(f, "{x:?}"),
            Expr::Unit => write!(f, "()"),
            Expr::Binary(op, a, b) => match op {
                BinOp::Add => write!(f, "({a} + {b})"),
                BinOp::Sub => write!(f, "({a} - {b})"),
                BinOp::Mul => write!(f, "({a} * {b})"),
                BinOp::Div => write!(f, "({a} / {b})"),
                BinOp::Lt => write!(f, "({a} < {b})"),
                BinOp::Min => write!(f, "min({a}, {b})"),
                BinOp::Max => write!(f, "max({a}, {b})"),
            },
            Expr::Unary(op, a) => match op {
                UnOp::Neg => write!(f, "neg({a})"),
                UnOp::Exp => write!(f, "exp({a})"),
                UnOp::Ln => write!(f, "ln({a})"),
            },
            Expr::Tuple(a, b) => write!(f, "({a}, {b})"),
            Expr::Proj(a, side) => write!(f, "{a}.{}", *side as u8),
            Expr::Inl(a) => write!(f, "inl({a})"),
            Expr::Inr(a) => write!(f, "inr({a})"),
            Expr::Case { scrutinee, left_var, left, right_var, right } => {
                write!(f, "(case {scrutinee} of inl {left_var} => {left} | inr {right_var} => {right})")
            }
            Expr::If { cond, then, otherwise } => write!(f, "(if {cond} then {then} else {otherwise})"),
        }
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Input(usize),
    Ident(String),
    Int(i64),
    Real(f64),
    LParen,
    RParen,
    Comma,
    Dot,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Arrow,
    Bar,
    Eof,
}

struct Lexed {
    tok: Tok,
    col: usize,
}

fn syntax(col: usize, msg: impl Into<String>) -> ExprError {
    ExprError::Syntax { col, msg: msg.into() }
}

fn lex(src: &str) -> Result<Vec<Lexed>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out: Vec<Lexed> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let after_dot = matches!(out.last(), Some(Lexed { tok: Tok::Dot, .. }));
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) || after_dot || ends_operand(&out) => {
                Some(Tok::Dot)
            }
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '<' => Some(Tok::Lt),
            '|' => Some(Tok::Bar),
            '⇒' => Some(Tok::Arrow),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Lexed { tok, col });
            i += 1;
            continue;
        }
        if c == '=' {
            if chars.get(i + 1) == Some(&'>') {
                out.push(Lexed { tok: Tok::Arrow, col });
                i += 2;
                continue;
            }
            return Err(syntax(col, "expected '=>'"));
        }
        if c == '$' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j == start {
                return Err(syntax(col, "expected input index after '$'"));
            }
            let digits: String = chars[start..j].iter().collect();
            let idx = digits.parse().map_err(|_| syntax(col, "input index too large"))?;
            out.push(Lexed { tok: Tok::Input(idx), col });
            i = j;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let mut is_real = false;
            if !after_dot {
                if j < chars.len() && chars[j] == '.' && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                    is_real = true;
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        is_real = true;
                        j = k;
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
            } else if j == start {
                return Err(syntax(col, "expected projection index"));
            }
            let text: String = chars[start..j].iter().collect();
            let tok = if is_real {
                Tok::Real(text.parse().map_err(|_| syntax(col, format!("bad number '{text}'")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| syntax(col, format!("integer '{text}' out of range")))?)
            };
            out.push(Lexed { tok, col });
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push(Lexed { tok: Tok::Ident(chars[start..j].iter().collect()), col });
            i = j;
            continue;
        }
        return Err(syntax(col, format!("unexpected character '{c}'")));
    }
    out.push(Lexed { tok: Tok::Eof, col: chars.len() + 1 });
    Ok(out)
}

fn ends_operand(out: &[Lexed]) -> bool {
    matches!(
        out.last().map(|l| &l.tok),
        Some(Tok::Input(_) | Tok::Ident(_) | Tok::RParen | Tok::Int(_) | Tok::Real(_))
    )
}

// ---------------------------------------------------------------------------
// parser

const KEYWORDS: &[&str] = &["if", "then", "else", "case", "of", "inl", "inr", "neg", "exp", "ln", "min", "max"];

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn col(&self) -> usize {
        self.toks[self.pos].col
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.col(), format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ExprError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(syntax(self.col(), format!("expected '{kw}', found {}", describe(other)))),
        }
    }

    fn ident(&mut self) -> Result<String, ExprError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => Err(syntax(self.col(), format!("expected variable name, found {}", describe(&other)))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Ident(s) if s == "if" => self.if_expr(),
            Tok::Ident(s) if s == "case" => self.case_expr(),
            _ => self.comparison(),
        }
    }

    fn if_expr(&mut self) -> Result<Expr, ExprError> {
        self.keyword("if")?;
        let cond = self.expr()?;
        self.keyword("then")?;
        let then = self.expr()?;
        self.keyword("else")?;
        let otherwise = self.expr()?;
        Ok(Expr::if_then_else(cond, then, otherwise))
    }

    fn case_expr(&mut self) -> Result<Expr, ExprError> {
        self.keyword("case")?;
        let scrutinee = self.expr()?;
        self.keyword("of")?;
        self.keyword("inl")?;
        let left_var = self.ident()?;
        self.expect(&Tok::Arrow, "'=>'")?;
        let left = self.expr()?;
        self.expect(&Tok::Bar, "'|'")?;
        self.keyword("inr")?;
        let right_var = self.ident()?;
        self.expect(&Tok::Arrow, "'=>'")?;
        let right = self.expr()?;
        Ok(Expr::Case {
            scrutinee: Box::new(scrutinee),
            left_var,
            left: Box::new(left),
            right_var,
            right: Box::new(right),
        })
    }

    fn comparison(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.climb(1)?;
        if self.peek() == &Tok::Lt {
            self.bump();
            let rhs = self.climb(1)?;
            if self.peek() == &Tok::Lt {
                return Err(syntax(self.col(), "comparisons do not chain"));
            }
            return Ok(Expr::bin(BinOp::Lt, lhs, rhs));
        }
        Ok(lhs)
    }

    fn binop(tok: &Tok) -> Option<(BinOp, u8)> {
        match tok {
            Tok::Plus => Some((BinOp::Add, 1)),
            Tok::Minus => Some((BinOp::Sub, 1)),
            Tok::Star => Some((BinOp::Mul, 2)),
            Tok::Slash => Some((BinOp::Div, 2)),
            _ => None,
        }
    }

    // precedence climbing, all operators left-associative
    fn climb(&mut self, min_prec: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = Self::binop(self.peek()) {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.climb(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == &Tok::Minus {
            self.bump();
            let literal = match *self.peek() {
                Tok::Int(i) => Some(Expr::Int(i.checked_neg().ok_or_else(|| syntax(self.col(), "integer overflow"))?)),
                Tok::Real(x) => Some(Expr::Real(-x)),
                _ => None,
            };
            if let Some(lit) = literal {
                self.bump();
                return self.postfix(lit);
            }
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(inner)));
        }
        let base = self.primary()?;
        self.postfix(base)
    }

    fn postfix(&mut self, mut base: Expr) -> Result<Expr, ExprError> {
        while self.peek() == &Tok::Dot {
            self.bump();
            let col = self.col();
            match self.bump() {
                Tok::Int(0) => base = Expr::fst(base),
                Tok::Int(1) => base = Expr::snd(base),
                other => return Err(syntax(col, format!("projection must be .0 or .1, found {}", describe(&other)))),
            }
        }
        Ok(base)
    }

    fn call_args(&mut self, n: usize) -> Result<Vec<Expr>, ExprError> {
        self.expect(&Tok::LParen, "'('")?;
        let mut args = vec![self.expr()?];
        while args.len() < n {
            self.expect(&Tok::Comma, "','")?;
            args.push(self.expr()?);
        }
        self.expect(&Tok::RParen, "')'")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let col = self.col();
        match self.peek().clone() {
            Tok::Input(i) => {
                self.bump();
                Ok(Expr::Input(i))
            }
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Int(i))
            }
            Tok::Real(x) => {
                self.bump();
                Ok(Expr::Real(x))
            }
            Tok::LParen => {
                self.bump();
                if self.peek() == &Tok::RParen {
                    self.bump();
                    return Ok(Expr::Unit);
                }
                let mut items = vec![self.expr()?];
                while self.peek() == &Tok::Comma {
                    self.bump();
                    items.push(self.expr()?);
                }
                self.expect(&Tok::RParen, "')'")?;
                Ok(Expr::tuple_of(items))
            }
            Tok::Ident(name) => match name.as_str() {
                "if" => self.if_expr(),
                "case" => self.case_expr(),
                "neg" | "exp" | "ln" => {
                    self.bump();
                    let op = match name.as_str() {
                        "neg" => UnOp::Neg,
                        "exp" => UnOp::Exp,
                        _ => UnOp::Ln,
                    };
                    let mut args = self.call_args(1)?;
                    Ok(Expr::Unary(op, Box::new(args.remove(0))))
                }
                "min" | "max" => {
                    self.bump();
                    let op = if name == "min" { BinOp::Min } else { BinOp::Max };
                    let mut args = self.call_args(2)?;
                    let b = args.pop().expect("two args");
                    let a = args.pop().expect("two args");
                    Ok(Expr::bin(op, a, b))
                }
                "inl" | "inr" => {
                    self.bump();
                    let mut args = self.call_args(1)?;
                    let inner = Box::new(args.remove(0));
                    Ok(if name == "inl" { Expr::Inl(inner) } else { Expr::Inr(inner) })
                }
                kw if KEYWORDS.contains(&kw) => Err(syntax(col, format!("unexpected keyword '{kw}'"))),
                _ => {
                    self.bump();
                    Ok(Expr::Var(name))
                }
            },
            other => Err(syntax(col, format!("expected an expression, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Input(i) => format!("'${i}'"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(i) => format!("'{i}'"),
        Tok::Real(x) => format!("'{x}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Dot => "'.'".into(),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::Lt => "'<'".into(),
        Tok::Arrow => "'=>'".into(),
        Tok::Bar => "'|'".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses an expression. Never panics on malformed input.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek() != &Tok::Eof {
        return Err(syntax(p.col(), format!("unexpected {}", describe(p.peek()))));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// shapes

/// How a [`DetMap`]'s domain value is destructured into `$i` inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Binder {
    Var(usize),
    Pair(Box<Binder>, Box<Binder>),
    Ignore,
}

impl Binder {
    /// `$offset .. $offset+n-1` bound over a left-nested tuple of `n` parts.
    pub fn flat_from(offset: usize, n: usize) -> Self {
        match n {
            0 => Binder::Ignore,
            _ => (offset + 1..offset + n).fold(Binder::Var(offset), |acc, i| {
                Binder::Pair(Box::new(acc), Box::new(Binder::Var(i)))
            }),
        }
    }

    pub fn flat(n: usize) -> Self {
        Self::flat_from(0, n)
    }

    fn bind_types(&self, dom: &Space, out: &mut Vec<Option<Space>>) -> Result<(), ExprError> {
        match (self, dom) {
            (Binder::Ignore, _) => Ok(()),
            (Binder::Var(i), s) => {
                if out.len() <= *i {
                    out.resize(*i + 1, None);
                }
                out[*i] = Some(s.clone());
                Ok(())
            }
            (Binder::Pair(a, b), Space::Product(sa, sb)) => {
                a.bind_types(sa, out)?;
                b.bind_types(sb, out)
            }
            (Binder::Pair(..), s) => Err(ExprError::Shape(format!("binder expects a product, domain is {s}"))),
        }
    }

    fn bind_values(&self, v: &Value, out: &mut Vec<Value>) -> bool {
        match (self, v) {
            (Binder::Ignore, _) => true,
            (Binder::Var(i), v) => {
                if out.len() <= *i {
                    out.resize(*i + 1, Value::Unit);
                }
                out[*i] = v.clone();
                true
            }
            (Binder::Pair(a, b), Value::Tuple(x, y)) => a.bind_values(x, out) && b.bind_values(y, out),
            _ => false,
        }
    }
}

fn int_like(s: &Space) -> bool {
    matches!(s, Space::Finite(_) | Space::Countable)
}

fn numeric(s: &Space) -> bool {
    int_like(s) || *s == Space::Real(1)
}

/// Least common shape of two branches.
fn join(a: &Space, b: &Space) -> Option<Space> {
    if a == b {
        return Some(a.clone());
    }
    match (a, b) {
        (Space::Finite(m), Space::Finite(n)) => Some(Space::Finite(*m.max(n))),
        (x, y) if int_like(x) && int_like(y) => Some(Space::Countable),
        (x, y) if numeric(x) && numeric(y) => Some(Space::Real(1)),
        (Space::Product(a1, b1), Space::Product(a2, b2)) => Some(Space::product(join(a1, a2)?, join(b1, b2)?)),
        (Space::Coproduct(a1, b1), Space::Coproduct(a2, b2)) => {
            Some(Space::coproduct(join(a1, a2)?, join(b1, b2)?))
        }
        _ => None,
    }
}

/// Static compatibility; integer range checks are deferred to evaluation.
fn fits(actual: &Space, expected: &Space) -> bool {
    if actual == expected {
        return true;
    }
    match (actual, expected) {
        (a, Space::Finite(_) | Space::Countable) if int_like(a) => true,
        (a, Space::Real(1)) if int_like(a) => true,
        (Space::Product(a1, b1), Space::Product(a2, b2)) | (Space::Coproduct(a1, b1), Space::Coproduct(a2, b2)) => {
            fits(a1, a2) && fits(b1, b2)
        }
        _ => false,
    }
}

/// Coerces an evaluated value into `space` (integers widen to reals,
/// integer ranges are checked).
pub fn conform(v: Value, space: &Space) -> Result<Value, ExprError> {
    let out_of_range = |v: &Value| ExprError::OutOfRange { value: v.to_string(), space: space.to_string() };
    match (v, space) {
        (Value::Int(i), Space::Real(1)) => Ok(Value::Real(i as f64)),
        (Value::Tuple(a, b), Space::Product(sa, sb)) => Ok(Value::tuple(conform(*a, sa)?, conform(*b, sb)?)),
        (Value::InL(a), Space::Coproduct(sa, _)) => Ok(Value::inl(conform(*a, sa)?)),
        (Value::InR(b), Space::Coproduct(_, sb)) => Ok(Value::inr(conform(*b, sb)?)),
        (v, s) => {
            if membership(s, &v) {
                Ok(v)
            } else {
                Err(out_of_range(&v))
            }
        }
    }
}

struct Checker<'a> {
    inputs: &'a [Option<Space>],
    locals: Vec<(String, Space)>,
}

impl Checker<'_> {
    fn lookup(&self, name: &str) -> Result<Space, ExprError> {
        self.locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| ExprError::Shape(format!("unbound variable '{name}'")))
    }

    fn cond(&mut self, c: &Expr) -> Result<(), ExprError> {
        let s = self.synth(c)?;
        if !int_like(&s) {
            return Err(ExprError::Shape(format!("condition `{c}` has shape {s}, expected an integer")));
        }
        Ok(())
    }

    fn with_local<T>(&mut self, name: &str, s: Space, f: impl FnOnce(&mut Self) -> T) -> T {
        self.locals.push((name.to_string(), s));
        let out = f(self);
        self.locals.pop();
        out
    }

    fn coproduct_of(&mut self, e: &Expr) -> Result<(Space, Space), ExprError> {
        match self.synth(e)? {
            Space::Coproduct(a, b) => Ok((*a, *b)),
            s => Err(ExprError::Shape(format!("case on `{e}` of shape {s}, expected a coproduct"))),
        }
    }

    fn synth(&mut self, e: &Expr) -> Result<Space, ExprError> {
        match e {
            Expr::Input(i) => self
                .inputs
                .get(*i)
                .cloned()
                .flatten()
                .ok_or_else(|| ExprError::Shape(format!("input ${i} is not bound"))),
            Expr::Var(name) => self.lookup(name),
            Expr::Int(_) => Ok(Space::Countable),
            Expr::Real(_) => Ok(Space::Real(1)),
            Expr::Unit => Ok(Space::Unit),
            Expr::Binary(op, a, b) => {
                let sa = self.synth(a)?;
                let sb = self.synth(b)?;
                if !numeric(&sa) || !numeric(&sb) {
                    return Err(ExprError::Shape(format!("operands of `{e}` have shapes {sa} and {sb}, expected numbers")));
                }
                Ok(match op {
                    BinOp::Lt => Space::Finite(2),
                    BinOp::Div => Space::Real(1),
                    BinOp::Min | BinOp::Max => join(&sa, &sb).expect("numeric shapes join"),
                    _ if int_like(&sa) && int_like(&sb) => Space::Countable,
                    _ => Space::Real(1),
                })
            }
            Expr::Unary(op, a) => {
                let sa = self.synth(a)?;
                if !numeric(&sa) {
                    return Err(ExprError::Shape(format!("operand of `{e}` has shape {sa}, expected a number")));
                }
                Ok(match op {
                    UnOp::Neg if int_like(&sa) => Space::Countable,
                    _ => Space::Real(1),
                })
            }
            Expr::Tuple(a, b) => Ok(Space::product(self.synth(a)?, self.synth(b)?)),
            Expr::Proj(a, side) => match self.synth(a)? {
                Space::Product(l, r) => Ok(if *side { *r } else { *l }),
                s => Err(ExprError::Shape(format!("projection `{e}` of non-product shape {s}"))),
            },
            Expr::Inl(_) | Expr::Inr(_) => {
                Err(ExprError::Shape(format!("cannot infer the coproduct shape of `{e}` without context")))
            }
            Expr::Case { scrutinee, left_var, left, right_var, right } => {
                let (sl, sr) = self.coproduct_of(scrutinee)?;
                let tl = self.with_local(left_var, sl, |c| c.synth(left))?;
                let tr = self.with_local(right_var, sr, |c| c.synth(right))?;
                join(&tl, &tr).ok_or_else(|| ExprError::Shape(format!("case branches have shapes {tl} and {tr}")))
            }
            Expr::If { cond, then, otherwise } => {
                self.cond(cond)?;
                let a = self.synth(then)?;
                let b = self.synth(otherwise)?;
                join(&a, &b).ok_or_else(|| ExprError::Shape(format!("if branches have shapes {a} and {b}")))
            }
        }
    }

    fn check(&mut self, e: &Expr, expected: &Space) -> Result<(), ExprError> {
        match (e, expected) {
            (Expr::Tuple(a, b), Space::Product(sa, sb)) => {
                self.check(a, sa)?;
                self.check(b, sb)
            }
            (Expr::Inl(a), Space::Coproduct(sa, _)) => self.check(a, sa),
            (Expr::Inr(b), Space::Coproduct(_, sb)) => self.check(b, sb),
            (Expr::If { cond, then, otherwise }, _) => {
                self.cond(cond)?;
                self.check(then, expected)?;
                self.check(otherwise, expected)
            }
            (Expr::Case { scrutinee, left_var, left, right_var, right }, _) => {
                let (sl, sr) = self.coproduct_of(scrutinee)?;
                self.with_local(left_var, sl, |c| c.check(left, expected))?;
                self.with_local(right_var, sr, |c| c.check(right, expected))
            }
            _ => {
                let actual = self.synth(e)?;
                if fits(&actual, expected) {
                    Ok(())
                } else {
                    Err(ExprError::Shape(format!("`{e}` has shape {actual}, expected {expected}")))
                }
            }
        }
    }
}

/// Statically checks `e` against `expected` given `$i` input shapes.
pub fn check_expr(e: &Expr, inputs: &[Option<Space>], expected: &Space) -> Result<(), ExprError> {
    Checker { inputs, locals: Vec::new() }.check(e, expected)
}

/// Synthesizes the shape of `e` given `$i` input shapes.
pub fn synth_expr(e: &Expr, inputs: &[Option<Space>]) -> Result<Space, ExprError> {
    Checker { inputs, locals: Vec::new() }.synth(e)
}

// ---------------------------------------------------------------------------
// evaluation

fn finite(x: f64, what: &Expr) -> Result<Value, ExprError> {
    if x.is_finite() {
        Ok(Value::Real(x))
    } else {
        Err(ExprError::NonFinite(what.to_string()))
    }
}

struct Env<'a> {
    inputs: &'a [Value],
    locals: Vec<(&'a str, Value)>,
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("shape-checked numeric operand")
}

fn truthy(v: &Value) -> bool {
    v.as_int().expect("shape-checked integer condition") != 0
}

fn eval_in<'a>(e: &'a Expr, env: &mut Env<'a>) -> Result<Value, ExprError> {
    match e {
        Expr::Input(i) => Ok(env.inputs[*i].clone()),
        Expr::Var(name) => Ok(env
            .locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .expect("shape-checked variable")),
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Real(x) => Ok(Value::Real(*x)),
        Expr::Unit => Ok(Value::Unit),
        Expr::Binary(op, a, b) => {
            let va = eval_in(a, env)?;
            let vb = eval_in(b, env)?;
            if let (Value::Int(x), Value::Int(y)) = (&va, &vb) {
                let (x, y) = (*x, *y);
                let r = match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                    BinOp::Lt => Some((x < y) as i64),
                    BinOp::Min => Some(x.min(y)),
                    BinOp::Max => Some(x.max(y)),
                    BinOp::Div => {
                        if y == 0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        return finite(x as f64 / y as f64, e);
                    }
                };
                return r.map(Value::Int).ok_or(ExprError::Overflow);
            }
            let (x, y) = (num(&va), num(&vb));
            match op {
                BinOp::Add => finite(x + y, e),
                BinOp::Sub => finite(x - y, e),
                BinOp::Mul => finite(x * y, e),
                BinOp::Div => {
                    if y == 0.0 {
                        Err(ExprError::DivisionByZero)
                    } else {
                        finite(x / y, e)
                    }
                }
                BinOp::Lt => Ok(Value::Int((x < y) as i64)),
                BinOp::Min => finite(x.min(y), e),
                BinOp::Max => finite(x.max(y), e),
            }
        }
        Expr::Unary(op, a) => {
            let va = eval_in(a, env)?;
            match (op, va) {
                (UnOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or(ExprError::Overflow),
                (UnOp::Neg, v) => finite(-num(&v), e),
                (UnOp::Exp, v) => finite(num(&v).exp(), e),
                (UnOp::Ln, v) => finite(num(&v).ln(), e),
            }
        }
        Expr::Tuple(a, b) => Ok(Value::tuple(eval_in(a, env)?, eval_in(b, env)?)),
        Expr::Proj(a, side) => match eval_in(a, env)? {
            Value::Tuple(l, r) => Ok(if *side { *r } else { *l }),
            v => Err(ExprError::Shape(format!("projection of non-tuple {v}"))),
        },
        Expr::Inl(a) => Ok(Value::inl(eval_in(a, env)?)),
        Expr::Inr(a) => Ok(Value::inr(eval_in(a, env)?)),
        Expr::Case { scrutinee, left_var, left, right_var, right } => {
            let (name, body, inner) = match eval_in(scrutinee, env)? {
                Value::InL(v) => (left_var, left, *v),
                Value::InR(v) => (right_var, right, *v),
                v => return Err(ExprError::Shape(format!("case on non-injection {v}"))),
            };
            env.locals.push((name.as_str(), inner));
            let out = eval_in(body, env);
            env.locals.pop();
            out
        }
        Expr::If { cond, then, otherwise } => {
            if truthy(&eval_in(cond, env)?) {
                eval_in(then, env)
            } else {
                eval_in(otherwise, env)
            }
        }
    }
}

/// A total deterministic map between spaces given by an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct DetMap {
    dom: Space,
    cod: Space,
    binder: Binder,
    body: Expr,
    arity: usize,
}

impl DetMap {
    /// Shape-checks `body` and builds the map.
    pub fn new(dom: Space, cod: Space, binder: Binder, body: Expr) -> Result<Self, ExprError> {
        let mut inputs = Vec::new();
        binder.bind_types(&dom, &mut inputs)?;
        check_expr(&body, &inputs, &cod)?;
        let arity = inputs.len();
        Ok(DetMap { dom, cod, binder, body, arity })
    }

    /// A map whose inputs `$0..$n-1` are the listed spaces, with domain their
    /// left-nested product.
    pub fn over_inputs(inputs: &[Space], cod: Space, body: Expr) -> Result<Self, ExprError> {
        Self::new(Space::product_of(inputs.iter().cloned()), cod, Binder::flat(inputs.len()), body)
    }

    /// Parses and checks `src` as a map over the listed inputs.
    pub fn parse(inputs: &[Space], cod: Space, src: &str) -> Result<Self, ExprError> {
        Self::over_inputs(inputs, cod, parse(src)?)
    }

    /// `$0` bound to the whole domain value.
    pub fn whole(dom: Space, cod: Space, body: Expr) -> Result<Self, ExprError> {
        Self::new(dom, cod, Binder::Var(0), body)
    }

    pub fn identity(space: Space) -> Self {
        Self::whole(space.clone(), space, Expr::Input(0)).expect("identity is well shaped")
    }

    pub fn constant(dom: Space, cod: Space, value: &Value) -> Result<Self, ExprError> {
        if !membership(&cod, value) {
            return Err(ExprError::OutOfRange { value: value.to_string(), space: cod.to_string() });
        }
        Self::new(dom, cod, Binder::Ignore, value_expr(value))
    }

    pub fn dom(&self) -> &Space {
        &self.dom
    }

    pub fn cod(&self) -> &Space {
        &self.cod
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    pub fn binder(&self) -> &Binder {
        &self.binder
    }

    pub fn apply(&self, v: &Value) -> Result<Value, ExprError> {
        let mut inputs = Vec::with_capacity(self.arity);
        if !self.binder.bind_values(v, &mut inputs) {
            return Err(ExprError::BadInput { value: v.to_string(), space: self.dom.to_string() });
        }
        let mut env = Env { inputs: &inputs, locals: Vec::new() };
        let out = eval_in(&self.body, &mut env)?;
        conform(out, &self.cod)
    }
}

/// An expression literal denoting `v`.
pub fn value_expr(v: &Value) -> Expr {
    match v {
        Value::Int(i) => Expr::Int(*i),
        Value::Real(x) => Expr::Real(*x),
        Value::Tuple(a, b) => Expr::tuple(value_expr(a), value_expr(b)),
        Value::InL(a) => Expr::Inl(Box::new(value_expr(a))),
        Value::InR(b) => Expr::Inr(Box::new(value_expr(b))),
        Value::Unit => Expr::Unit,
    }
}
