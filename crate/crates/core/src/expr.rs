//! Scalar expressions in one variable, evaluated with second-order dual
//! numbers.
//!
//! Grammar (whitespace is ignored; `theta` and `x` both name the variable,
//! `pi` is the only named constant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | 'theta' | 'x' | 'pi' | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and is right
//! associative. Functions: sin cos tan cot sqrt exp log arcsin arccos abs.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Cot,
    Sqrt,
    Exp,
    Log,
    Arcsin,
    Arccos,
    Abs,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Cot,
        Func::Sqrt,
        Func::Exp,
        Func::Log,
        Func::Arcsin,
        Func::Arccos,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Cot => "cot",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Arcsin => "arcsin",
            Func::Arccos => "arccos",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Var => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Pi | Expr::Var | Expr::Call(..) => 5,
        }
    }

    /// Value and first two θ-derivatives at `theta`.
    pub fn eval_dual2(&self, theta: f64) -> Result<Dual2, EvalError> {
        eval(self, Dual2::var(theta), theta)
    }

    pub fn eval(&self, theta: f64) -> Result<f64, EvalError> {
        self.eval_dual2(theta).map(|d| d.v)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical printer; `parse(&e.to_string())` reproduces `e` exactly.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var => f.write_str("theta"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(BinOp::Pow, a, b) => {
                write_child(f, a, a.precedence() <= 4)?;
                f.write_str("^")?;
                write_child(f, b, b.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                write_child(f, a, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, b, b.precedence() <= p)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {position}: found {found}, expected one of {}", expected.join(", "))]
    Syntax {
        position: usize,
        found: String,
        expected: Vec<&'static str>,
    },

    #[error("unknown identifier '{name}' at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("function '{name}' at position {position} takes 1 argument, got {found}")]
    Arity {
        name: String,
        position: usize,
        found: usize,
    },

    #[error("invalid number '{text}' at position {position}")]
    InvalidNumber { text: String, position: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::UnknownIdentifier { position, .. }
            | ParseError::Arity { position, .. }
            | ParseError::InvalidNumber { position, .. } => *position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Op(c) => write!(f, "'{c}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // exponent only when followed by digits, so "2e" stays 2 then e
            if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let end = if i < chars.len() { chars[i].0 } else { text.len() };
            let s = &text[pos..end];
            let x: f64 = s.parse().map_err(|_| ParseError::InvalidNumber {
                text: s.to_string(),
                position: chars[start].0,
            })?;
            out.push((Tok::Num(x), pos));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = if i < chars.len() { chars[i].0 } else { text.len() };
            out.push((Tok::Ident(text[pos..end].to_string()), pos));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    position: pos,
                    found: format!("'{c}'"),
                    expected: vec!["number", "identifier", "operator", "'('", "')'"],
                })
            }
        };
        out.push((tok, pos));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

const EXPECT_OPERAND: &[&str] = &["number", "identifier", "'('", "'-'"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            position: self.pos(),
            found: self.peek().to_string(),
            expected: expected.to_vec(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(Expr::neg(self.factor()?));
        }
        let base = self.base()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exp = self.factor()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let position = self.pos();
                self.bump();
                match name.as_str() {
                    "theta" | "x" => return Ok(Expr::Var),
                    "pi" => return Ok(Expr::Pi),
                    _ => {}
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError::UnknownIdentifier { name, position });
                };
                if !matches!(self.peek(), Tok::LParen) {
                    return Err(ParseError::Arity {
                        name,
                        position,
                        found: 0,
                    });
                }
                self.bump();
                if matches!(self.peek(), Tok::RParen) {
                    return Err(ParseError::Arity {
                        name,
                        position,
                        found: 0,
                    });
                }
                let mut args = vec![self.expr()?];
                while matches!(self.peek(), Tok::Comma) {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect_rparen()?;
                if args.len() != 1 {
                    return Err(ParseError::Arity {
                        name,
                        position,
                        found: args.len(),
                    });
                }
                Ok(Expr::call(func, args.pop().unwrap()))
            }
            _ => Err(self.unexpected(EXPECT_OPERAND)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::RParen) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&["')'", "operator"]))
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::End) {
        return Err(p.unexpected(&["operator", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// Second-order dual numbers

/// Value with first and second derivative with respect to θ.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Dual2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }

    pub const fn var(theta: f64) -> Self {
        Self::new(theta, 1.0, 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }

    /// Composes a scalar function given as `(f, f', f'')` at `self.v`.
    pub fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self::new(f, df * self.d1, d2f * self.d1 * self.d1 + df * self.d2)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn powi(self, k: i32) -> Self {
        let kf = f64::from(k);
        let f = self.v.powi(k);
        let df = if k == 0 { 0.0 } else { kf * self.v.powi(k - 1) };
        let d2f = if k == 0 || k == 1 {
            0.0
        } else {
            kf * (kf - 1.0) * self.v.powi(k - 2)
        };
        self.chain(f, df, d2f)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(self, o: Dual2) -> Dual2 {
        Dual2::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, o: Dual2) -> Dual2 {
        Dual2::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, o: Dual2) -> Dual2 {
        Dual2::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, o: Dual2) -> Dual2 {
        self * o.recip()
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(self) -> Dual2 {
        Dual2::new(-self.v, -self.d1, -self.d2)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{what} in '{subexpr}' at theta = {theta}")]
    Domain {
        subexpr: String,
        theta: f64,
        what: &'static str,
    },
}

fn domain(e: &Expr, theta: f64, what: &'static str) -> EvalError {
    EvalError::Domain {
        subexpr: e.to_string(),
        theta,
        what,
    }
}

fn eval(e: &Expr, var: Dual2, theta: f64) -> Result<Dual2, EvalError> {
    let out = match e {
        Expr::Num(x) => Dual2::constant(*x),
        Expr::Pi => Dual2::constant(std::f64::consts::PI),
        Expr::Var => var,
        Expr::Neg(a) => -eval(a, var, theta)?,
        Expr::Bin(op, a, b) => {
            let a = eval(a, var, theta)?;
            let b = eval(b, var, theta)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.v == 0.0 {
                        return Err(domain(e, theta, "division by zero"));
                    }
                    a / b
                }
                BinOp::Pow => pow(e, a, b, theta)?,
            }
        }
        Expr::Call(func, a) => {
            let u = eval(a, var, theta)?;
            call(e, *func, u, theta)?
        }
    };
    if !out.is_finite() {
        return Err(domain(e, theta, "non-finite result"));
    }
    Ok(out)
}

fn pow(e: &Expr, a: Dual2, b: Dual2, theta: f64) -> Result<Dual2, EvalError> {
    if b.is_constant() && b.v.fract() == 0.0 && b.v.abs() <= f64::from(i32::MAX) {
        let k = b.v as i32;
        if k < 0 && a.v == 0.0 {
            return Err(domain(e, theta, "negative power of zero"));
        }
        return Ok(a.powi(k));
    }
    if a.v <= 0.0 {
        return Err(domain(e, theta, "non-integer power of a non-positive base"));
    }
    Ok((b * ln(a)).exp())
}

fn ln(a: Dual2) -> Dual2 {
    let r = 1.0 / a.v;
    a.chain(a.v.ln(), r, -r * r)
}

/// Functions whose derivative blows up at a domain edge are accepted there
/// only when the argument is stationary, so the chain rule stays finite.
fn edge_ok(u: Dual2) -> bool {
    u.d1 == 0.0 && u.d2 == 0.0
}

fn call(e: &Expr, func: Func, u: Dual2, theta: f64) -> Result<Dual2, EvalError> {
    Ok(match func {
        Func::Sin => u.sin(),
        Func::Cos => u.cos(),
        Func::Tan => {
            let c = u.v.cos();
            if c == 0.0 {
                return Err(domain(e, theta, "tan pole"));
            }
            let t = u.v.tan();
            let sec2 = 1.0 / (c * c);
            u.chain(t, sec2, 2.0 * sec2 * t)
        }
        Func::Cot => {
            let s = u.v.sin();
            if s == 0.0 {
                return Err(domain(e, theta, "cot pole"));
            }
            let ct = u.v.cos() / s;
            let csc2 = 1.0 / (s * s);
            u.chain(ct, -csc2, 2.0 * csc2 * ct)
        }
        Func::Sqrt => {
            if u.v < 0.0 {
                return Err(domain(e, theta, "sqrt of a negative number"));
            }
            if u.v == 0.0 {
                if !edge_ok(u) {
                    return Err(domain(e, theta, "sqrt derivative undefined at 0"));
                }
                return Ok(Dual2::constant(0.0));
            }
            let s = u.v.sqrt();
            u.chain(s, 0.5 / s, -0.25 / (s * u.v))
        }
        Func::Exp => u.exp(),
        Func::Log => {
            if u.v <= 0.0 {
                return Err(domain(e, theta, "log of a non-positive number"));
            }
            ln(u)
        }
        Func::Arcsin | Func::Arccos => {
            if u.v.abs() > 1.0 {
                return Err(domain(e, theta, "inverse trig argument outside [-1, 1]"));
            }
            let sign = if func == Func::Arcsin { 1.0 } else { -1.0 };
            let f = if func == Func::Arcsin {
                u.v.asin()
            } else {
                u.v.acos()
            };
            let one_minus = 1.0 - u.v * u.v;
            if one_minus == 0.0 {
                if !edge_ok(u) {
                    return Err(domain(e, theta, "inverse trig derivative undefined at +-1"));
                }
                return Ok(Dual2::constant(f));
            }
            let df = 1.0 / one_minus.sqrt();
            let d2f = u.v * df / one_minus;
            u.chain(f, sign * df, sign * d2f)
        }
        Func::Abs => {
            let s = if u.v > 0.0 {
                1.0
            } else if u.v < 0.0 {
                -1.0
            } else {
                0.0
            };
            Dual2::new(u.v.abs(), s * u.d1, s * u.d2)
        }
    })
}
