//! Scalar coefficient expressions in the variable `x`.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' atom)?
//! atom   := number | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | log | sqrt | abs | tanh
//! ```
//!
//! The leading `'-' factor` production is an extension so that negative
//! constants can be written without `0-`.

use std::fmt;

use thiserror::Error;

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Syntax error with the byte offset at which parsing stopped.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at position {position}: expected one of {expected:?}, found {found}")]
pub struct ParseError {
    pub position: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

/// Evaluation outside the domain of a built-in function.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot evaluate `{what}` at x = {x}")]
pub struct EvalError {
    pub x: f64,
    pub what: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn error(&mut self, expected: &[&'static str]) -> ParseError {
        let found = match self.peek() {
            Some(c) => format!("'{c}'"),
            None => "end of input".to_string(),
        };
        ParseError {
            position: self.pos,
            expected: expected.to_vec(),
            found,
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.atom()?;
            Ok(Expr::Pow(Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        const ATOM: &[&str] = &["number", "x", "pi", "function", "("];
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&[")", "+", "-", "*", "/", "^"]));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while let Some(c) = self.src[self.pos..].chars().next() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let ident = &self.src[start..self.pos];
                match ident {
                    "x" => Ok(Expr::X),
                    "pi" => Ok(Expr::Pi),
                    name => match Func::from_name(name) {
                        Some(func) => {
                            if !self.eat('(') {
                                return Err(self.error(&["("]));
                            }
                            let arg = self.expr()?;
                            if !self.eat(')') {
                                return Err(self.error(&[")", "+", "-", "*", "/", "^"]));
                            }
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        None => {
                            self.pos = start;
                            Err(ParseError {
                                position: start,
                                expected: ATOM.to_vec(),
                                found: format!("identifier '{name}'"),
                            })
                        }
                    },
                }
            }
            _ => Err(self.error(ATOM)),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        // optional exponent, only if followed by digits
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        match self.src[start..end].parse::<f64>() {
            Ok(v) => {
                self.pos = end;
                Ok(Expr::Num(v))
            }
            Err(_) => Err(ParseError {
                position: start,
                expected: vec!["number"],
                found: format!("'{}'", &self.src[start..end]),
            }),
        }
    }
}

impl Expr {
    /// Parses `text` according to the module grammar.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: text, pos: 0 };
        let e = p.expr()?;
        if p.peek().is_some() {
            return Err(p.error(&["+", "-", "*", "/", "^", "end of input"]));
        }
        Ok(e)
    }

    /// Evaluates the expression; domain violations yield NaN or infinities.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Evaluates the expression and reports the first sub-expression whose
    /// value is not finite.
    pub fn try_eval(&self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(a) => -a.try_eval(x)?,
            Expr::Add(a, b) => a.try_eval(x)? + b.try_eval(x)?,
            Expr::Sub(a, b) => a.try_eval(x)? - b.try_eval(x)?,
            Expr::Mul(a, b) => a.try_eval(x)? * b.try_eval(x)?,
            Expr::Div(a, b) => a.try_eval(x)? / b.try_eval(x)?,
            Expr::Pow(a, b) => pow(a.try_eval(x)?, b.try_eval(x)?),
            Expr::Call(f, a) => f.apply(a.try_eval(x)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError {
                x,
                what: self.to_string(),
            })
        }
    }

    /// True if the expression does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => true,
            Expr::X => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Symbolic derivative with respect to `x`, lightly simplified.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Pi => Num(0.0),
            X => Num(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                Pow(b.clone(), Box::new(Num(2.0))),
            ),
            Pow(a, b) => {
                if b.is_constant() {
                    // b a^(b-1) a'
                    mul(
                        mul(
                            (**b).clone(),
                            Pow(a.clone(), Box::new(sub((**b).clone(), Num(1.0)))),
                        ),
                        a.derivative(),
                    )
                } else {
                    // a^b (b' log a + b a'/a)
                    mul(
                        self.clone(),
                        add(
                            mul(b.derivative(), Call(Func::Log, a.clone())),
                            div(mul((**b).clone(), a.derivative()), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.derivative();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => div(Num(1.0), (**a).clone()),
                    Func::Sqrt => div(Num(0.5), Call(Func::Sqrt, a.clone())),
                    // sign(a) = a/|a|
                    Func::Abs => div((**a).clone(), Call(Func::Abs, a.clone())),
                    Func::Tanh => sub(
                        Num(1.0),
                        Pow(Box::new(Call(Func::Tanh, a.clone())), Box::new(Num(2.0))),
                    ),
                };
                mul(outer, inner)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent == exponent.trunc() && exponent.abs() < 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(n) if *n == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        b
    } else if is_num(&b, 0.0) {
        a
    } else {
        Expr::Add(Box::new(a), Box::new(b))
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&a, 1.0) {
        b
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

/// Writes `e`, parenthesized when its precedence is below `min`.
fn write_prec(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if e.precedence() < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_finite() {
                    write!(f, "{v:?}")
                } else {
                    // not representable in the grammar; keep it evaluable
                    write!(f, "(1/0)")
                }
            }
            Expr::X => write!(f, "x"),
            Expr::Pi => write!(f, "pi"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_prec(f, a, 3)
            }
            Expr::Add(a, b) => {
                write_prec(f, a, 1)?;
                write!(f, "+")?;
                write_prec(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_prec(f, a, 1)?;
                write!(f, "-")?;
                write_prec(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_prec(f, a, 2)?;
                write!(f, "*")?;
                write_prec(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_prec(f, a, 2)?;
                write!(f, "/")?;
                write_prec(f, b, 3)
            }
            Expr::Pow(a, b) => {
                write_prec(f, a, 5)?;
                write!(f, "^")?;
                write_prec(f, b, 5)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
