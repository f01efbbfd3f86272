//! Arithmetic expressions over a declared variable list.
//!
//! Expressions are parsed from a small infix language (constants, variables,
//! `+ - * /`, unary minus and non-negative integer powers) and evaluated
//! together with their exact gradient and Hessian by forward-over-forward
//! propagation of second-order jets through the tree.
//!
//! Precedence, highest first: `^`, unary `-`, `* /`, `+ -`. Binary operators
//! associate to the left. `-x^2` therefore means `-(x^2)`, and a chained
//! power `x^2^3` is rejected; write `(x^2)^3`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("undeclared variable `{name}` at byte {position}")]
    UndeclaredVariable { name: String, position: usize },
    #[error("variable `{0}` declared more than once")]
    DuplicateVariable(String),
}

/// Expression tree. Variables are indices into the declared variable list
/// the expression was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    /// `Σ coeffs[j]·x_j + constant`, skipping zero coefficients.
    pub fn affine(coeffs: &[f64], constant: f64) -> Expr {
        let mut acc: Option<Expr> = None;
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let term = if c == 1.0 {
                Expr::Var(j)
            } else {
                Expr::Mul(Box::new(Expr::Const(c)), Box::new(Expr::Var(j)))
            };
            acc = Some(match acc {
                None => term,
                Some(a) => Expr::Add(Box::new(a), Box::new(term)),
            });
        }
        match acc {
            None => Expr::Const(constant),
            Some(a) if constant == 0.0 => a,
            Some(a) => Expr::Add(Box::new(a), Box::new(Expr::Const(constant))),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    // Smart constructors used by `partial`; they fold additive and
    // multiplicative identities only.

    pub fn sum(a: Expr, b: Expr) -> Expr {
        match (a.is_zero(), b.is_zero()) {
            (true, _) => b,
            (_, true) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn difference(a: Expr, b: Expr) -> Expr {
        match (a.is_zero(), b.is_zero()) {
            (_, true) => a,
            (true, false) => Expr::negation(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn product(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn negation(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Neg(Box::new(other)),
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::negation(a.partial(var)),
            Expr::Add(a, b) => Expr::sum(a.partial(var), b.partial(var)),
            Expr::Sub(a, b) => Expr::difference(a.partial(var), b.partial(var)),
            Expr::Mul(a, b) => Expr::sum(
                Expr::product(a.partial(var), (**b).clone()),
                Expr::product((**a).clone(), b.partial(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.partial(var);
                let db = b.partial(var);
                if db.is_zero() {
                    if da.is_zero() {
                        return Expr::Const(0.0);
                    }
                    return Expr::Div(Box::new(da), b.clone());
                }
                let num = Expr::difference(Expr::product(da, (**b).clone()), Expr::product((**a).clone(), db));
                Expr::Div(Box::new(num), Box::new(Expr::Pow(b.clone(), 2)))
            }
            Expr::Pow(a, n) => match *n {
                0 => Expr::Const(0.0),
                1 => a.partial(var),
                n => {
                    let da = a.partial(var);
                    if da.is_zero() {
                        return Expr::Const(0.0);
                    }
                    let lowered = if n == 2 {
                        (**a).clone()
                    } else {
                        Expr::Pow(a.clone(), n - 1)
                    };
                    Expr::product(Expr::product(Expr::Const(n as f64), lowered), da)
                }
            },
        }
    }

    /// Syntactic polynomial degree, or `None` when a non-constant
    /// denominator appears.
    pub fn polynomial_degree(&self) -> Option<u32> {
        match self {
            Expr::Const(_) => Some(0),
            Expr::Var(_) => Some(1),
            Expr::Neg(a) => a.polynomial_degree(),
            Expr::Add(a, b) | Expr::Sub(a, b) => Some(a.polynomial_degree()?.max(b.polynomial_degree()?)),
            Expr::Mul(a, b) => Some(a.polynomial_degree()? + b.polynomial_degree()?),
            Expr::Div(a, b) => match b.polynomial_degree()? {
                0 => a.polynomial_degree(),
                _ => None,
            },
            Expr::Pow(a, n) => Some(a.polynomial_degree()? * n),
        }
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(j) => {
                out.insert(*j);
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.collect_variables(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
        }
    }

    /// Plain value, without derivatives.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(j) => point[*j],
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Expr::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Expr::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Expr::Div(a, b) => {
                let d = b.eval(point)?;
                if d == 0.0 {
                    return Err(Error::DivisionByZero);
                }
                a.eval(point)? / d
            }
            Expr::Pow(a, n) => a.eval(point)?.powi(*n as i32),
        })
    }

    /// Render with the given variable names. The output is fully
    /// parenthesized and parses back to the same tree.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.names, f)
    }
}

fn write_expr(e: &Expr, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| -> fmt::Result {
        write!(f, "(")?;
        write_expr(a, names, f)?;
        write!(f, " {op} ")?;
        write_expr(b, names, f)?;
        write!(f, ")")
    };
    match e {
        Expr::Const(c) => write!(f, "{c:?}"),
        Expr::Var(j) => match names.get(*j) {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "v{j}"),
        },
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_expr(a, names, f)
        }
        Expr::Add(a, b) => bin(f, a, "+", b),
        Expr::Sub(a, b) => bin(f, a, "-", b),
        Expr::Mul(a, b) => bin(f, a, "*", b),
        Expr::Div(a, b) => bin(f, a, "/", b),
        Expr::Pow(a, n) => {
            let bare = matches!(**a, Expr::Var(_)) || matches!(**a, Expr::Const(c) if c >= 0.0);
            if bare {
                write_expr(a, names, f)?;
            } else {
                write!(f, "(")?;
                write_expr(a, names, f)?;
                write!(f, ")")?;
            }
            write!(f, "^{n}")
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> std::result::Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                position: start,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ParseError::Syntax {
                    position: start,
                    message: format!("number `{text}` is not finite"),
                });
            }
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ParseError::Syntax {
                position: i,
                message: format!("unexpected character `{}`", src[i..].chars().next().unwrap_or(c)),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.here(),
            message: message.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> std::result::Result<Expr, ParseError> {
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

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> std::result::Result<Expr, ParseError> {
        if self.eat('-') {
            // A negated literal folds into a negative constant.
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> std::result::Result<Expr, ParseError> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let exponent = match self.toks.get(self.pos) {
            Some((Tok::Num(v), _)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => *v as u32,
            _ => return self.err("exponent must be a non-negative integer literal"),
        };
        self.pos += 1;
        if self.peek() == Some(&Tok::Op('^')) {
            return self.err("chained exponent; add parentheses");
        }
        Ok(Expr::Pow(Box::new(base), exponent))
    }

    fn primary(&mut self) -> std::result::Result<Expr, ParseError> {
        let position = self.here();
        match self.toks.get(self.pos).cloned() {
            Some((Tok::Num(v), _)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some((Tok::Ident(name), _)) => {
                self.pos += 1;
                match self.vars.iter().position(|v| *v == name) {
                    Some(j) => Ok(Expr::Var(j)),
                    None => Err(ParseError::UndeclaredVariable { name, position }),
                }
            }
            Some((Tok::Op('('), _)) => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(inner)
            }
            Some((Tok::Op(c), _)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parse `source` against the ordered variable list `variables`.
pub fn parse_expr(source: &str, variables: &[String]) -> std::result::Result<Expr, ParseError> {
    let mut seen = BTreeSet::new();
    for v in variables {
        if !seen.insert(v.as_str()) {
            return Err(ParseError::DuplicateVariable(v.clone()));
        }
    }
    let toks = tokenize(source)?;
    if toks.is_empty() {
        return Err(ParseError::Syntax {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: source.len(),
        vars: variables,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Second-order jets

/// Symmetric matrix stored as its packed upper triangle, so symmetry is
/// exact by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    packed: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymmetricMatrix {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        r * self.dim - r * (r + 1) / 2 + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[self.slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.packed[s] = v;
    }

    pub fn to_dense(&self) -> crate::linalg::DenseMatrix {
        crate::linalg::DenseMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// `dᵀ H d`.
    pub fn quadratic_form(&self, d: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.get(i, i) * d[i] * d[i];
            for j in i + 1..self.dim {
                acc += 2.0 * self.get(i, j) * d[i] * d[j];
            }
        }
        acc
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderJet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymmetricMatrix,
}

impl SecondOrderJet {
    fn constant(c: f64, n: usize) -> Self {
        SecondOrderJet {
            value: c,
            gradient: vec![0.0; n],
            hessian: SymmetricMatrix::zeros(n),
        }
    }

    fn variable(j: usize, value: f64, n: usize) -> Self {
        let mut jet = Self::constant(value, n);
        jet.gradient[j] = 1.0;
        jet
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    fn negate(mut self) -> Self {
        self.value = -self.value;
        self.gradient.iter_mut().for_each(|g| *g = -*g);
        self.hessian.packed.iter_mut().for_each(|h| *h = -*h);
        self
    }

    fn combine(mut self, other: &Self, sign: f64) -> Self {
        self.value += sign * other.value;
        for (a, b) in self.gradient.iter_mut().zip(&other.gradient) {
            *a += sign * b;
        }
        for (a, b) in self.hessian.packed.iter_mut().zip(&other.hessian.packed) {
            *a += sign * b;
        }
        self
    }

    fn product(&self, other: &Self) -> Self {
        let n = self.dim();
        let (u, v) = (self.value, other.value);
        let gradient = (0..n).map(|i| u * other.gradient[i] + v * self.gradient[i]).collect();
        let mut hessian = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let h = u * other.hessian.get(i, j)
                    + v * self.hessian.get(i, j)
                    + self.gradient[i] * other.gradient[j]
                    + other.gradient[i] * self.gradient[j];
                hessian.set(i, j, h);
            }
        }
        SecondOrderJet {
            value: u * v,
            gradient,
            hessian,
        }
    }

    /// Compose with a scalar function `g` given `g(u)`, `g'(u)`, `g''(u)`.
    fn compose(&self, g0: f64, g1: f64, g2: f64) -> Self {
        let n = self.dim();
        let gradient = self.gradient.iter().map(|d| g1 * d).collect();
        let mut hessian = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let h = g1 * self.hessian.get(i, j) + g2 * self.gradient[i] * self.gradient[j];
                hessian.set(i, j, h);
            }
        }
        SecondOrderJet {
            value: g0,
            gradient,
            hessian,
        }
    }

    fn powi(self, n: u32) -> Self {
        match n {
            0 => Self::constant(1.0, self.dim()),
            1 => self,
            _ => {
                let u = self.value;
                let nf = n as f64;
                self.compose(
                    u.powi(n as i32),
                    nf * u.powi(n as i32 - 1),
                    nf * (nf - 1.0) * u.powi(n as i32 - 2),
                )
            }
        }
    }

    fn reciprocal(&self) -> Result<Self> {
        let v = self.value;
        if v == 0.0 {
            return Err(Error::DivisionByZero);
        }
        Ok(self.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)))
    }
}

/// Evaluate `e` with its exact gradient and Hessian at `point`.
pub fn eval_jet(e: &Expr, point: &[f64]) -> Result<SecondOrderJet> {
    let n = point.len();
    let jet = match e {
        Expr::Const(c) => SecondOrderJet::constant(*c, n),
        Expr::Var(j) => {
            if *j >= n {
                return Err(Error::Dimension(format!(
                    "variable index {j} outside point of length {n}"
                )));
            }
            SecondOrderJet::variable(*j, point[*j], n)
        }
        Expr::Neg(a) => eval_jet(a, point)?.negate(),
        Expr::Add(a, b) => eval_jet(a, point)?.combine(&eval_jet(b, point)?, 1.0),
        Expr::Sub(a, b) => eval_jet(a, point)?.combine(&eval_jet(b, point)?, -1.0),
        Expr::Mul(a, b) => eval_jet(a, point)?.product(&eval_jet(b, point)?),
        Expr::Div(a, b) => {
            let den = eval_jet(b, point)?.reciprocal()?;
            eval_jet(a, point)?.product(&den)
        }
        Expr::Pow(a, k) => eval_jet(a, point)?.powi(*k),
    };
    Ok(jet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_micro_objective() {
        let vars = names(&["x", "y"]);
        let e = parse_expr("0.5*(x^2 - y^2)", &vars).unwrap();
        let expected = Expr::Mul(
            Box::new(Expr::Const(0.5)),
            Box::new(Expr::Sub(
                Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2)),
                Box::new(Expr::Pow(Box::new(Expr::Var(1)), 2)),
            )),
        );
        assert_eq!(e, expected);
        assert_eq!(parse_expr("x", &names(&["x"])).unwrap(), Expr::Var(0));
        let quartic = parse_expr("y^4 + y + x", &vars).unwrap();
        assert_eq!(quartic.polynomial_degree(), Some(4));
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = names(&["x", "y"]);
        let e = parse_expr("-x^2", &vars).unwrap();
        assert_eq!(e, Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2))));
        let e = parse_expr("x - y - 1", &vars).unwrap();
        assert_eq!(e.eval(&[5.0, 2.0]).unwrap(), 2.0);
        let e = parse_expr("8 / 4 / 2", &vars).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 1.0);
        let e = parse_expr("2*-x + 3e-1", &vars).unwrap();
        assert!((e.eval(&[1.0, 0.0]).unwrap() + 1.7).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        let vars = names(&["x", "y"]);
        assert!(matches!(
            parse_expr("2x", &vars),
            Err(ParseError::Syntax { position: 1, .. })
        ));
        match parse_expr("x + z", &vars) {
            Err(ParseError::UndeclaredVariable { name, position }) => {
                assert_eq!(name, "z");
                assert_eq!(position, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("", &vars).is_err());
        assert!(parse_expr("x^-1", &vars).is_err());
        assert!(parse_expr("x^1.5", &vars).is_err());
        assert!(parse_expr("x^2^3", &vars).is_err());
        assert!(parse_expr("(x + y", &vars).is_err());
        assert!(parse_expr("x $ y", &vars).is_err());
        assert!(matches!(
            parse_expr("x", &names(&["x", "x"])),
            Err(ParseError::DuplicateVariable(_))
        ));
    }

    #[test]
    fn jets_of_micro_example() {
        let vars = names(&["x", "y"]);
        let f = parse_expr("0.5*(x^2 - y^2)", &vars).unwrap();
        let jf = eval_jet(&f, &[0.0, 0.0]).unwrap();
        assert_eq!(jf.value, 0.0);
        assert_eq!(jf.gradient, vec![0.0, 0.0]);
        assert_eq!(jf.hessian.get(0, 0), 1.0);
        assert_eq!(jf.hessian.get(0, 1), 0.0);
        assert_eq!(jf.hessian.get(1, 1), -1.0);

        let big_f = parse_expr("y^4 + y + x", &vars).unwrap();
        let j0 = eval_jet(&big_f, &[0.0, 0.0]).unwrap();
        assert_eq!(j0.value, 0.0);
        assert_eq!(j0.gradient, vec![1.0, 1.0]);
        assert_eq!(j0.hessian, SymmetricMatrix::zeros(2));

        let j1 = eval_jet(&big_f, &[0.0, 1.0]).unwrap();
        assert_eq!(j1.value, 2.0);
        assert_eq!(j1.gradient, vec![1.0, 5.0]);
        assert_eq!(j1.hessian.get(1, 1), 12.0);
        assert_eq!(j1.hessian.get(0, 1), 0.0);
        assert_eq!(j1.hessian.get(0, 0), 0.0);

        // central differences, step 1e-5
        let h = 1e-5;
        let val = |x: f64, y: f64| big_f.eval(&[x, y]).unwrap();
        let gy = (val(0.0, 1.0 + h) - val(0.0, 1.0 - h)) / (2.0 * h);
        let hyy = (val(0.0, 1.0 + h) - 2.0 * val(0.0, 1.0) + val(0.0, 1.0 - h)) / (h * h);
        assert!((gy - 5.0).abs() < 1e-6);
        assert!((hyy - 12.0).abs() < 1e-3);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let vars = names(&["x"]);
        let e = parse_expr("1 / x", &vars).unwrap();
        assert!(matches!(eval_jet(&e, &[0.0]), Err(Error::DivisionByZero)));
        let j = eval_jet(&e, &[2.0]).unwrap();
        assert_eq!(j.value, 0.5);
        assert_eq!(j.gradient[0], -0.25);
        assert_eq!(j.hessian.get(0, 0), 0.25);
    }

    #[test]
    fn symbolic_partial_matches_jet_gradient() {
        let vars = names(&["x", "y", "z"]);
        let e = parse_expr("x*y^3 - z/(1 + x^2) + (x - z)^2", &vars).unwrap();
        let p = [0.3, -1.2, 0.7];
        let jet = eval_jet(&e, &p).unwrap();
        for k in 0..3 {
            let d = e.partial(k).eval(&p).unwrap();
            assert!((d - jet.gradient[k]).abs() < 1e-12, "{k}: {d} vs {}", jet.gradient[k]);
        }
    }

    #[test]
    fn affine_builder() {
        let e = Expr::affine(&[1.0, 0.0, -2.0], 3.0);
        assert_eq!(e.eval(&[1.0, 5.0, 1.0]).unwrap(), 2.0);
        assert_eq!(e.polynomial_degree(), Some(1));
        assert_eq!(Expr::affine(&[0.0], 0.0), Expr::Const(0.0));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(|c| Expr::Const((c * 8.0).round() / 8.0)),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner
                    .clone()
                    .prop_filter("parser never emits Neg(Const)", |e| !matches!(e, Expr::Const(_)))
                    .prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner, 0u32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(e in arb_expr()) {
            let vars = names(&["x", "y", "z"]);
            let text = e.display(&vars).to_string();
            let back = parse_expr(&text, &vars).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn scaling_scales_jet_exactly(e in arb_expr(), c in -4.0f64..4.0,
                                      p in prop::array::uniform3(-2.0f64..2.0)) {
            let Ok(base) = eval_jet(&e, &p) else { return Ok(()); };
            prop_assume!(base.value.is_finite() && base.gradient.iter().all(|g| g.is_finite())
                && base.hessian.packed.iter().all(|h| h.is_finite()));
            let scaled = eval_jet(&Expr::Mul(Box::new(Expr::Const(c)), Box::new(e)), &p).unwrap();
            prop_assert_eq!(scaled.value, c * base.value);
            for (s, b) in scaled.gradient.iter().zip(&base.gradient) {
                prop_assert_eq!(*s, c * b);
            }
            for (s, b) in scaled.hessian.packed.iter().zip(&base.hessian.packed) {
                prop_assert_eq!(*s, c * b);
            }
        }
    }
}
