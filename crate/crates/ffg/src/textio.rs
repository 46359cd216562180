//! The map text format: a header line declaring variables and truncation
//! order, then one binding per component.
//!
//! ```text
//! vars: x1, x2; order: 6
//! x1 -> 2*x1 + x1*x2^2
//! x2 -> x2
//! ```
//!
//! For one variable the name `z` is accepted as an alias for `x1`.
//! Expressions are ordinary arithmetic over the variables plus the
//! constants `i` and `pi`; `exp`, `cos`, `sin` take constant arguments
//! and every division needs a constant nonzero divisor, so a document
//! always folds to an exact polynomial map. `#` starts a comment.
//!
//! `emit_map` writes the canonical form: graded-lex term order and
//! shortest-round-trip float digits, so parse(emit(u)) reproduces u bit
//! for bit.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flows::VectorField;
use crate::series::{Exponent, Series};
use crate::transform::Transformation;

// Beyond this, nested parentheses are a stack hazard, not a map.
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Arrow,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Num(_) => "a number".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Colon => "':'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut line = 1;
    let mut col = 1;
    while pos < chars.len() {
        let c = chars[pos];
        let (tline, tcol) = (line, col);
        let mut push = |tok: Tok| {
            out.push(Token {
                tok,
                line: tline,
                col: tcol,
            })
        };
        match c {
            '\n' => {
                push(Tok::Newline);
                pos += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {
                pos += 1;
                col += 1;
                continue;
            }
            '#' => {
                while pos < chars.len() && chars[pos] != '\n' {
                    pos += 1;
                    col += 1;
                }
                continue;
            }
            '+' => push(Tok::Plus),
            '-' => {
                if chars.get(pos + 1) == Some(&'>') {
                    push(Tok::Arrow);
                    pos += 1;
                    col += 1;
                } else {
                    push(Tok::Minus);
                }
            }
            '*' => push(Tok::Star),
            '/' => push(Tok::Slash),
            '^' => push(Tok::Caret),
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            ',' => push(Tok::Comma),
            ';' => push(Tok::Semi),
            ':' => push(Tok::Colon),
            _ if c.is_ascii_digit() => {
                let start = pos;
                while pos < chars.len() && chars[pos].is_ascii_digit() {
                    pos += 1;
                }
                if pos < chars.len() && chars[pos] == '.' {
                    pos += 1;
                    while pos < chars.len() && chars[pos].is_ascii_digit() {
                        pos += 1;
                    }
                }
                // exponent only when it is actually one
                if pos < chars.len() && (chars[pos] == 'e' || chars[pos] == 'E') {
                    let mut probe = pos + 1;
                    if probe < chars.len() && (chars[probe] == '+' || chars[probe] == '-') {
                        probe += 1;
                    }
                    if probe < chars.len() && chars[probe].is_ascii_digit() {
                        pos = probe;
                        while pos < chars.len() && chars[pos].is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let lit: String = chars[start..pos].iter().collect();
                let val = lit.parse::<f64>().map_err(|_| Error::Parse {
                    line: tline,
                    col: tcol,
                    msg: format!("bad number literal '{lit}'"),
                })?;
                out.push(Token {
                    tok: Tok::Num(val),
                    line: tline,
                    col: tcol,
                });
                col += pos - start;
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = pos;
                while pos < chars.len() && (chars[pos].is_ascii_alphanumeric() || chars[pos] == '_')
                {
                    pos += 1;
                }
                let name: String = chars[start..pos].iter().collect();
                out.push(Token {
                    tok: Tok::Ident(name),
                    line: tline,
                    col: tcol,
                });
                col += pos - start;
                continue;
            }
            _ => {
                return Err(Error::Parse {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character '{c}'"),
                });
            }
        }
        pos += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Expression trees

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Cos,
    Sin,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Number(f64),
    ImaginaryUnit,
    Pi,
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: usize,
    pub col: usize,
}

/// A parsed map file: header data plus one expression per component, in
/// file order.
#[derive(Debug, Clone)]
pub struct MapDocument {
    pub n: usize,
    pub order: u32,
    pub variables: Vec<String>,
    /// (component index, expression), one per component.
    pub bindings: Vec<(usize, Expr)>,
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    variables: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn err_here<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = self.peek();
        Err(Error::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<Token> {
        if std::mem::discriminant(&self.peek().tok) == std::mem::discriminant(want) {
            Ok(self.next())
        } else {
            self.err_here(format!(
                "expected {what}, found {}",
                self.peek().tok.describe()
            ))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize, usize)> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(name) => {
                self.next();
                Ok((name, t.line, t.col))
            }
            _ => self.err_here(format!("expected {what}, found {}", t.tok.describe())),
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<()> {
        let (name, line, col) = self.expect_ident(&format!("'{word}'"))?;
        if name == word {
            Ok(())
        } else {
            Err(Error::Parse {
                line,
                col,
                msg: format!("expected '{word}', found '{name}'"),
            })
        }
    }

    fn expect_integer(&mut self, what: &str) -> Result<u32> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) => {
                self.next();
                Ok(v as u32)
            }
            _ => self.err_here(format!("expected {what} (a nonnegative integer)")),
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek().tok, Tok::Newline) {
            self.next();
        }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    fn parse_header(&mut self) -> Result<(usize, u32)> {
        self.skip_newlines();
        self.expect_keyword("vars")?;
        self.expect(&Tok::Colon, "':'")?;
        let mut names = Vec::new();
        loop {
            let (name, line, col) = self.expect_ident("a variable name")?;
            if names.contains(&name) {
                return Err(Error::Semantic {
                    line,
                    col,
                    msg: format!("variable '{name}' declared twice"),
                });
            }
            names.push(name);
            if matches!(self.peek().tok, Tok::Comma) {
                self.next();
            } else {
                break;
            }
        }
        let n = names.len();
        let canonical = n == 1 && names[0] == "z"
            || names
                .iter()
                .enumerate()
                .all(|(k, v)| *v == format!("x{}", k + 1));
        if !canonical {
            let t = &self.tokens[0];
            return Err(Error::Semantic {
                line: t.line,
                col: t.col,
                msg: "variables must be named x1..xn (or z for one variable)".into(),
            });
        }
        self.expect(&Tok::Semi, "';'")?;
        self.expect_keyword("order")?;
        self.expect(&Tok::Colon, "':'")?;
        let order = self.expect_integer("the truncation order")?;
        if order == 0 {
            return self.err_here("order must be at least 1");
        }
        match self.peek().tok {
            Tok::Newline | Tok::Eof => {
                self.next();
            }
            _ => return self.err_here("expected end of header line"),
        }
        self.variables = names;
        Ok((n, order))
    }

    fn parse_document(&mut self) -> Result<MapDocument> {
        let (n, order) = self.parse_header()?;
        let mut bindings: Vec<(usize, Expr)> = Vec::new();
        loop {
            self.skip_newlines();
            if matches!(self.peek().tok, Tok::Eof) {
                break;
            }
            let (name, line, col) = self.expect_ident("a component name")?;
            let idx = self.var_index(&name).ok_or_else(|| Error::Semantic {
                line,
                col,
                msg: format!("unknown component '{name}'"),
            })?;
            if bindings.iter().any(|(i, _)| *i == idx) {
                return Err(Error::Semantic {
                    line,
                    col,
                    msg: format!("component '{name}' bound twice"),
                });
            }
            self.expect(&Tok::Arrow, "'->'")?;
            let expr = self.parse_sum(0)?;
            match self.peek().tok {
                Tok::Newline | Tok::Semi => {
                    self.next();
                }
                Tok::Eof => {}
                _ => {
                    return self.err_here(format!(
                        "expected end of binding, found {}",
                        self.peek().tok.describe()
                    ))
                }
            }
            bindings.push((idx, expr));
        }
        if bindings.len() != n {
            let missing = (0..n)
                .find(|i| !bindings.iter().any(|(j, _)| j == i))
                .expect("some component unbound");
            let t = self.peek().clone();
            return Err(Error::Semantic {
                line: t.line,
                col: t.col,
                msg: format!("component '{}' has no binding", self.variables[missing]),
            });
        }
        Ok(MapDocument {
            n,
            order,
            variables: self.variables.clone(),
            bindings,
        })
    }

    fn parse_sum(&mut self, depth: usize) -> Result<Expr> {
        if depth > MAX_DEPTH {
            return self.err_here("expression is nested too deeply");
        }
        let mut lhs = self.parse_product(depth)?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => break,
            };
            let t = self.next();
            let rhs = self.parse_product(depth)?;
            let kind = if op {
                ExprKind::Add(Box::new(lhs), Box::new(rhs))
            } else {
                ExprKind::Sub(Box::new(lhs), Box::new(rhs))
            };
            lhs = Expr {
                kind,
                line: t.line,
                col: t.col,
            };
        }
        Ok(lhs)
    }

    fn parse_product(&mut self, depth: usize) -> Result<Expr> {
        let mut lhs = self.parse_unary(depth)?;
        loop {
            let mul = match self.peek().tok {
                Tok::Star => true,
                Tok::Slash => false,
                _ => break,
            };
            let t = self.next();
            let rhs = self.parse_unary(depth)?;
            let kind = if mul {
                ExprKind::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                ExprKind::Div(Box::new(lhs), Box::new(rhs))
            };
            lhs = Expr {
                kind,
                line: t.line,
                col: t.col,
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self, depth: usize) -> Result<Expr> {
        if matches!(self.peek().tok, Tok::Minus) {
            let t = self.next();
            let inner = self.parse_unary(depth)?;
            return Ok(Expr {
                kind: ExprKind::Neg(Box::new(inner)),
                line: t.line,
                col: t.col,
            });
        }
        self.parse_power(depth)
    }

    fn parse_power(&mut self, depth: usize) -> Result<Expr> {
        let base = self.parse_atom(depth)?;
        if matches!(self.peek().tok, Tok::Caret) {
            let t = self.next();
            let exp = self.expect_integer("an exponent")?;
            return Ok(Expr {
                kind: ExprKind::Pow(Box::new(base), exp),
                line: t.line,
                col: t.col,
            });
        }
        Ok(base)
    }

    fn parse_atom(&mut self, depth: usize) -> Result<Expr> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.next();
                Ok(Expr {
                    kind: ExprKind::Number(v),
                    line: t.line,
                    col: t.col,
                })
            }
            Tok::LParen => {
                self.next();
                let inner = self.parse_sum(depth + 1)?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.next();
                let kind = match name.as_str() {
                    "i" => ExprKind::ImaginaryUnit,
                    "pi" => ExprKind::Pi,
                    "exp" | "cos" | "sin" => {
                        let func = match name.as_str() {
                            "exp" => Func::Exp,
                            "cos" => Func::Cos,
                            _ => Func::Sin,
                        };
                        self.expect(&Tok::LParen, "'('")?;
                        let arg = self.parse_sum(depth + 1)?;
                        self.expect(&Tok::RParen, "')'")?;
                        ExprKind::Call(func, Box::new(arg))
                    }
                    _ => match self.var_index(&name) {
                        Some(idx) => ExprKind::Var(idx),
                        None => {
                            return Err(Error::Semantic {
                                line: t.line,
                                col: t.col,
                                msg: format!("unknown name '{name}'"),
                            })
                        }
                    },
                };
                Ok(Expr {
                    kind,
                    line: t.line,
                    col: t.col,
                })
            }
            _ => self.err_here(format!(
                "expected an expression, found {}",
                t.tok.describe()
            )),
        }
    }
}

/// Parse a map document; does not expand the expressions beyond checking
/// that they fold to polynomials with zero constant term.
pub fn parse_map(text: &str) -> Result<MapDocument> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        at: 0,
        variables: Vec::new(),
    };
    let doc = parser.parse_document()?;
    for (idx, expr) in &doc.bindings {
        let series = fold_series(expr, doc.n, doc.order)?;
        let c0 = series.constant_term().norm();
        if c0 > 0.0 {
            return Err(Error::Semantic {
                line: expr.line,
                col: expr.col,
                msg: format!(
                    "component '{}' has a nonzero constant term ({c0:.3e})",
                    doc.variables[*idx]
                ),
            });
        }
    }
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Folding

/// Evaluate a constant subexpression, or say why it is not one.
fn fold_const(expr: &Expr, context: &str) -> Result<Complex64> {
    match &expr.kind {
        ExprKind::Number(v) => Ok(Complex64::new(*v, 0.0)),
        ExprKind::ImaginaryUnit => Ok(Complex64::new(0.0, 1.0)),
        ExprKind::Pi => Ok(Complex64::new(std::f64::consts::PI, 0.0)),
        ExprKind::Var(_) => Err(Error::Semantic {
            line: expr.line,
            col: expr.col,
            msg: format!("{context} must be constant"),
        }),
        ExprKind::Neg(e) => Ok(-fold_const(e, context)?),
        ExprKind::Add(a, b) => Ok(fold_const(a, context)? + fold_const(b, context)?),
        ExprKind::Sub(a, b) => Ok(fold_const(a, context)? - fold_const(b, context)?),
        ExprKind::Mul(a, b) => Ok(fold_const(a, context)? * fold_const(b, context)?),
        ExprKind::Div(a, b) => {
            let num = fold_const(a, context)?;
            let den = fold_const(b, context)?;
            if den.norm() == 0.0 {
                return Err(Error::Semantic {
                    line: expr.line,
                    col: expr.col,
                    msg: "division by zero".into(),
                });
            }
            Ok(num / den)
        }
        ExprKind::Pow(a, k) => Ok(fold_const(a, context)?.powu(*k)),
        ExprKind::Call(f, a) => {
            let arg = fold_const(a, "the argument of exp/cos/sin")?;
            Ok(apply_func(*f, arg))
        }
    }
}

fn apply_func(f: Func, z: Complex64) -> Complex64 {
    match f {
        Func::Exp => z.exp(),
        Func::Cos => z.cos(),
        Func::Sin => z.sin(),
    }
}

fn fold_series(expr: &Expr, n: usize, order: u32) -> Result<Series> {
    match &expr.kind {
        ExprKind::Number(_) | ExprKind::ImaginaryUnit | ExprKind::Pi => {
            Ok(Series::constant(n, order, fold_const(expr, "a constant")?))
        }
        ExprKind::Var(idx) => Ok(Series::coordinate(n, order, *idx)),
        ExprKind::Neg(e) => Ok(fold_series(e, n, order)?.neg()),
        ExprKind::Add(a, b) => fold_series(a, n, order)?.add(&fold_series(b, n, order)?),
        ExprKind::Sub(a, b) => fold_series(a, n, order)?.sub(&fold_series(b, n, order)?),
        ExprKind::Mul(a, b) => fold_series(a, n, order)?.mul(&fold_series(b, n, order)?),
        ExprKind::Div(a, b) => {
            let den = fold_const(b, "a divisor")?;
            if den.norm() == 0.0 {
                return Err(Error::Semantic {
                    line: expr.line,
                    col: expr.col,
                    msg: "division by zero".into(),
                });
            }
            Ok(fold_series(a, n, order)?.scale(Complex64::new(1.0, 0.0) / den))
        }
        ExprKind::Pow(a, k) => Ok(fold_series(a, n, order)?.pow(*k)),
        ExprKind::Call(f, a) => {
            let arg = fold_const(a, "the argument of exp/cos/sin")?;
            Ok(Series::constant(n, order, apply_func(*f, arg)))
        }
    }
}

fn expand_components(doc: &MapDocument) -> Result<Vec<Series>> {
    let mut components: Vec<Option<Series>> = vec![None; doc.n];
    for (idx, expr) in &doc.bindings {
        components[*idx] = Some(fold_series(expr, doc.n, doc.order)?);
    }
    Ok(components
        .into_iter()
        .map(|c| c.expect("parser guarantees full bindings"))
        .collect())
}

/// Expand a document into a transformation at its declared order.
pub fn to_transformation(doc: &MapDocument) -> Result<Transformation> {
    Transformation::new(expand_components(doc)?)
}

/// Expand a document into a vector field (the same syntax; the linear
/// part may be anything, including zero).
pub fn to_vector_field(doc: &MapDocument) -> Result<VectorField> {
    VectorField::new(expand_components(doc)?)
}

// ---------------------------------------------------------------------------
// Emission

fn variable_names(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["z".into()]
    } else {
        (1..=n).map(|k| format!("x{k}")).collect()
    }
}

fn monomial_text(e: &Exponent, vars: &[String]) -> String {
    let mut parts = Vec::new();
    for (i, &k) in e.entries().iter().enumerate() {
        match k {
            0 => {}
            1 => parts.push(vars[i].clone()),
            _ => parts.push(format!("{}^{k}", vars[i])),
        }
    }
    parts.join("*")
}

/// One term as (sign-to-fold, body). Pure real and pure imaginary
/// coefficients fold their sign into the join; full complex ones are
/// parenthesized verbatim.
fn term_text(coef: Complex64, monomial: &str) -> (bool, String) {
    let coef_text: String;
    let negative;
    if coef.im == 0.0 {
        negative = coef.re < 0.0;
        let mag = coef.re.abs();
        if mag == 1.0 && !monomial.is_empty() {
            coef_text = String::new();
        } else {
            coef_text = format!("{mag}");
        }
    } else if coef.re == 0.0 {
        negative = coef.im < 0.0;
        let mag = coef.im.abs();
        if mag == 1.0 {
            coef_text = "i".into();
        } else {
            coef_text = format!("{mag}*i");
        }
    } else {
        negative = false;
        let (sign, im) = if coef.im < 0.0 {
            ('-', -coef.im)
        } else {
            ('+', coef.im)
        };
        coef_text = format!("({}{sign}{im}*i)", coef.re);
    }
    let body = match (coef_text.is_empty(), monomial.is_empty()) {
        (true, true) => "1".into(),
        (true, false) => monomial.into(),
        (false, true) => coef_text,
        (false, false) => format!("{coef_text}*{monomial}"),
    };
    (negative, body)
}

fn series_text(s: &Series, vars: &[String]) -> String {
    let mut out = String::new();
    for (e, &coef) in s.terms() {
        let (negative, body) = term_text(coef, &monomial_text(e, vars));
        if out.is_empty() {
            if negative {
                out.push('-');
            }
        } else if negative {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&body);
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn emit_document(n: usize, order: u32, components: &[Series]) -> String {
    let vars = variable_names(n);
    let mut out = String::new();
    let _ = writeln!(out, "vars: {}; order: {order}", vars.join(", "));
    for (name, comp) in vars.iter().zip(components) {
        let _ = writeln!(out, "{name} -> {}", series_text(comp, &vars));
    }
    out
}

/// Canonical text form; `parse_map` + `to_transformation` reproduces the
/// input exactly, coefficient bits included.
pub fn emit_map(u: &Transformation) -> String {
    emit_document(u.n(), u.order(), u.components())
}

/// Canonical text form of a vector field, same grammar as maps.
pub fn emit_field(x: &VectorField) -> String {
    emit_document(x.n(), x.order(), x.components())
}
