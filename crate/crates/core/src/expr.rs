//! Chart source language.
//!
//! A chart is a list of `;`-separated statements (a newline outside brackets
//! also ends a statement):
//!
//! ```text
//! m = 2; n = 3; ambient = euclidean
//! x1 = cosh(u1)*cos(u2); x2 = cosh(u1)*sin(u2); x3 = u1
//! domain u1 in [-T, T], u2 in [0, 2*pi] periodic
//! const T = 5
//! ```
//!
//! Statements:
//!
//! * `m = <int>`, `n = <int>`: chart and space-form dimensions.
//! * `ambient = euclidean` or `ambient = hyperbolic(<kappa>)`. Hyperbolic
//!   charts give `n + 1` Lorentz coordinates on `<x,x> = 1/kappa`.
//! * `xK = <expr>`: the K-th model coordinate.
//! * `const NAME = <expr>`: named constants, in any order.
//! * `domain u1 in [a, b] <mods>, ...`: bounds may be `-inf`/`inf`. The
//!   modifiers are `periodic`, `cut` (the faces are chart cuts, not ends) and
//!   `truncate <expr>` (replace infinite bounds by `±expr`).
//! * `periodic uK`
//! * `basepoint = (..)`, `pole = (..)`.
//!
//! Expressions use `+ - * / ^` with the usual precedence (`^` binds tightest
//! and associates to the right, unary minus sits between `^` and `*`), the
//! functions `sqrt exp log sin cos sinh cosh tanh asinh`, the variables
//! `u1..um` and the built-in constants `pi` and `inf`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chart::{AxisDomain, Chart, SpaceKind};
use crate::error::{Error, Result};
use crate::jets::{apply, ElementaryOp, Jet2, Scalar, UnaryFn, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn op(self) -> ElementaryOp {
        match self {
            BinOp::Add => ElementaryOp::Add,
            BinOp::Sub => ElementaryOp::Sub,
            BinOp::Mul => ElementaryOp::Mul,
            BinOp::Div => ElementaryOp::Div,
            BinOp::Pow => ElementaryOp::Pow,
        }
    }
}

/// Expression tree. Variables are zero-based chart axes.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Const(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(UnaryFn, Box<Expr>),
}

const NEG_PREC: u8 = 3;
const ATOM_PREC: u8 = 5;

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Const(_) | Expr::Call(..) => ATOM_PREC,
            Expr::Neg(_) => NEG_PREC,
            Expr::Binary(op, ..) => op.prec(),
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.prec() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}")?,
            Expr::Var(k) => write!(f, "u{}", k + 1)?,
            Expr::Const(name) => f.write_str(name)?,
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_at(f, NEG_PREC)?;
            }
            Expr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.write_at(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(op, l, r) => {
                let (lmin, rmin) = match op {
                    BinOp::Pow => (ATOM_PREC, NEG_PREC),
                    _ => (op.prec(), op.prec() + 1),
                };
                l.write_at(f, lmin)?;
                match op {
                    BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => f.write_str(op.symbol())?,
                }
                r.write_at(f, rmin)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }

    /// Evaluate with constants already substituted.
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S> {
        match self {
            Expr::Num(v) => Ok(S::from_f64(*v)),
            Expr::Var(k) => vars.get(*k).copied().ok_or_else(|| Error::Evaluation {
                op: "var",
                reason: format!("u{} is not bound", k + 1),
            }),
            Expr::Const(name) => match builtin(name) {
                Some(v) => Ok(S::from_f64(v)),
                None => Err(Error::Evaluation {
                    op: "const",
                    reason: format!("constant `{name}` is not bound"),
                }),
            },
            Expr::Neg(e) => apply(ElementaryOp::Neg, &[e.eval(vars)?]),
            Expr::Call(func, e) => apply(ElementaryOp::Func(*func), &[e.eval(vars)?]),
            Expr::Binary(op, l, r) => apply(op.op(), &[l.eval(vars)?, r.eval(vars)?]),
        }
    }

    /// Replace named constants by their values.
    fn substitute(&self, values: &BTreeMap<String, f64>) -> Expr {
        match self {
            Expr::Const(name) => match values.get(name) {
                Some(&v) => Expr::Num(v),
                None => self.clone(),
            },
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(values))),
            Expr::Call(func, e) => Expr::Call(*func, Box::new(e.substitute(values))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.substitute(values)),
                Box::new(r.substitute(values)),
            ),
        }
    }

    fn constants(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(name) if builtin(name).is_none() => {
                out.insert(name.clone());
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.constants(out),
            Expr::Binary(_, l, r) => {
                l.constants(out);
                r.constants(out);
            }
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

fn builtin(name: &str) -> Option<f64> {
    match name {
        "pi" => Some(std::f64::consts::PI),
        "inf" => Some(f64::INFINITY),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Sep,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut depth = 0i32;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok| out.push(Token { tok, line: tl, col: tc });
        match c {
            '\n' => {
                if depth == 0 {
                    push(Tok::Sep);
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {}
            ';' => push(Tok::Sep),
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            '/' => push(Tok::Slash),
            '^' => push(Tok::Caret),
            '=' => push(Tok::Eq),
            ',' => push(Tok::Comma),
            '(' | '[' => {
                depth += 1;
                push(if c == '(' { Tok::LParen } else { Tok::LBracket });
            }
            ')' | ']' => {
                depth -= 1;
                push(if c == ')' { Tok::RParen } else { Tok::RBracket });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(tl, tc, format!("malformed number `{text}`")))?;
                push(Tok::Num(v));
                col += i - start;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                push(Tok::Ident(chars[start..i].iter().collect()));
                col += i - start;
                continue;
            }
            other => return Err(syntax(tl, tc, format!("unexpected character `{other}`"))),
        }
        i += 1;
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
// Parser

/// A named reference inside an expression, kept for positioned errors.
#[derive(Clone, Debug)]
struct Ref {
    name: String,
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    refs: Vec<Ref>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_end_of_statement(&self) -> bool {
        matches!(self.peek().tok, Tok::Sep | Tok::Eof)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.col, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Token> {
        let t = self.next();
        match t.tok {
            Tok::Ident(_) => Ok(t),
            _ => Err(syntax(t.line, t.col, format!("expected {what}, found {}", describe(&t.tok)))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek().tok == Tok::Minus {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek().tok == Tok::Caret {
            self.next();
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.close_paren(&t)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    let open = self.next();
                    let Some(func) = UnaryFn::from_name(&name) else {
                        return Err(Error::UnknownIdentifier {
                            name,
                            line: t.line,
                            col: t.col,
                        });
                    };
                    let mut args = vec![self.expr()?];
                    while self.peek().tok == Tok::Comma {
                        self.next();
                        args.push(self.expr()?);
                    }
                    self.close_paren(&open)?;
                    if args.len() != 1 {
                        return Err(Error::Arity {
                            name,
                            line: t.line,
                            col: t.col,
                            expected: 1,
                            got: args.len(),
                        });
                    }
                    return Ok(Expr::Call(func, Box::new(args.pop().unwrap())));
                }
                if UnaryFn::from_name(&name).is_some() {
                    return Err(Error::Arity {
                        name,
                        line: t.line,
                        col: t.col,
                        expected: 1,
                        got: 0,
                    });
                }
                self.refs.push(Ref {
                    name: name.clone(),
                    line: t.line,
                    col: t.col,
                });
                match variable_index(&name) {
                    Some(k) => Ok(Expr::Var(k)),
                    None => Ok(Expr::Const(name)),
                }
            }
            other => Err(syntax(t.line, t.col, format!("expected an expression, found {}", describe(&other)))),
        }
    }

    fn close_paren(&mut self, open: &Token) -> Result<()> {
        match self.peek().tok {
            Tok::RParen => {
                self.next();
                Ok(())
            }
            Tok::Sep | Tok::Eof => Err(syntax(open.line, open.col, "unclosed parenthesis")),
            _ => {
                let t = self.peek();
                Err(syntax(t.line, t.col, format!("expected `)`, found {}", describe(&t.tok))))
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sep => "end of statement".into(),
        Tok::Eof => "end of input".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Comma => "`,`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('u')?;
    let k: usize = digits.parse().ok()?;
    (k >= 1 && !digits.starts_with('0')).then(|| k - 1)
}

fn coordinate_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    let k: usize = digits.parse().ok()?;
    (k >= 1 && !digits.starts_with('0')).then(|| k - 1)
}

// ---------------------------------------------------------------------------
// Chart specification

/// Declared bounds of one axis, before constants are resolved.
#[derive(Clone, Debug)]
struct AxisDecl {
    axis: usize,
    lo: Expr,
    hi: Expr,
    periodic: bool,
    cut: bool,
    truncate: Option<Expr>,
    line: usize,
    col: usize,
}

/// A parsed chart.
#[derive(Clone, Debug)]
pub struct ChartSpec {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    /// Coordinate expressions as written.
    pub exprs: Vec<Expr>,
    pub constants: BTreeMap<String, f64>,
    /// Constant definitions as written, in declaration order.
    pub constant_exprs: Vec<(String, Expr)>,
    /// Declared bounds; may be infinite.
    pub declared: Vec<AxisDomain>,
    /// Per-axis truncation for infinite bounds.
    pub truncation: Vec<Option<f64>>,
    domain: Vec<AxisDomain>,
    compiled: Vec<Expr>,
    basepoint: Option<Vec<f64>>,
    pole: Option<Vec<f64>>,
}

#[derive(Default)]
struct Draft {
    m: Option<usize>,
    n: Option<usize>,
    kappa: Option<Expr>,
    coords: BTreeMap<usize, (Expr, usize, usize)>,
    consts: Vec<(String, Expr, usize, usize)>,
    axes: Vec<AxisDecl>,
    periodic: Vec<(usize, usize, usize)>,
    basepoint: Option<Vec<Expr>>,
    pole: Option<Vec<Expr>>,
}

/// Parse chart source text.
pub fn parse_chart(source: &str) -> Result<ChartSpec> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        refs: Vec::new(),
    };
    let mut d = Draft::default();
    loop {
        while p.peek().tok == Tok::Sep {
            p.next();
        }
        if p.peek().tok == Tok::Eof {
            break;
        }
        statement(&mut p, &mut d)?;
        if !p.at_end_of_statement() {
            let t = p.peek();
            return Err(syntax(t.line, t.col, format!("unexpected {} after statement", describe(&t.tok))));
        }
    }
    finish(d, &p.refs)
}

fn integer(p: &mut Parser) -> Result<usize> {
    let t = p.next();
    match t.tok {
        Tok::Num(v) if v.fract() == 0.0 && v >= 1.0 => Ok(v as usize),
        _ => Err(syntax(t.line, t.col, "expected a positive integer")),
    }
}

fn tuple(p: &mut Parser) -> Result<Vec<Expr>> {
    let open = p.expect(Tok::LParen, "`(`")?;
    let mut items = vec![p.expr()?];
    while p.peek().tok == Tok::Comma {
        p.next();
        items.push(p.expr()?);
    }
    p.close_paren(&open)?;
    Ok(items)
}

fn statement(p: &mut Parser, d: &mut Draft) -> Result<()> {
    let head = p.ident("a statement")?;
    let Tok::Ident(word) = head.tok.clone() else {
        unreachable!()
    };
    match word.as_str() {
        "m" | "n" => {
            p.expect(Tok::Eq, "`=`")?;
            let v = integer(p)?;
            if word == "m" {
                d.m = Some(v);
            } else {
                d.n = Some(v);
            }
        }
        "ambient" => {
            p.expect(Tok::Eq, "`=`")?;
            let kind = p.ident("`euclidean` or `hyperbolic`")?;
            match &kind.tok {
                Tok::Ident(k) if k == "euclidean" => d.kappa = Some(Expr::Num(0.0)),
                Tok::Ident(k) if k == "hyperbolic" => {
                    let open = p.expect(Tok::LParen, "`(`")?;
                    let e = p.expr()?;
                    p.close_paren(&open)?;
                    d.kappa = Some(e);
                }
                _ => {
                    return Err(syntax(kind.line, kind.col, "expected `euclidean` or `hyperbolic`"));
                }
            }
        }
        "const" => {
            let name = p.ident("a constant name")?;
            let Tok::Ident(name_s) = name.tok else {
                unreachable!()
            };
            if variable_index(&name_s).is_some() || builtin(&name_s).is_some() {
                return Err(syntax(name.line, name.col, format!("`{name_s}` cannot be redefined")));
            }
            p.expect(Tok::Eq, "`=`")?;
            let e = p.expr()?;
            d.consts.push((name_s, e, name.line, name.col));
        }
        "domain" => loop {
            let axis = p.ident("an axis name")?;
            let Tok::Ident(ax) = &axis.tok else {
                unreachable!()
            };
            let Some(k) = variable_index(ax) else {
                return Err(Error::UnknownIdentifier {
                    name: ax.clone(),
                    line: axis.line,
                    col: axis.col,
                });
            };
            let kw = p.ident("`in`")?;
            if kw.tok != Tok::Ident("in".into()) {
                return Err(syntax(kw.line, kw.col, "expected `in`"));
            }
            p.expect(Tok::LBracket, "`[`")?;
            let lo = p.expr()?;
            p.expect(Tok::Comma, "`,`")?;
            let hi = p.expr()?;
            p.expect(Tok::RBracket, "`]`")?;
            let mut decl = AxisDecl {
                axis: k,
                lo,
                hi,
                periodic: false,
                cut: false,
                truncate: None,
                line: axis.line,
                col: axis.col,
            };
            while let Tok::Ident(w) = &p.peek().tok {
                match w.as_str() {
                    "periodic" => decl.periodic = true,
                    "cut" => decl.cut = true,
                    "truncate" => {
                        p.next();
                        decl.truncate = Some(p.expr()?);
                        continue;
                    }
                    _ => {
                        let t = p.peek();
                        return Err(syntax(t.line, t.col, format!("unknown axis modifier `{w}`")));
                    }
                }
                p.next();
            }
            d.axes.push(decl);
            if p.peek().tok != Tok::Comma {
                break;
            }
            p.next();
        },
        "periodic" => {
            let axis = p.ident("an axis name")?;
            let Tok::Ident(ax) = &axis.tok else {
                unreachable!()
            };
            let Some(k) = variable_index(ax) else {
                return Err(Error::UnknownIdentifier {
                    name: ax.clone(),
                    line: axis.line,
                    col: axis.col,
                });
            };
            d.periodic.push((k, axis.line, axis.col));
        }
        "basepoint" | "pole" => {
            p.expect(Tok::Eq, "`=`")?;
            let items = tuple(p)?;
            if word == "basepoint" {
                d.basepoint = Some(items);
            } else {
                d.pole = Some(items);
            }
        }
        other => {
            if let Some(k) = coordinate_index(other) {
                p.expect(Tok::Eq, "`=`")?;
                let e = p.expr()?;
                if d.coords.insert(k, (e, head.line, head.col)).is_some() {
                    return Err(syntax(head.line, head.col, format!("coordinate `{other}` assigned twice")));
                }
            } else {
                return Err(syntax(head.line, head.col, format!("unknown statement `{other}`")));
            }
        }
    }
    Ok(())
}

fn resolve_constants(d: &Draft) -> Result<BTreeMap<String, f64>> {
    let mut values = BTreeMap::new();
    let mut pending: Vec<&(String, Expr, usize, usize)> = d.consts.iter().collect();
    let mut names = BTreeSet::new();
    for (name, _, line, col) in &d.consts {
        if !names.insert(name.clone()) {
            return Err(syntax(*line, *col, format!("constant `{name}` defined twice")));
        }
    }
    while !pending.is_empty() {
        let before = pending.len();
        let mut still = Vec::new();
        for c in pending {
            let mut deps = BTreeSet::new();
            c.1.constants(&mut deps);
            if deps.iter().all(|n| values.contains_key(n)) {
                let v = c.1.substitute(&values).eval::<f64>(&[]).map_err(|e| match e {
                    Error::Evaluation { op: "var", .. } => syntax(c.2, c.3, "constants cannot depend on chart variables"),
                    other => other,
                })?;
                values.insert(c.0.clone(), v);
            } else {
                still.push(c);
            }
        }
        if still.len() == before {
            let c = still[0];
            return Err(syntax(c.2, c.3, format!("constant `{}` is circular or uses an unknown name", c.0)));
        }
        pending = still;
    }
    Ok(values)
}

fn finish(d: Draft, refs: &[Ref]) -> Result<ChartSpec> {
    let Some(m) = d.m else {
        return Err(Error::MissingInput("chart dimension `m`".into()));
    };
    let Some(n) = d.n else {
        return Err(Error::MissingInput("ambient dimension `n`".into()));
    };
    if m > MAX_DIM {
        return Err(Error::DimensionMismatch(format!("m = {m} exceeds the supported maximum {MAX_DIM}")));
    }
    if m >= n {
        return Err(Error::DimensionMismatch(format!("need m < n, got m = {m}, n = {n}")));
    }
    let constants = resolve_constants(&d)?;
    for r in refs {
        match variable_index(&r.name) {
            Some(k) if k < m => {}
            Some(_) => {
                return Err(Error::UnknownIdentifier {
                    name: r.name.clone(),
                    line: r.line,
                    col: r.col,
                })
            }
            None if builtin(&r.name).is_some() || constants.contains_key(&r.name) => {}
            None => {
                return Err(Error::UnknownIdentifier {
                    name: r.name.clone(),
                    line: r.line,
                    col: r.col,
                })
            }
        }
    }
    let constant = |e: &Expr| -> Result<f64> { e.substitute(&constants).eval::<f64>(&[]) };

    let kappa = match &d.kappa {
        None => return Err(Error::MissingInput("`ambient`".into())),
        Some(e) => constant(e)?,
    };
    if !(kappa <= 0.0) || !kappa.is_finite() {
        return Err(Error::domain(format!("ambient curvature must be finite and <= 0, got {kappa}")));
    }
    let space = SpaceKind { n, kappa };
    let want = space.coords();
    let (Some(&last), true) = (d.coords.keys().last(), d.coords.len() == want) else {
        return Err(Error::DimensionMismatch(format!(
            "ambient needs {want} coordinate expressions, got {}",
            d.coords.len()
        )));
    };
    if last + 1 != want {
        return Err(Error::DimensionMismatch(format!(
            "coordinates must be x1..x{want}, found x{}",
            last + 1
        )));
    }
    let exprs: Vec<Expr> = d.coords.values().map(|(e, ..)| e.clone()).collect();

    let mut declared: Vec<Option<AxisDomain>> = vec![None; m];
    let mut truncation = vec![None; m];
    for a in &d.axes {
        if a.axis >= m {
            return Err(Error::UnknownIdentifier {
                name: format!("u{}", a.axis + 1),
                line: a.line,
                col: a.col,
            });
        }
        let lo = constant(&a.lo).or_else(|e| infinite_bound(&a.lo, e))?;
        let hi = constant(&a.hi).or_else(|e| infinite_bound(&a.hi, e))?;
        if !(hi > lo) {
            return Err(syntax(a.line, a.col, format!("empty interval [{lo}, {hi}]")));
        }
        if a.periodic && !(lo.is_finite() && hi.is_finite()) {
            return Err(syntax(a.line, a.col, "a periodic axis needs finite bounds"));
        }
        truncation[a.axis] = a.truncate.as_ref().map(&constant).transpose()?;
        if let Some(t) = truncation[a.axis] {
            if !(t > 0.0) {
                return Err(syntax(a.line, a.col, "truncation must be positive"));
            }
        }
        let faces = !a.periodic && !a.cut;
        declared[a.axis] = Some(AxisDomain {
            lo,
            hi,
            periodic: a.periodic,
            lo_truncated: faces,
            hi_truncated: faces,
        });
    }
    for &(k, line, col) in &d.periodic {
        match declared.get_mut(k) {
            Some(Some(ax)) => {
                ax.periodic = true;
                ax.lo_truncated = false;
                ax.hi_truncated = false;
            }
            _ => {
                return Err(Error::UnknownIdentifier {
                    name: format!("u{}", k + 1),
                    line,
                    col,
                })
            }
        }
    }
    let declared: Vec<AxisDomain> = declared
        .into_iter()
        .enumerate()
        .map(|(k, ax)| ax.ok_or_else(|| Error::MissingInput(format!("domain of u{}", k + 1))))
        .collect::<Result<_>>()?;

    let point = |items: &Option<Vec<Expr>>, len: usize, what: &str| -> Result<Option<Vec<f64>>> {
        match items {
            None => Ok(None),
            Some(items) if items.len() != len => Err(Error::DimensionMismatch(format!(
                "{what} has {} entries, expected {len}",
                items.len()
            ))),
            Some(items) => items.iter().map(&constant).collect::<Result<Vec<_>>>().map(Some),
        }
    };
    let basepoint = point(&d.basepoint, m, "basepoint")?;
    let pole = point(&d.pole, want, "pole")?;

    let compiled = exprs.iter().map(|e| e.substitute(&constants)).collect();
    let mut spec = ChartSpec {
        m,
        n,
        kappa,
        exprs,
        constant_exprs: d.consts.iter().map(|(n, e, ..)| (n.clone(), e.clone())).collect(),
        constants,
        declared,
        truncation,
        domain: Vec::new(),
        compiled,
        basepoint,
        pole,
    };
    spec.domain = spec.effective_domain();
    if kappa < 0.0 {
        spec.validate_hyperboloid()?;
    }
    Ok(spec)
}

fn infinite_bound(e: &Expr, err: Error) -> Result<f64> {
    match e {
        Expr::Const(name) if name == "inf" => Ok(f64::INFINITY),
        Expr::Neg(inner) if matches!(inner.as_ref(), Expr::Const(n) if n == "inf") => Ok(f64::NEG_INFINITY),
        _ => Err(err),
    }
}

/// Residual tolerance of the hyperboloid constraint check.
pub const HYPERBOLOID_TOL: f64 = 1e-8;

impl ChartSpec {
    fn effective_domain(&self) -> Vec<AxisDomain> {
        self.declared
            .iter()
            .zip(&self.truncation)
            .map(|(ax, t)| {
                let mut ax = *ax;
                if let Some(t) = t {
                    if ax.lo == f64::NEG_INFINITY {
                        ax.lo = -t;
                        ax.lo_truncated = true;
                    }
                    if ax.hi == f64::INFINITY {
                        ax.hi = *t;
                        ax.hi_truncated = true;
                    }
                }
                ax
            })
            .collect()
    }

    pub fn space(&self) -> SpaceKind {
        SpaceKind {
            n: self.n,
            kappa: self.kappa,
        }
    }

    /// Replace the truncation of every axis with an infinite bound.
    pub fn with_truncation(mut self, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::domain("truncation must be positive"));
        }
        for (ax, tr) in self.declared.iter().zip(self.truncation.iter_mut()) {
            if !ax.is_bounded() {
                *tr = Some(t);
            }
        }
        self.domain = self.effective_domain();
        Ok(self)
    }

    /// Whether any axis was declared unbounded.
    pub fn has_unbounded_axes(&self) -> bool {
        self.declared.iter().any(|a| !a.is_bounded())
    }

    /// Evaluate the coordinate expressions on any scalar type.
    pub fn coords<S: Scalar>(&self, u: &[S]) -> Result<Vec<S>> {
        self.compiled.iter().map(|e| e.eval(u)).collect()
    }

    /// Check the hyperboloid constraint at a lattice of interior points.
    pub fn validate_hyperboloid(&self) -> Result<()> {
        let m = self.m;
        let per_axis = 3usize;
        let total = per_axis.pow(m as u32);
        for idx in 0..total {
            let mut u = Vec::with_capacity(m);
            let mut rest = idx;
            for ax in &self.domain {
                let k = rest % per_axis;
                rest /= per_axis;
                let (lo, hi) = if ax.is_bounded() {
                    (ax.lo, ax.hi)
                } else {
                    (ax.lo.max(-1.0), ax.hi.min(1.0))
                };
                u.push(lo + (k as f64 + 1.0) / (per_axis as f64 + 1.0) * (hi - lo));
            }
            let x = self.coords::<f64>(&u)?;
            let q = crate::spaceform::lorentz(&x, &x);
            let scale: f64 = x.iter().map(|v| v * v).sum::<f64>() * -self.kappa;
            let resid = (q * self.kappa - 1.0).abs();
            if resid > HYPERBOLOID_TOL * scale.max(1.0) || x[x.len() - 1] <= 0.0 {
                return Err(Error::geometry(format!(
                    "chart leaves the hyperboloid <x,x> = 1/kappa at {u:?} (residual {resid:e})"
                )));
            }
        }
        Ok(())
    }

    /// Render back to chart source.
    pub fn to_source(&self) -> String {
        let mut out = format!("m = {}; n = {}; ", self.m, self.n);
        if self.kappa == 0.0 {
            out += "ambient = euclidean\n";
        } else {
            out += &format!("ambient = hyperbolic({:?})\n", self.kappa);
        }
        for (name, e) in &self.constant_exprs {
            out += &format!("const {name} = {e}\n");
        }
        for (k, e) in self.exprs.iter().enumerate() {
            out += &format!("x{} = {e}\n", k + 1);
        }
        let axes: Vec<String> = self
            .declared
            .iter()
            .zip(&self.truncation)
            .enumerate()
            .map(|(k, (ax, t))| {
                let bound = |v: f64| {
                    if v == f64::INFINITY {
                        "inf".to_string()
                    } else if v == f64::NEG_INFINITY {
                        "-inf".to_string()
                    } else {
                        format!("{v:?}")
                    }
                };
                let mut s = format!("u{} in [{}, {}]", k + 1, bound(ax.lo), bound(ax.hi));
                if ax.periodic {
                    s += " periodic";
                } else if !ax.lo_truncated && !ax.hi_truncated {
                    s += " cut";
                }
                if let Some(t) = t {
                    s += &format!(" truncate {t:?}");
                }
                s
            })
            .collect();
        out += &format!("domain {}\n", axes.join(", "));
        let tuple = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        if let Some(b) = &self.basepoint {
            out += &format!("basepoint = ({})\n", tuple(b));
        }
        if let Some(p) = &self.pole {
            out += &format!("pole = ({})\n", tuple(p));
        }
        out
    }
}

/// Evaluate a parsed chart at a point, returning one jet per coordinate.
pub fn eval_chart(spec: &ChartSpec, point: &[f64]) -> Result<Vec<Jet2>> {
    spec.eval_jets(point)
}

impl Chart for ChartSpec {
    fn name(&self) -> String {
        "chart".into()
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn space(&self) -> SpaceKind {
        ChartSpec::space(self)
    }

    fn domain(&self) -> &[AxisDomain] {
        &self.domain
    }

    fn jets_unchecked(&self, u: &[Jet2]) -> Result<Vec<Jet2>> {
        self.coords(u)
    }

    fn position_unchecked(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.coords(u)
    }

    fn basepoint(&self) -> Vec<f64> {
        match &self.basepoint {
            Some(b) => b.clone(),
            None => self
                .domain
                .iter()
                .map(|d| {
                    if d.periodic {
                        d.lo
                    } else if d.is_bounded() {
                        0.5 * (d.lo + d.hi)
                    } else {
                        0.0f64.clamp(d.lo, d.hi)
                    }
                })
                .collect(),
        }
    }

    fn pole(&self) -> Option<Vec<f64>> {
        self.pole.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CIRCLE: &str = "m=1; n=2; ambient=euclidean; x1 = cos(u1); x2 = sin(u1); domain u1 in [0, 6.2831853]";
    const CATENOID: &str = "m=2; n=3; ambient=euclidean; x1 = cosh(u1)*cos(u2); x2 = cosh(u1)*sin(u2); x3 = u1; domain u1 in [-T, T], u2 in [0, 6.2831853]; const T = 5";

    fn parse_expr(src: &str) -> Expr {
        let mut p = Parser {
            toks: lex(src).unwrap(),
            pos: 0,
            refs: Vec::new(),
        };
        let e = p.expr().unwrap();
        assert_eq!(p.peek().tok, Tok::Eof);
        e
    }

    #[test]
    fn circle_derivatives_at_zero() {
        let spec = parse_chart(CIRCLE).unwrap();
        let x = eval_chart(&spec, &[0.0]).unwrap();
        assert_eq!(x[0].value(), 1.0);
        assert_eq!(x[1].value(), 0.0);
        assert_eq!(x[0].grad(), &[0.0]);
        assert_eq!(x[1].grad(), &[1.0]);
        assert_eq!(x[0].second(0, 0), -1.0);
        assert_eq!(x[1].second(0, 0), 0.0);
    }

    #[test]
    fn circle_rejects_points_outside_domain() {
        let spec = parse_chart(CIRCLE).unwrap();
        assert!(matches!(eval_chart(&spec, &[10.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn catenoid_with_late_constant() {
        let spec = parse_chart(CATENOID).unwrap();
        assert_eq!(spec.domain()[0].lo, -5.0);
        let x = eval_chart(&spec, &[0.0, 0.0]).unwrap();
        let pos: Vec<f64> = x.iter().map(|j| j.value()).collect();
        assert_eq!(pos, vec![1.0, 0.0, 0.0]);
        assert_eq!(x[2].grad(), &[1.0, 0.0]);
        assert_eq!(x[2].hessian(), vec![vec![0.0; 2]; 2]);
    }

    #[test]
    fn unclosed_parenthesis_is_located() {
        match parse_chart("x1 = cos(u1") {
            Err(Error::Syntax { line, col, message }) => {
                assert_eq!((line, col), (1, 9));
                assert!(message.contains("unclosed"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn positioned_identifier_errors() {
        let src = "m=1; n=2; ambient=euclidean\nx1 = cos(u2); x2 = sin(u1); domain u1 in [0, 1]";
        match parse_chart(src) {
            Err(Error::UnknownIdentifier { name, line, col }) => {
                assert_eq!(name, "u2");
                assert_eq!((line, col), (2, 10));
            }
            other => panic!("{other:?}"),
        }
        let src = "m=1; n=2; ambient=euclidean; x1 = frob(u1); x2 = u1; domain u1 in [0, 1]";
        assert!(matches!(parse_chart(src), Err(Error::UnknownIdentifier { .. })));
        let src = "m=1; n=2; ambient=euclidean; x1 = cos(u1, u1); x2 = u1; domain u1 in [0, 1]";
        assert!(matches!(
            parse_chart(src),
            Err(Error::Arity { expected: 1, got: 2, .. })
        ));
    }

    #[test]
    fn coordinate_count_must_match_ambient() {
        let src = "m=1; n=2; ambient=euclidean; x1 = u1; domain u1 in [0, 1]";
        assert!(matches!(parse_chart(src), Err(Error::DimensionMismatch(_))));
        let src = "m=1; n=2; ambient=hyperbolic(-1); x1 = u1; x2 = 0; domain u1 in [0, 1]";
        assert!(matches!(parse_chart(src), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn hyperboloid_validation() {
        let good = "m=1; n=2; ambient=hyperbolic(-1)\nx1 = sinh(u1); x2 = 0; x3 = cosh(u1)\ndomain u1 in [-inf, inf] truncate 3";
        let spec = parse_chart(good).unwrap();
        assert_eq!(spec.domain()[0].hi, 3.0);
        assert!(spec.domain()[0].hi_truncated);
        let bad = "m=1; n=2; ambient=hyperbolic(-1)\nx1 = u1; x2 = 0; x3 = 1\ndomain u1 in [0.5, 1]";
        assert!(matches!(parse_chart(bad), Err(Error::Geometry(_))));
    }

    #[test]
    fn precedence() {
        assert_eq!(parse_expr("-u1^2").to_string(), "-u1^2.0");
        assert_eq!(
            parse_expr("-u1^2"),
            Expr::Neg(Box::new(Expr::Binary(
                BinOp::Pow,
                Box::new(Expr::Var(0)),
                Box::new(Expr::Num(2.0))
            )))
        );
        assert_eq!(parse_expr("2^3^2").eval::<f64>(&[]).unwrap(), 512.0);
        assert_eq!(parse_expr("8 - 3 - 2").eval::<f64>(&[]).unwrap(), 3.0);
        assert_eq!(parse_expr("8 / 4 / 2").eval::<f64>(&[]).unwrap(), 1.0);
        assert_eq!(parse_expr("2 * -3").eval::<f64>(&[]).unwrap(), -6.0);
        assert_eq!(parse_expr("(1 - 2) * 3").to_string(), "(1.0 - 2.0)*3.0");
        assert_eq!(parse_expr("1 - (2 - 3)").to_string(), "1.0 - (2.0 - 3.0)");
        assert_eq!(parse_expr("(-2)^2").eval::<f64>(&[]).unwrap(), 4.0);
        assert_eq!(parse_expr("(-2)^2").to_string(), "(-2.0)^2.0");
    }

    #[test]
    fn source_round_trip() {
        let spec = parse_chart(CATENOID).unwrap();
        let again = parse_chart(&spec.to_source()).unwrap();
        assert_eq!(spec.exprs, again.exprs);
        assert_eq!(spec.domain(), again.domain());
        assert_eq!(spec.constants, again.constants);
    }

    #[test]
    fn newlines_separate_statements_and_comments_are_skipped() {
        let src = "# unit circle\nm = 1\nn = 2\nambient = euclidean\nx1 = cos(u1)\nx2 = sin(u1)\ndomain u1 in [0, 2*pi] periodic\n";
        let spec = parse_chart(src).unwrap();
        assert!(spec.domain()[0].periodic);
        assert!((spec.domain()[0].hi - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..1e6f64).prop_map(Expr::Num),
            (0..MAX_DIM).prop_map(Expr::Var),
            prop::sample::select(vec!["a", "T", "r0"]).prop_map(|s| Expr::Const(s.to_string())),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let binop = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (binop, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
                (prop::sample::select(UnaryFn::ALL.to_vec()), inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn printing_then_parsing_is_identity(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_expr(&text), e, "{}", text);
        }
    }
}
