//! Arithmetic expressions for user-defined right-hand sides.
//!
//! Grammar: `+ - * /`, `^` (right associative), parentheses, unary minus,
//! numeric literals, names, and the calls `pow(a, b)`, `exp(a)`, `ln(a)`,
//! `sqrt(a)`. Names resolve to states, parameters or named constants, in
//! that order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    State(usize),
    Param(usize),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Pow,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "pow" => (Func::Pow, 2),
            "exp" => (Func::Exp, 1),
            "ln" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            _ => return None,
        })
    }
}

/// Name resolution for [`parse`].
pub struct Scope<'a> {
    pub states: &'a [String],
    pub params: &'a [String],
    pub constants: &'a BTreeMap<String, f64>,
}

impl Scope<'_> {
    fn resolve(&self, name: &str) -> Option<Expr> {
        if let Some(i) = self.states.iter().position(|s| s == name) {
            return Some(Expr::State(i));
        }
        if let Some(i) = self.params.iter().position(|s| s == name) {
            return Some(Expr::Param(i));
        }
        self.constants.get(name).map(|v| Expr::Num(*v))
    }
}

impl Expr {
    pub fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::State(i) => x[*i],
            Expr::Param(i) => p[*i],
            Expr::Neg(e) => -e.eval(x, p),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval(x, p), r.eval(x, p));
                match op {
                    Op::Add => l + r,
                    Op::Sub => l - r,
                    Op::Mul => l * r,
                    Op::Div => l / r,
                    Op::Pow => pow(l, r),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(x, p);
                match f {
                    Func::Pow => pow(a, args[1].eval(x, p)),
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Sqrt => a.sqrt(),
                }
            }
        }
    }
}

// integer exponents go through powi so negative bases stay well defined
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{text}` at {start}")))?;
            out.push((start, Tok::Num(v)));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Name(src[start..i].to_string())));
        } else if "+-*/^(),".contains(ch) {
            out.push((i, Tok::Sym(ch)));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{ch}` at {i}")));
        }
    }
    Ok(out)
}

struct Parser<'a, 'b> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    scope: &'a Scope<'b>,
}

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn error(&self, msg: &str) -> Error {
        match self.toks.get(self.pos) {
            Some((at, t)) => Error::Parse(format!("{msg} at offset {at}, found {t:?}")),
            None => Error::Parse(format!("{msg} at end of input")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Name(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let (f, arity) = Func::lookup(&name)
                        .ok_or_else(|| Error::Parse(format!("unknown function `{name}`")))?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != arity {
                        return Err(Error::Parse(format!(
                            "`{name}` takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    return Ok(Expr::Call(f, args));
                }
                self.scope
                    .resolve(&name)
                    .ok_or_else(|| Error::Parse(format!("unknown name `{name}`")))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.error("expected a number, name or `(`")),
        }
    }
}

pub fn parse(src: &str, scope: &Scope<'_>) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        scope,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}
