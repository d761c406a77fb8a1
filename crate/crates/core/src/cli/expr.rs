//! Closed-form expressions for config values and function specs.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Constants: `pi`, `e`, `i`. Functions: `exp log sqrt sin cos tan sinh cosh tanh abs re im conj`,
//! `gauss(d_1, ..., d_k, sigma)` = exp(-|d|^2 / (2 sigma^2)) and
//! `bump(d_1, ..., d_k, sigma, rho)`, the same Gaussian switched off smoothly over rho - sigma < |d| < rho.

use crate::error::{Error, Result};
use crate::geometry::smooth_step;
use crate::starproduct::function::FieldFn;
use num_complex::Complex64;
use std::f64::consts::{E, PI};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(Complex64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Abs,
    Re,
    Im,
    Conj,
    Gauss,
    Bump,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "re" => Func::Re,
            "im" => Func::Im,
            "conj" => Func::Conj,
            "gauss" => Func::Gauss,
            "bump" => Func::Bump,
            _ => return None,
        })
    }

    fn min_args(self) -> usize {
        match self {
            Func::Gauss => 2,
            Func::Bump => 3,
            _ => 1,
        }
    }

    fn variadic(self) -> bool {
        matches!(self, Func::Gauss | Func::Bump)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Name(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let v = text.parse::<f64>().map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Name(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expression(format!("expected '{op}' at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(Complex64::new(v, 0.0)))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Token::Name(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let f = Func::lookup(&name).ok_or_else(|| Error::Expression(format!("unknown function '{name}'")))?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() < f.min_args() || (!f.variadic() && args.len() != 1) {
                        return Err(Error::Expression(format!("wrong number of arguments to '{name}'")));
                    }
                    return Ok(Node::Call(f, args));
                }
                if let Some(k) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(k));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(Complex64::new(PI, 0.0))),
                    "e" => Ok(Node::Num(Complex64::new(E, 0.0))),
                    "i" => Ok(Node::Num(Complex64::new(0.0, 1.0))),
                    _ => Err(Error::Expression(format!("unknown name '{name}' (variables: {})", self.vars.join(", ")))),
                }
            }
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }
}

fn eval(node: &Node, x: &[f64]) -> Complex64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(k) => Complex64::new(x[*k], 0.0),
        Node::Neg(a) => -eval(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => {
                    if b.im == 0.0 && b.re.fract() == 0.0 && b.re.abs() <= i32::MAX as f64 {
                        a.powi(b.re as i32)
                    } else {
                        a.powc(b)
                    }
                }
            }
        }
        Node::Call(f, args) => {
            let v: Vec<Complex64> = args.iter().map(|a| eval(a, x)).collect();
            let a = v[0];
            match f {
                Func::Exp => a.exp(),
                Func::Log => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Sinh => a.sinh(),
                Func::Cosh => a.cosh(),
                Func::Tanh => a.tanh(),
                Func::Abs => Complex64::new(a.norm(), 0.0),
                Func::Re => Complex64::new(a.re, 0.0),
                Func::Im => Complex64::new(a.im, 0.0),
                Func::Conj => a.conj(),
                Func::Gauss => {
                    let (d, sigma) = v.split_at(v.len() - 1);
                    let r2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
                    Complex64::new((-r2 / (2.0 * sigma[0].re * sigma[0].re)).exp(), 0.0)
                }
                Func::Bump => {
                    let (d, p) = v.split_at(v.len() - 2);
                    let (sigma, rho) = (p[0].re, p[1].re);
                    let r2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
                    let w = smooth_step((rho - r2.sqrt()) / sigma);
                    if w == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    Complex64::new((-r2 / (2.0 * sigma * sigma)).exp() * w, 0.0)
                }
            }
        }
    }
}

/// A parsed expression in a fixed list of real variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl Expr {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
            vars,
        };
        if p.tokens.is_empty() {
            return Err(Error::Expression("empty expression".into()));
        }
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!("trailing input in '{src}'")));
        }
        Ok(Self {
            source: src.trim().to_string(),
            root,
            arity: vars.len(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.arity);
        eval(&self.root, x)
    }

    /// Value of an expression without variables, required to be real and finite.
    pub fn constant(src: &str) -> Result<f64> {
        let v = Self::parse(src, &[])?.eval(&[]);
        if v.im != 0.0 || !v.re.is_finite() {
            return Err(Error::Expression(format!("'{}' is not a finite real number", src.trim())));
        }
        Ok(v.re)
    }

    pub fn field(self) -> FieldFn {
        Arc::new(move |x: &[f64]| self.eval(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_constants() {
        assert_eq!(Expr::constant("1 + 2 * 3 ^ 2").unwrap(), 19.0);
        assert_eq!(Expr::constant("-2^2").unwrap(), -4.0);
        assert_eq!(Expr::constant("2^-1").unwrap(), 0.5);
        assert_eq!(Expr::constant("1.5e-3 * 2e3").unwrap(), 3.0);
        assert!((Expr::constant("cos(pi)").unwrap() + 1.0).abs() < 1e-15);
        assert!(Expr::constant("i").is_err());
    }

    #[test]
    fn variables_and_complex() {
        let e = Expr::parse("exp(i * x) * y", &["x", "y"]).unwrap();
        let v = e.eval(&[PI / 2.0, 3.0]);
        assert!((v - Complex64::new(0.0, 3.0)).norm() < 1e-15);
        assert!(Expr::parse("z", &["x"]).is_err());
    }

    #[test]
    fn bump_is_compactly_supported() {
        let e = Expr::parse("bump(x - 1, y, 0.2, 1.5)", &["x", "y"]).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0]).re, 1.0);
        assert_eq!(e.eval(&[2.5, 0.0]).norm(), 0.0);
        assert!(e.eval(&[2.49, 0.0]).norm() > 0.0);
        let g = Expr::parse("gauss(x, y, 1)", &["x", "y"]).unwrap();
        assert!((g.eval(&[1.0, 1.0]).re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        for bad in ["", "1 +", "(1", "foo(1)", "sin(1, 2)", "bump(1, 2)", "1 $ 2", "2 3"] {
            assert!(Expr::parse(bad, &["x"]).is_err(), "{bad}");
        }
    }
}
