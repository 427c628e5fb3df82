//! Arithmetic expressions over controls `u1..un` and states `y1..ym`.
//!
//! Grammar (usual precedence, `^` binds tightest and is right associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | u<k> | y<k> | sin(expr) | cos(expr) | '(' expr ')'
//! ```

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based control coordinate.
    Control(usize),
    /// Zero-based state coordinate.
    State(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

/// Parse failure; `offset` is a byte offset into the parsed text.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

impl Expr {
    pub fn eval(&self, u: &[f64], y: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Control(k) => u[*k],
            Expr::State(k) => y[*k],
            Expr::Neg(a) => -a.eval(u, y),
            Expr::Add(a, b) => a.eval(u, y) + b.eval(u, y),
            Expr::Sub(a, b) => a.eval(u, y) - b.eval(u, y),
            Expr::Mul(a, b) => a.eval(u, y) * b.eval(u, y),
            Expr::Div(a, b) => a.eval(u, y) / b.eval(u, y),
            Expr::Pow(a, b) => {
                let base = a.eval(u, y);
                match **b {
                    Expr::Const(e) if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 => {
                        base.powi(e as i32)
                    }
                    _ => base.powf(b.eval(u, y)),
                }
            }
            Expr::Sin(a) => a.eval(u, y).sin(),
            Expr::Cos(a) => a.eval(u, y).cos(),
        }
    }

    pub fn depends_on_control(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::State(_) => false,
            Expr::Control(_) => true,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.depends_on_control(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on_control() || b.depends_on_control(),
        }
    }

    pub fn depends_on_state(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Control(_) => false,
            Expr::State(_) => true,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.depends_on_state(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on_state() || b.depends_on_state(),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        if self.depends_on_control() || self.depends_on_state() {
            None
        } else {
            Some(self.eval(&[], &[]))
        }
    }

    /// Rewrites the expression as a polynomial in the controls whose
    /// coefficients are control-free expressions. Returns `None` when the
    /// expression is not polynomial in `u` (e.g. `sin(u1)` or `1/u1`).
    pub fn control_polynomial(&self, n: usize) -> Option<ControlPolynomial> {
        let mut out = match self {
            Expr::Const(_) | Expr::State(_) => ControlPolynomial::constant(self.clone(), n),
            Expr::Control(k) => {
                let mut exps = vec![0; n];
                exps[*k] = 1;
                let mut terms = BTreeMap::new();
                terms.insert(exps, Expr::Const(1.0));
                ControlPolynomial { n, terms }
            }
            Expr::Neg(a) => a.control_polynomial(n)?.scale(&Expr::Const(-1.0)),
            Expr::Add(a, b) => a.control_polynomial(n)?.add(b.control_polynomial(n)?, false),
            Expr::Sub(a, b) => a.control_polynomial(n)?.add(b.control_polynomial(n)?, true),
            Expr::Mul(a, b) => a.control_polynomial(n)?.mul(&b.control_polynomial(n)?),
            Expr::Div(a, b) => {
                if b.depends_on_control() {
                    return None;
                }
                let p = a.control_polynomial(n)?;
                let terms = p
                    .terms
                    .into_iter()
                    .map(|(k, c)| (k, Expr::Div(Box::new(c), b.clone())))
                    .collect();
                ControlPolynomial { n, terms }
            }
            Expr::Pow(a, b) => {
                if !a.depends_on_control() {
                    return Some(ControlPolynomial::constant(self.clone(), n));
                }
                let e = b.constant_value()?;
                if e < 0.0 || e.fract() != 0.0 || e > 64.0 {
                    return None;
                }
                let base = a.control_polynomial(n)?;
                let mut acc = ControlPolynomial::constant(Expr::Const(1.0), n);
                for _ in 0..e as usize {
                    acc = acc.mul(&base);
                }
                acc
            }
            Expr::Sin(a) | Expr::Cos(a) => {
                if a.depends_on_control() {
                    return None;
                }
                ControlPolynomial::constant(self.clone(), n)
            }
        };
        out.prune();
        Some(out)
    }
}

/// Map from control exponent vectors to control-free coefficients.
#[derive(Debug, Clone)]
pub struct ControlPolynomial {
    n: usize,
    pub terms: BTreeMap<Vec<u32>, Expr>,
}

impl ControlPolynomial {
    fn constant(e: Expr, n: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; n], e);
        Self { n, terms }
    }

    fn scale(mut self, c: &Expr) -> Self {
        for v in self.terms.values_mut() {
            *v = Expr::Mul(Box::new(c.clone()), Box::new(v.clone()));
        }
        self
    }

    fn add(mut self, other: Self, subtract: bool) -> Self {
        for (k, v) in other.terms {
            let v = if subtract { Expr::Neg(Box::new(v)) } else { v };
            let merged = match self.terms.remove(&k) {
                Some(old) => Expr::Add(Box::new(old), Box::new(v)),
                None => v,
            };
            self.terms.insert(k, merged);
        }
        self
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = Self {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                let key: Vec<u32> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                let prod = Expr::Mul(Box::new(va.clone()), Box::new(vb.clone()));
                let merged = match out.terms.remove(&key) {
                    Some(old) => Expr::Add(Box::new(old), Box::new(prod)),
                    None => prod,
                };
                out.terms.insert(key, merged);
            }
        }
        out
    }

    /// Drops terms whose coefficient is the constant zero.
    fn prune(&mut self) {
        self.terms
            .retain(|_, c| c.constant_value().map_or(true, |v| v != 0.0));
    }

    pub fn max_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|k| k.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn coefficient(&self, exps: &[u32]) -> Option<&Expr> {
        self.terms.get(exps)
    }

    pub fn constant_coefficient(e: &Expr) -> Option<f64> {
        e.constant_value()
    }
}

/// Parses an expression, with `n` controls and `m` states in scope.
pub fn parse(text: &str, n: usize, m: usize) -> Result<Expr, ExprError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        n,
        m,
        end: text.len(),
    };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ExprError {
            offset: t.offset,
            message: format!("unexpected token {:?}", t.kind),
        });
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
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
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| ExprError {
                offset: start,
                message: format!("bad number literal '{lit}'"),
            })?;
            out.push(Token {
                kind: TokenKind::Number(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(text[start..i].to_string()),
                offset: start,
            });
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                _ => {
                    return Err(ExprError {
                        offset: start,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            i += 1;
            out.push(Token {
                kind,
                offset: start,
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    n: usize,
    m: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: TokenKind::Op(c), .. }) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ExprError {
                offset: self.offset(),
                message: format!("expected {kind:?}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        let tok = self.peek().cloned().ok_or(ExprError {
            offset,
            message: "unexpected end of expression".into(),
        })?;
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "sin" | "cos" => {
                    self.expect(TokenKind::LParen)?;
                    let arg = self.expr()?;
                    self.expect(TokenKind::RParen)?;
                    Ok(if name == "sin" {
                        Expr::Sin(Box::new(arg))
                    } else {
                        Expr::Cos(Box::new(arg))
                    })
                }
                _ => self.variable(&name, offset),
            },
            other => Err(ExprError {
                offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Expr, ExprError> {
        let err = |message: String| ExprError { offset, message };
        let (prefix, digits) = name.split_at(1);
        let k: usize = digits
            .parse()
            .map_err(|_| err(format!("unknown identifier '{name}'")))?;
        match prefix {
            "u" if (1..=self.n).contains(&k) => Ok(Expr::Control(k - 1)),
            "y" if (1..=self.m).contains(&k) => Ok(Expr::State(k - 1)),
            "u" | "y" => Err(err(format!("variable '{name}' out of range"))),
            _ => Err(err(format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let e = parse("-y1^2 + 2*3^2^1 - 4/2", 1, 1).unwrap();
        assert_eq!(e.eval(&[0.0], &[3.0]), -9.0 + 18.0 - 2.0);
        let e = parse("2^3^2", 0, 0).unwrap();
        assert_eq!(e.eval(&[], &[]), 512.0);
    }

    #[test]
    fn pendulum_dynamics_expression() {
        let e = parse("u1 - 0.3*y2 - 4*sin(y1)", 1, 2).unwrap();
        let v = e.eval(&[0.5], &[1.0, -2.0]);
        assert!((v - (0.5 + 0.6 - 4.0 * 1.0f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse("y1 + y3", 1, 2).unwrap_err();
        assert_eq!(err.offset, 5);
        let err = parse("y1 + (u1", 1, 2).unwrap_err();
        assert_eq!(err.offset, 8);
        let err = parse("y1 $ 2", 1, 2).unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(parse("tan(y1)", 1, 1).is_err());
    }

    #[test]
    fn control_polynomial_decomposition() {
        let e = parse("y2*u1 + sin(y1) + 3*u1^2 - u2*u2", 2, 2).unwrap();
        let p = e.control_polynomial(2).unwrap();
        assert_eq!(p.max_degree(), 2);
        let c = p.coefficient(&[2, 0]).unwrap();
        assert_eq!(ControlPolynomial::constant_coefficient(c), Some(3.0));
        let c = p.coefficient(&[0, 2]).unwrap();
        assert_eq!(ControlPolynomial::constant_coefficient(c), Some(-1.0));
        let lin = p.coefficient(&[1, 0]).unwrap();
        assert_eq!(lin.eval(&[], &[0.0, 7.0]), 7.0);
        assert!(parse("sin(u1)", 1, 1)
            .unwrap()
            .control_polynomial(1)
            .is_none());
        assert!(parse("y1/u1", 1, 1).unwrap().control_polynomial(1).is_none());
    }

    #[test]
    fn cancelling_terms_are_pruned() {
        let p = parse("u1 - u1 + y1", 1, 1)
            .unwrap()
            .control_polynomial(1)
            .unwrap();
        assert_eq!(p.max_degree(), 0);
    }
}
