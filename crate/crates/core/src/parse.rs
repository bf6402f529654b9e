//! Infix expression syntax: `+ - * / ^`, `exp(u)`, `sqrt(u)` and rational
//! exponents `(u)^(p/q)` that declare radical atoms on the fly.
//!
//! Parsing produces an [`Ast`]; [`Builder`] turns it into an
//! [`Expression`], extending the tower as atoms are met.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::coeff::Coefficient;
use crate::error::MathError;
use crate::expr::Expression;
use crate::poly::{Monomial, Poly, MAX_VARS};
use crate::tower::Tower;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(Coefficient),
    Var(String),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    /// Base raised to the rational exponent `p/q`.
    Pow(Box<Ast>, i64, i64),
    Call(String, Box<Ast>),
}

impl Ast {
    fn prec(&self) -> u8 {
        match self {
            Ast::Add(..) | Ast::Sub(..) => 1,
            Ast::Mul(..) | Ast::Div(..) => 2,
            Ast::Neg(..) => 3,
            Ast::Pow(..) => 4,
            Ast::Num(c) if !c.is_integer() || c.is_negative() => 2,
            _ => 5,
        }
    }

    fn wrap(&self, min: u8) -> String {
        if self.prec() < min {
            format!("({self})")
        } else {
            self.to_string()
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Num(c) => write!(f, "{c}"),
            Ast::Var(v) => write!(f, "{v}"),
            Ast::Neg(a) => write!(f, "-{}", a.wrap(3)),
            Ast::Add(a, b) => write!(f, "{} + {}", a.wrap(1), b.wrap(2)),
            Ast::Sub(a, b) => write!(f, "{} - {}", a.wrap(1), b.wrap(2)),
            Ast::Mul(a, b) => write!(f, "{}*{}", a.wrap(2), b.wrap(3)),
            Ast::Div(a, b) => write!(f, "{}/{}", a.wrap(2), b.wrap(3)),
            Ast::Pow(a, p, q) => {
                let base = a.wrap(5);
                match (*p, *q) {
                    (p, 1) if p >= 0 => write!(f, "{base}^{p}"),
                    (p, 1) => write!(f, "{base}^({p})"),
                    (p, q) => write!(f, "{base}^({p}/{q})"),
                }
            }
            Ast::Call(name, a) => write!(f, "{name}({a})"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Coefficient),
    Ident(String),
    Sym(char),
    End,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] == b' ' || self.src[self.pos] == b'\t') {
            self.pos += 1;
        }
    }

    fn col(&self) -> usize {
        self.col0 + self.pos + 1
    }

    fn peek(&mut self) -> Result<(Tok, usize), ParseError> {
        let save = self.pos;
        let r = self.next();
        let end = self.pos;
        self.pos = save;
        r.map(|t| (t, end))
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col(), message: msg.into() }
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        self.skip_ws();
        let Some(&c) = self.src.get(self.pos) else { return Ok(Tok::End) };
        if c.is_ascii_digit() || (c == b'.' && self.src.get(self.pos + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = self.pos;
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return parse_decimal(text).map(Tok::Num).ok_or_else(|| self.err(format!("malformed number '{text}'")));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            return Ok(Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok(Tok::Sym(c as char));
        }
        Err(self.err(format!("unexpected character '{}'", c as char)))
    }

    fn expect(&mut self, ch: char) -> Result<(), ParseError> {
        match self.next()? {
            Tok::Sym(c) if c == ch => Ok(()),
            t => Err(self.err(format!("expected '{ch}', found {}", describe(&t)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(c) => format!("number {c}"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::End => "end of input".into(),
    }
}

fn parse_decimal(text: &str) -> Option<Coefficient> {
    let mut parts = text.split('.');
    let int = parts.next()?;
    let frac = parts.next().unwrap_or("");
    if parts.next().is_some() {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { return None } else { digits.parse().ok()? };
    let d = num_traits::pow(BigInt::from(10), frac.len());
    Some(Coefficient::from_big(num_rational::BigRational::new(n, d)))
}

struct Parser<'a> {
    lex: Lexer<'a>,
}

impl<'a> Parser<'a> {
    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.lex.peek()?.0 {
                Tok::Sym('+') => {
                    self.lex.next()?;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Sym('-') => {
                    self.lex.next()?;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.lex.peek()?.0 {
                Tok::Sym('*') => {
                    self.lex.next()?;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Sym('/') => {
                    self.lex.next()?;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        match self.lex.peek()?.0 {
            Tok::Sym('-') => {
                self.lex.next()?;
                Ok(Ast::Neg(Box::new(self.unary()?)))
            }
            Tok::Sym('+') => {
                self.lex.next()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.primary()?;
        if let Tok::Sym('^') = self.lex.peek()?.0 {
            self.lex.next()?;
            let (p, q) = self.exponent()?;
            return Ok(Ast::Pow(Box::new(base), p, q));
        }
        Ok(base)
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        match self.lex.next()? {
            Tok::Num(c) if c.is_integer() => {
                i64::try_from(c.numer()).map_err(|_| self.lex.err("exponent too large"))
            }
            t => Err(self.lex.err(format!("expected integer exponent, found {}", describe(&t)))),
        }
    }

    /// `n`, `(n)`, `(-n)`, `(p/q)`, `(-p/q)`.
    fn exponent(&mut self) -> Result<(i64, i64), ParseError> {
        if let Tok::Num(_) = self.lex.peek()?.0 {
            return Ok((self.int()?, 1));
        }
        self.lex.expect('(')?;
        let neg = if let Tok::Sym('-') = self.lex.peek()?.0 {
            self.lex.next()?;
            true
        } else {
            false
        };
        let p = self.int()?;
        let q = if let Tok::Sym('/') = self.lex.peek()?.0 {
            self.lex.next()?;
            self.int()?
        } else {
            1
        };
        self.lex.expect(')')?;
        if q <= 0 {
            return Err(self.lex.err("exponent denominator must be positive"));
        }
        Ok((if neg { -p } else { p }, q))
    }

    fn primary(&mut self) -> Result<Ast, ParseError> {
        self.lex.skip_ws();
        let col = self.lex.col();
        match self.lex.next()? {
            Tok::Num(c) => Ok(Ast::Num(c)),
            Tok::Ident(name) => {
                if let Tok::Sym('(') = self.lex.peek()?.0 {
                    if name != "exp" && name != "sqrt" {
                        return Err(ParseError {
                            line: self.lex.line,
                            col,
                            message: format!("unknown function '{name}' (expected exp or sqrt)"),
                        });
                    }
                    self.lex.next()?;
                    let arg = self.expr()?;
                    self.lex.expect(')')?;
                    return Ok(Ast::Call(name, Box::new(arg)));
                }
                Ok(Ast::Var(name))
            }
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.lex.expect(')')?;
                Ok(e)
            }
            t => Err(ParseError {
                line: self.lex.line,
                col,
                message: format!("expected number, identifier or '(', found {}", describe(&t)),
            }),
        }
    }
}

/// Parses a complete expression. `line` and `col0` locate the text inside
/// a larger script for error messages.
pub fn parse_ast_at(text: &str, line: usize, col0: usize) -> Result<Ast, ParseError> {
    let mut p = Parser { lex: Lexer { src: text.as_bytes(), pos: 0, line, col0 } };
    let e = p.expr()?;
    match p.lex.next()? {
        Tok::End => Ok(e),
        t => Err(p.lex.err(format!("unexpected {} after expression", describe(&t)))),
    }
}

pub fn parse_ast(text: &str) -> Result<Ast, ParseError> {
    parse_ast_at(text, 1, 0)
}

/// Errors while turning syntax into an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum BuildError {
    Parse(ParseError),
    Math(MathError),
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::Parse(e) => write!(f, "{e}"),
            BuildError::Math(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for BuildError {}

impl From<ParseError> for BuildError {
    fn from(e: ParseError) -> Self {
        BuildError::Parse(e)
    }
}

impl From<MathError> for BuildError {
    fn from(e: MathError) -> Self {
        BuildError::Math(e)
    }
}

/// Builds expressions from syntax, growing the tower as needed.
pub struct Builder {
    pub tower: Arc<Tower>,
    /// Whether unknown identifiers become free symbols.
    pub allow_symbols: bool,
}

impl Builder {
    pub fn new(tower: Arc<Tower>) -> Self {
        Builder { tower, allow_symbols: false }
    }

    pub fn parse(&mut self, text: &str) -> Result<Expression, BuildError> {
        let ast = parse_ast(text)?;
        Ok(self.build(&ast)?)
    }

    fn lift(&self, e: Expression) -> Result<Expression, MathError> {
        e.lift(&self.tower)
    }

    pub fn build(&mut self, ast: &Ast) -> Result<Expression, MathError> {
        let e = match ast {
            Ast::Num(c) => Expression::constant(&self.tower, c.clone()),
            Ast::Var(name) => match self.tower.lookup(name) {
                Some(v) => Expression::var(&self.tower, v),
                None if self.allow_symbols => {
                    let (t, v) = self.tower.declare_symbol(name)?;
                    self.tower = t;
                    Expression::var(&self.tower, v)
                }
                None => return Err(MathError::UnknownVariable(name.clone())),
            },
            Ast::Neg(a) => self.build(a)?.neg(),
            Ast::Add(a, b) => {
                let x = self.build(a)?;
                let y = self.build(b)?;
                x.add(&y)?
            }
            Ast::Sub(a, b) => {
                let x = self.build(a)?;
                let y = self.build(b)?;
                x.sub(&y)?
            }
            Ast::Mul(a, b) => {
                let x = self.build(a)?;
                let y = self.build(b)?;
                x.mul(&y)?
            }
            Ast::Div(a, b) => {
                let mut x = self.build(a)?;
                // Divide factor by factor so denominators stay factored.
                let mut factors = Vec::new();
                flatten_product(b, &mut factors);
                for f in factors {
                    let y = self.build(f)?;
                    x = self.lift(x)?.div(&y)?;
                }
                x
            }
            Ast::Pow(a, p, q) => {
                let b = self.build(a)?;
                if *q == 1 {
                    let k = i32::try_from(*p).map_err(|_| MathError::Unsupported("exponent too large".into()))?;
                    b.pow(k)?
                } else {
                    self.rational_power(&b, *p, *q)?
                }
            }
            Ast::Call(name, a) => {
                let b = self.build(a)?;
                match name.as_str() {
                    "exp" => self.exponential(&b)?,
                    "sqrt" => self.rational_power(&b, 1, 2)?,
                    _ => return Err(MathError::Unsupported(format!("function {name}"))),
                }
            }
        };
        self.lift(e)
    }

    fn exponential(&mut self, arg: &Expression) -> Result<Expression, MathError> {
        let arg = self.lift(arg.clone())?;
        if !arg.is_polynomial() || arg.numerator().support() & !self.tower.coordinate_mask() != 0 {
            return Err(MathError::Unsupported(format!("exp argument must be a polynomial in coordinates: {arg}")));
        }
        let mut acc = Expression::one(&self.tower);
        for (m, c) in arg.numerator().terms() {
            let (t, v, k) = self.tower.declare_exp_term(m, c)?;
            self.tower = t;
            let atom = Expression::from_poly(&self.tower, Poly::monomial(Monomial::var(v, k), Coefficient::one()));
            acc = self.lift(acc)?.mul(&atom)?;
        }
        Ok(acc)
    }

    /// `base^(p/q)` with `q >= 2`, declaring the radical `base^(1/q)`.
    fn rational_power(&mut self, base: &Expression, p: i64, q: i64) -> Result<Expression, MathError> {
        let q32 = u32::try_from(q).map_err(|_| MathError::Unsupported("radical degree too large".into()))?;
        if base.is_zero() {
            if p <= 0 {
                return Err(MathError::DivisionByZero);
            }
            return Ok(Expression::zero(&self.tower));
        }
        let t = self.tower.clone();
        if base.support() & (t.radical_mask() | t.symbol_mask()) != 0 {
            return Err(MathError::Unsupported("nested radicals or radicals of symbols".into()));
        }
        if let Some(c) = base.constant_value() {
            if let Some(r) = exact_root(&c, q32) {
                return Expression::constant(&t, r).pow(p as i32);
            }
        }
        // base = A / D  ->  (A * D^(q-1))^(1/q) / D
        let a = base.numerator().clone();
        let d = base.denominator_poly();
        let mut radicand = a.mul(&d.pow(q32 - 1));
        // Clear negative exponential powers: multiply by E^(q*s), divide by E^s.
        let laurent = t.laurent_mask();
        let mg = radicand.monomial_gcd();
        let mut shift = Monomial::ONE;
        for v in 0..MAX_VARS {
            if laurent & (1 << v) != 0 && mg.get(v) < 0 {
                let s = (-mg.get(v) + q as i16 - 1) / q as i16;
                shift.set(v, s);
            }
        }
        radicand = radicand.mul_monomial(&shift.pow(q as i16));
        let (t2, r) = t.declare_radical(&radicand, q32)?;
        self.tower = t2.clone();
        let root = Expression::var(&t2, r);
        let unit = Expression::from_poly(&t2, Poly::monomial(shift, Coefficient::one()));
        let dd = Expression::from_poly(&t2, d);
        let one_root = root.div(&dd.mul(&unit)?)?;
        let k = i32::try_from(p).map_err(|_| MathError::Unsupported("exponent too large".into()))?;
        one_root.pow(k)
    }
}

fn flatten_product<'a>(a: &'a Ast, out: &mut Vec<&'a Ast>) {
    match a {
        Ast::Mul(x, y) => {
            flatten_product(x, out);
            flatten_product(y, out);
        }
        _ => out.push(a),
    }
}

fn exact_root(c: &Coefficient, m: u32) -> Option<Coefficient> {
    let root_int = |n: &BigInt| -> Option<BigInt> {
        if n.is_negative() {
            if m % 2 == 0 {
                return None;
            }
            return root_int_pos(&-n, m).map(|r| -r);
        }
        root_int_pos(n, m)
    };
    let n = root_int(&c.numer())?;
    let d = root_int(&c.denom())?;
    Some(Coefficient::from_big(num_rational::BigRational::new(n, d)))
}

fn root_int_pos(n: &BigInt, m: u32) -> Option<BigInt> {
    if n.is_zero() || n.is_one() {
        return Some(n.clone());
    }
    let r = n.nth_root(m);
    (num_traits::pow(r.clone(), m as usize) == *n).then_some(r)
}

/// Parses an expression over a fresh or existing tower, returning the
/// possibly extended tower inside the expression.
pub fn parse_expression(text: &str, tower: &Arc<Tower>) -> Result<Expression, BuildError> {
    Builder::new(tower.clone()).parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t4() -> Arc<Tower> {
        Tower::new(4).unwrap()
    }

    #[test]
    fn precedence() {
        let t = t4();
        let e = parse_expression("1 + 2*y1^2 - y2/2", &t).unwrap();
        assert_eq!(e.render(), "2*y1^2 - (1/2)*y2 + 1");
        let e = parse_expression("-y1^2", &t).unwrap();
        assert_eq!(e.render(), "-y1^2");
        let e = parse_expression("2^(-1)", &t).unwrap();
        assert_eq!(e.render(), "(1/2)");
    }

    #[test]
    fn radical_metric() {
        let t = t4();
        let e = parse_expression("sqrt(x2^2*y1^4+y2^4+y3^4+y4^4)", &t).unwrap();
        assert_eq!(e.render(), "(x2^2*y1^4 + y2^4 + y3^4 + y4^4)^(1/2)");
        let sq = e.mul(&e).unwrap();
        assert_eq!(sq.render(), "x2^2*y1^4 + y2^4 + y3^4 + y4^4");
    }

    #[test]
    fn exponential_metric() {
        let t = Tower::new(3).unwrap();
        let e = parse_expression("exp(-2*x1)*(y2^3+exp(-x1*x3)*y3*y1^2)^(2/3)", &t).unwrap();
        let r = e.render();
        assert!(r.contains("exp(-2*x1)"), "{r}");
        assert!(r.contains("^(2/3)"), "{r}");
        let back = parse_expression(&r, e.tower()).unwrap();
        assert!(back.sub(&e).unwrap().is_zero());
    }

    #[test]
    fn rational_base_radical() {
        let t = Tower::new(2).unwrap();
        let e = parse_expression("(y1/y2)^(1/2)", &t).unwrap();
        let sq = e.mul(&e).unwrap();
        let want = parse_expression("y1/y2", e.tower()).unwrap();
        assert!(sq.sub(&want).unwrap().is_zero());
        assert_eq!(parse_expression("(4/9)^(1/2)", &t).unwrap().render(), "(2/3)");
    }

    #[test]
    fn errors_carry_positions() {
        let t = t4();
        let err = parse_ast("y1 + * y2").unwrap_err();
        assert_eq!(err.col, 6);
        assert!(matches!(parse_expression("z9", &t), Err(BuildError::Math(MathError::UnknownVariable(_)))));
        assert!(parse_ast("sin(y1)").is_err());
        assert!(parse_ast("(y1").is_err());
    }

    #[test]
    fn ast_display_round_trip() {
        for s in ["y1 + y2*(y3 - 1)", "-(y1 + 2)^3", "exp(-x1*x3)/y1^2", "(y2^3 + y3^3)^(1/3)", "3/16*y2"] {
            let a = parse_ast(s).unwrap();
            let b = parse_ast(&a.to_string()).unwrap();
            assert_eq!(a, b, "{s} -> {a}");
        }
    }
}
