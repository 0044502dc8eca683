//! Complex-valued expressions over `x`, `y` for analytic potentials.
//! The grammar is documented in `docs/expressions.md`.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset} in {input:?}")]
pub struct ParseError {
    pub input: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    I,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        use Expr::*;
        match self {
            Num(v) => Complex64::new(*v, 0.0),
            X => Complex64::new(x, 0.0),
            Y => Complex64::new(y, 0.0),
            I => Complex64::new(0.0, 1.0),
            Neg(a) => -a.eval(x, y),
            Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Pow(a, b) => {
                let (a, b) = (a.eval(x, y), b.eval(x, y));
                if b.im == 0.0 && b.re.fract() == 0.0 && b.re.abs() <= 64.0 {
                    a.powi(b.re as i32)
                } else {
                    a.powc(b)
                }
            }
            Call(f, a) => {
                let a = a.eval(x, y);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
        }
    }

    /// True when the expression mentions `i`.
    pub fn is_complex(&self) -> bool {
        use Expr::*;
        match self {
            I => true,
            Num(_) | X | Y => false,
            Neg(a) | Call(_, a) => a.is_complex(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.is_complex() || b.is_complex(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(v) => write!(f, "{v}"),
            X => f.write_str("x"),
            Y => f.write_str("y"),
            I => f.write_str("i"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Call(g, a) => {
                let name = match g {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError { input: self.src.to_string(), offset: self.pos, message: message.to_string() }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
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

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat('^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.eat('(') {
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        let src = self.src;
        let rest = &src[self.pos..];
        let Some(c) = rest.chars().next() else {
            return Err(self.error("unexpected end of input"));
        };
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let len = rest.find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_')).unwrap_or(rest.len());
            let start = self.pos;
            let word = &rest[..len];
            self.pos += len;
            let func = match word {
                "x" => return Ok(Expr::X),
                "y" => return Ok(Expr::Y),
                "i" => return Ok(Expr::I),
                "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                "e" => return Ok(Expr::Num(std::f64::consts::E)),
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "exp" => Func::Exp,
                _ => {
                    self.pos = start;
                    return Err(self.error(&format!("unknown identifier '{word}'")));
                }
            };
            if !self.eat('(') {
                return Err(self.error("expected '(' after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(self.error(&format!("unexpected character '{c}'")))
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let bytes = self.rest().as_bytes();
        let mut n = 0;
        while n < bytes.len() && (bytes[n].is_ascii_digit() || bytes[n] == b'.') {
            n += 1;
        }
        if n < bytes.len() && (bytes[n] == b'e' || bytes[n] == b'E') {
            let mut m = n + 1;
            if m < bytes.len() && (bytes[m] == b'+' || bytes[m] == b'-') {
                m += 1;
            }
            if m < bytes.len() && bytes[m].is_ascii_digit() {
                while m < bytes.len() && bytes[m].is_ascii_digit() {
                    m += 1;
                }
                n = m;
            }
        }
        let text = &self.rest()[..n];
        let v: f64 = text.parse().map_err(|_| self.error(&format!("malformed number '{text}'")))?;
        self.pos += n;
        Ok(Expr::Num(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> Complex64 {
        Expr::parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2*3", 0.0, 0.0).re, 7.0);
        assert_eq!(ev("8/2/2", 0.0, 0.0).re, 2.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0).re, 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0).re, -4.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0).re, -4.0);
        assert_eq!(ev("2*-x", 3.0, 0.0).re, -6.0);
    }

    #[test]
    fn functions_constants_and_variables() {
        let v = ev("0.1*(1 + 0.3*cos(x)) + 0.02*i*sin(y)", 0.0, 1.0);
        assert!((v.re - 0.13).abs() < 1e-15);
        assert!((v.im - 0.02 * 1f64.sin()).abs() < 1e-15);
        assert!((ev("exp(i*pi)", 0.0, 0.0) + 1.0).norm() < 1e-15);
        assert!((ev("e", 0.0, 0.0).re - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("1.5e-1", 0.0, 0.0).re, 0.15);
        assert!(Expr::parse("2e").is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        let e = Expr::parse("1 + foo(x)").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("3 $ 4").is_err());
    }

    #[test]
    fn display_reparses_to_same_values() {
        for s in ["-x^2 + sin(y)/3", "exp(i*(x - 2*y))", "2^-1"] {
            let e = Expr::parse(s).unwrap();
            let back = Expr::parse(&e.to_string()).unwrap();
            for (x, y) in [(0.3, 1.1), (-2.0, 0.5)] {
                assert!((e.eval(x, y) - back.eval(x, y)).norm() < 1e-14);
            }
        }
        assert!(Expr::parse("i*x").unwrap().is_complex());
        assert!(!Expr::parse("sin(x)").unwrap().is_complex());
    }
}
