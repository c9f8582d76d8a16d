//! Single-variable expression language for absorption terms.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | '/') factor)*
//! factor   := base ('^' exponent)?
//! exponent := base
//! base     := number | 'u' | 'ln' '(' expr ')' | 'exp' '(' expr ')'
//!           | '(' expr ')' | '-' base
//! number   := digits ('.' digits)? (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! `^` binds tighter than `*` and is non-associative, so `u^2^3` is rejected.
//! Unary minus is accepted in `base` as a convenience for negative exponents.

use crate::error::{LabError, Result};
use crate::quadrature::log_add_exp;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Const(f64),
    Var,
    Neg(Box<ExprNode>),
    Add(Box<ExprNode>, Box<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Box<ExprNode>, Box<ExprNode>),
    Div(Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, Box<ExprNode>),
    Ln(Box<ExprNode>),
    Exp(Box<ExprNode>),
}

pub const MAX_EXPR_LEN: usize = 4096;

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(LabError::Syntax { offset, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => self.err(self.pos, format!("expected '{}', found '{}'", c as char, x as char)),
            None => self.err(self.pos, format!("expected '{}', found end of input", c as char)),
        }
    }

    fn expr(&mut self) -> Result<ExprNode> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = ExprNode::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = ExprNode::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprNode> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = ExprNode::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = ExprNode::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprNode> {
        let b = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.base()?;
            if self.peek() == Some(b'^') {
                return self.err(self.pos, "chained '^' is ambiguous; use parentheses");
            }
            return Ok(ExprNode::Pow(Box::new(b), Box::new(e)));
        }
        Ok(b)
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn base(&mut self) -> Result<ExprNode> {
        let start = match self.peek() {
            None => return self.err(self.pos, "unexpected end of input"),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c == b'-' {
            self.pos += 1;
            return Ok(ExprNode::Neg(Box::new(self.base()?)));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let id = self.ident();
            return match id {
                "u" => Ok(ExprNode::Var),
                "ln" | "exp" => {
                    self.expect(b'(')?;
                    let e = self.expr()?;
                    self.expect(b')')?;
                    Ok(if id == "ln" { ExprNode::Ln(Box::new(e)) } else { ExprNode::Exp(Box::new(e)) })
                }
                _ => self.err(start, format!("unknown identifier '{id}'")),
            };
        }
        self.err(start, format!("unexpected character '{}'", c as char))
    }

    fn number(&mut self) -> Result<ExprNode> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return self.err(start, "malformed number");
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if !digits(&mut q) {
                return self.err(p, "malformed exponent in number");
            }
            p = q;
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(ExprNode::Const(v)),
            _ => self.err(start, format!("number '{text}' out of range")),
        }
    }
}

/// Parses an expression in `u`. Errors carry the byte offset of the problem.
pub fn parse_expr(text: &str) -> Result<ExprNode> {
    if text.len() > MAX_EXPR_LEN {
        return Err(LabError::Syntax {
            offset: MAX_EXPR_LEN,
            message: format!("input longer than {MAX_EXPR_LEN} bytes"),
        });
    }
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return p.err(p.pos, format!("unexpected trailing '{}'", c as char));
    }
    Ok(e)
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ExprNode::*;
        match self {
            Const(c) => write!(f, "{c:e}"),
            Var => write!(f, "u"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a}^{b})"),
            Ln(a) => write!(f, "ln({a})"),
            Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// Signed logarithmic number: `sign * exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNum {
    pub sign: i8,
    pub ln_abs: f64,
}

impl LogNum {
    pub const ZERO: LogNum = LogNum { sign: 0, ln_abs: f64::NEG_INFINITY };

    pub fn from_f64(v: f64) -> LogNum {
        if v == 0.0 {
            LogNum::ZERO
        } else {
            LogNum { sign: if v > 0.0 { 1 } else { -1 }, ln_abs: v.abs().ln() }
        }
    }

    pub fn to_f64(self) -> f64 {
        self.sign as f64 * self.ln_abs.exp()
    }

    fn neg(self) -> LogNum {
        LogNum { sign: -self.sign, ..self }
    }

    fn add(self, o: LogNum) -> LogNum {
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        if self.sign == o.sign {
            return LogNum { sign: self.sign, ln_abs: log_add_exp(self.ln_abs, o.ln_abs) };
        }
        let (big, small) = if self.ln_abs >= o.ln_abs { (self, o) } else { (o, self) };
        let d = big.ln_abs - small.ln_abs;
        if d == 0.0 {
            return LogNum::ZERO;
        }
        LogNum { sign: big.sign, ln_abs: big.ln_abs + (-(-d).exp()).ln_1p() }
    }

    fn mul(self, o: LogNum) -> LogNum {
        if self.sign == 0 || o.sign == 0 {
            return LogNum::ZERO;
        }
        LogNum { sign: self.sign * o.sign, ln_abs: self.ln_abs + o.ln_abs }
    }
}

fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}

impl ExprNode {
    /// Direct floating-point evaluation.
    pub fn eval(&self, u: f64) -> Result<f64> {
        use ExprNode::*;
        let v = match self {
            Const(c) => *c,
            Var => u,
            Neg(a) => -a.eval(u)?,
            Add(a, b) => a.eval(u)? + b.eval(u)?,
            Sub(a, b) => a.eval(u)? - b.eval(u)?,
            Mul(a, b) => a.eval(u)? * b.eval(u)?,
            Div(a, b) => {
                let d = b.eval(u)?;
                if d == 0.0 {
                    return domain(format!("division by zero at u = {u}"));
                }
                a.eval(u)? / d
            }
            Pow(a, b) => {
                let x = a.eval(u)?;
                let e = b.eval(u)?;
                if x < 0.0 && e.fract() != 0.0 {
                    return domain(format!("negative base to fractional power at u = {u}"));
                }
                if x == 0.0 && e < 0.0 {
                    return domain(format!("zero to negative power at u = {u}"));
                }
                x.powf(e)
            }
            Ln(a) => {
                let x = a.eval(u)?;
                if x < 0.0 {
                    return domain(format!("ln of negative value at u = {u}"));
                }
                x.ln()
            }
            Exp(a) => a.eval(u)?.exp(),
        };
        if v.is_nan() {
            return domain(format!("undefined value at u = {u}"));
        }
        Ok(v)
    }

    /// Evaluation at `u = e^y` in signed log representation, so that values far
    /// beyond the `f64` range keep their logarithm.
    pub fn eval_log(&self, y: f64) -> Result<LogNum> {
        use ExprNode::*;
        Ok(match self {
            Const(c) => LogNum::from_f64(*c),
            Var => LogNum { sign: 1, ln_abs: y },
            Neg(a) => a.eval_log(y)?.neg(),
            Add(a, b) => a.eval_log(y)?.add(b.eval_log(y)?),
            Sub(a, b) => a.eval_log(y)?.add(b.eval_log(y)?.neg()),
            Mul(a, b) => a.eval_log(y)?.mul(b.eval_log(y)?),
            Div(a, b) => {
                let d = b.eval_log(y)?;
                if d.sign == 0 {
                    return domain(format!("division by zero at ln u = {y}"));
                }
                a.eval_log(y)?.mul(LogNum { sign: d.sign, ln_abs: -d.ln_abs })
            }
            Pow(a, b) => {
                let x = a.eval_log(y)?;
                let e = b.eval_log(y)?.to_f64();
                match x.sign {
                    0 if e > 0.0 => LogNum::ZERO,
                    0 if e == 0.0 => LogNum::from_f64(1.0),
                    0 => return domain("zero to negative power"),
                    1 => LogNum { sign: 1, ln_abs: e * x.ln_abs },
                    _ => {
                        if e.fract() != 0.0 {
                            return domain("negative base to fractional power");
                        }
                        let odd = (e % 2.0).abs() == 1.0;
                        LogNum { sign: if odd { -1 } else { 1 }, ln_abs: e * x.ln_abs }
                    }
                }
            }
            Ln(a) => {
                let x = a.eval_log(y)?;
                match x.sign {
                    1 => LogNum::from_f64(x.ln_abs),
                    0 => LogNum { sign: -1, ln_abs: f64::INFINITY },
                    _ => return domain("ln of negative value"),
                }
            }
            Exp(a) => {
                let x = a.eval_log(y)?.to_f64();
                if x == f64::NEG_INFINITY {
                    LogNum::ZERO
                } else {
                    LogNum { sign: 1, ln_abs: x }
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2*u^2").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), 19.0);
        let e = parse_expr("u*ln(u+1)^2").unwrap();
        assert!((e.eval(1.0).unwrap() - 2f64.ln().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn offsets() {
        match parse_expr("u * (u + ") {
            Err(LabError::Syntax { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        match parse_expr("u + sin(u)") {
            Err(LabError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("u^2^3") {
            Err(LabError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_eval_matches_direct() {
        let e = parse_expr("u*ln(u+1)^1.5 + exp(u/100) - 1").unwrap();
        for y in [-3.0, 0.0, 2.0, 5.0] {
            let a = e.eval(f64::exp(y)).unwrap();
            let b = e.eval_log(y).unwrap().to_f64();
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} {b}");
        }
        let big = parse_expr("u*ln(u+1)^3").unwrap().eval_log(1e4).unwrap();
        assert!((big.ln_abs - (1e4 + 3.0 * 1e4f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn round_trip_simple() {
        let e = parse_expr("u^-2 * (3.5e-3 - u)/exp(u)").unwrap();
        assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
    }
}
