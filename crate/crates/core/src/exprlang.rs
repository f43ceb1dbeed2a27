//! A small arithmetic expression language for dynamics, stage costs,
//! storage functions and control bounds.
//!
//! Variables are `x1`..`x9` (state components) and `u` (the scalar control).
//! Supported operators are `+ - * / ^` and unary minus; functions are
//! `abs sin cos sqrt log exp` (one argument) and `min max` (two or more).
//!
//! Precedence, from tightest: `^` (right-associative), unary minus,
//! `* /`, `+ -`. So `-2^2` is `-(2^2)` and `2^3^2` is `2^(3^2)`.

use std::fmt;

use thiserror::Error;

/// A variable referenced by an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based state component (`x1` is `State(0)`).
    State(usize),
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sin,
    Cos,
    Sqrt,
    Log,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Parsed expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Extremum(Extremum, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        offset: usize,
        expected: &'static str,
        got: usize,
    },
    #[error("expression references x{index} but the state dimension is {dim}")]
    Dimension { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: &'static str },
    #[error("expression needs x{index} but only {dim} state values were supplied")]
    MissingState { index: usize, dim: usize },
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Exp => "exp",
        }
    }
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
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let mut parser = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let expr = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.syntax(&["operator", "end of input"]));
        }
        Ok(expr)
    }

    /// Parses and checks that no state index exceeds `dim`.
    pub fn parse_with_dim(source: &str, dim: usize) -> Result<Expr, ParseError> {
        let expr = Expr::parse(source)?;
        expr.check_dim(dim)?;
        Ok(expr)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), ParseError> {
        match self.max_state_index() {
            Some(i) if i >= dim => Err(ParseError::Dimension { index: i + 1, dim }),
            _ => Ok(()),
        }
    }

    /// Largest zero-based state index referenced, if any.
    pub fn max_state_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Var(Var::Control) => None,
            Expr::Var(Var::State(i)) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_state_index(),
            Expr::Binary(_, a, b) => a.max_state_index().max(b.max_state_index()),
            Expr::Extremum(_, args) => args.iter().filter_map(Expr::max_state_index).max(),
        }
    }

    pub fn uses_control(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(Var::State(_)) => false,
            Expr::Var(Var::Control) => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_control(),
            Expr::Binary(_, a, b) => a.uses_control() || b.uses_control(),
            Expr::Extremum(_, args) => args.iter().any(Expr::uses_control),
        }
    }

    pub fn eval(&self, x: &[f64], u: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::Control) => u,
            Expr::Var(Var::State(i)) => *x.get(*i).ok_or(EvalError::MissingState {
                index: i + 1,
                dim: x.len(),
            })?,
            Expr::Neg(e) => -e.eval(x, u)?,
            Expr::Call(func, e) => {
                let v = e.eval(x, u)?;
                match func {
                    Func::Abs => v.abs(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt if v < 0.0 => return Err(self.domain("square root of a negative number")),
                    Func::Sqrt => v.sqrt(),
                    Func::Log if v <= 0.0 => return Err(self.domain("logarithm of a non-positive number")),
                    Func::Log => v.ln(),
                }
            }
            Expr::Binary(op, a, b) => {
                let l = a.eval(x, u)?;
                let r = b.eval(x, u)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => return Err(self.domain("division by zero")),
                    BinOp::Div => l / r,
                    BinOp::Pow if l < 0.0 && r.fract() != 0.0 => {
                        return Err(self.domain("negative base with non-integer exponent"))
                    }
                    BinOp::Pow if l == 0.0 && r < 0.0 => {
                        return Err(self.domain("zero raised to a negative power"))
                    }
                    BinOp::Pow => pow(l, r),
                }
            }
            Expr::Extremum(kind, args) => {
                let mut acc = args[0].eval(x, u)?;
                for arg in &args[1..] {
                    let v = arg.eval(x, u)?;
                    acc = match kind {
                        Extremum::Min => acc.min(v),
                        Extremum::Max => acc.max(v),
                    };
                }
                acc
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    /// Replaces every state variable `x_i` by `states[i]` and `u` by `control`
    /// (when given). Used to build compositions such as `λ(f(x,u))`.
    pub fn substitute(&self, states: &[Expr], control: Option<&Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(Var::State(i)) => states.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Expr::Var(Var::Control) => control.cloned().unwrap_or_else(|| self.clone()),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(states, control))),
            Expr::Call(f, e) => Expr::Call(*f, Box::new(e.substitute(states, control))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(states, control)),
                Box::new(b.substitute(states, control)),
            ),
            Expr::Extremum(k, args) => Expr::Extremum(
                *k,
                args.iter().map(|a| a.substitute(states, control)).collect(),
            ),
        }
    }

    fn domain(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            subexpr: self.to_string(),
            reason,
        }
    }
}

// Integer exponents go through powi so that e.g. (-2)^3 stays exact.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Binary(BinOp::Add, Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Binary(BinOp::Sub, Box::new(self), Box::new(rhs))
    }
}

/// Canonical form: every compound node is parenthesised, so the printed
/// text re-parses to the identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::State(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Control) => write!(f, "u"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Extremum(kind, args) => {
                f.write_str(match kind {
                    Extremum::Min => "min(",
                    Extremum::Max => "max(",
                })?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: expected.to_vec(),
        }
    }

    // expr := term (("+"|"-") term)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // term := unary (("*"|"/") unary)*
    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // unary := "-" unary | power
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    // power := atom ("^" unary)?   (right-associative through unary)
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax(&["`)`"]));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.syntax(&["number", "identifier", "`(`", "`-`"])),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.syntax(&["digit"]));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.syntax(&["exponent digits"]));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                expected: vec!["number"],
            })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");

        if name == "u" {
            return Ok(Expr::Var(Var::Control));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if let Ok(i @ 1..=9) = digits.parse::<usize>() {
                if digits.len() == 1 {
                    return Ok(Expr::Var(Var::State(i - 1)));
                }
            }
        }

        let func = Func::from_name(name);
        let extremum = match name {
            "min" => Some(Extremum::Min),
            "max" => Some(Extremum::Max),
            _ => None,
        };
        if func.is_none() && extremum.is_none() {
            return Err(ParseError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            });
        }
        if !self.eat(b'(') {
            return Err(self.syntax(&["`(`"]));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.syntax(&["`,`", "`)`"]));
        }

        if let Some(func) = func {
            if args.len() != 1 {
                return Err(ParseError::Arity {
                    name: name.to_string(),
                    offset: start,
                    expected: "exactly 1",
                    got: args.len(),
                });
            }
            Ok(Expr::Call(func, Box::new(args.pop().expect("one argument"))))
        } else {
            if args.len() < 2 {
                return Err(ParseError::Arity {
                    name: name.to_string(),
                    offset: start,
                    expected: "at least 2",
                    got: args.len(),
                });
            }
            Ok(Expr::Extremum(extremum.expect("checked above"), args))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], u: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, u).unwrap()
    }

    #[test]
    fn shifted_abs() {
        assert_eq!(ev("abs(x1-1) - 0.25", &[1.0], 0.0), -0.25);
    }

    #[test]
    fn piecewise_cost_at_kink() {
        let v = ev("min(abs(x1-1)-0.25, abs(x1+1)+0.25) + abs(u)", &[1.0], 0.0);
        assert_eq!(v, -0.25);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(ev("2^3^2", &[], 0.0), 512.0);
        assert_eq!(ev("(2^3)^2", &[], 0.0), 64.0);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(ev("-2^2", &[], 0.0), -4.0);
        assert_eq!(ev("(-2)^2", &[], 0.0), 4.0);
        assert_eq!(ev("2^-1", &[], 0.0), 0.5);
        assert_eq!(ev("-x1*3", &[2.0], 0.0), -6.0);
    }

    #[test]
    fn logistic_cost() {
        let v = ev("x1^2 - (u*x1*(1-x1))^2 + abs(u-3.6)", &[0.5], 3.6);
        assert!((v - (-0.56)).abs() < 1e-12);
    }

    #[test]
    fn constants_and_min() {
        assert_eq!(ev("3.5", &[9.0], -1.0), 3.5);
        assert_eq!(ev("min(x1, 2*x1)", &[-1.0], 0.0), -2.0);
        assert_eq!(ev("max(1, 2, 3, -4)", &[], 0.0), 3.0);
        assert_eq!(ev("1.5e2 + .5 + 2E-1", &[], 0.0), 150.7);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expr::parse("1 + sqrt(x1)").unwrap();
        match e.eval(&[-1.0], 0.0) {
            Err(EvalError::Domain { subexpr, .. }) => assert_eq!(subexpr, "sqrt(x1)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("log(0)").unwrap().eval(&[], 0.0).is_err());
        assert!(Expr::parse("1/(x1-x1)").unwrap().eval(&[3.0], 0.0).is_err());
        assert!(Expr::parse("(-8)^0.5").unwrap().eval(&[], 0.0).is_err());
        assert_eq!(ev("(-2)^3", &[], 0.0), -8.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match Expr::parse("1 + * 2") {
            Err(ParseError::Syntax { offset, expected }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"number"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Expr::parse("(1 + 2"), Err(ParseError::Syntax { offset: 6, .. })));
        assert!(matches!(Expr::parse("1 2"), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(Expr::parse("1e"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn identifier_and_arity_errors() {
        assert!(matches!(
            Expr::parse("y + 1"),
            Err(ParseError::UnknownIdentifier { ref name, offset: 0 }) if name == "y"
        ));
        assert!(matches!(Expr::parse("x0"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(Expr::parse("x10"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(Expr::parse("min(1)"), Err(ParseError::Arity { got: 1, .. })));
        assert!(matches!(Expr::parse("abs(1, 2)"), Err(ParseError::Arity { got: 2, .. })));
        assert!(matches!(
            Expr::parse_with_dim("x1 + x3", 2),
            Err(ParseError::Dimension { index: 3, dim: 2 })
        ));
    }

    #[test]
    fn canonical_print_reparses() {
        for src in [
            "min(abs(x1-1)-0.25, abs(x1+1)+0.25) + abs(u)",
            "-x1^2 - -3",
            "x1^2 - (u*x1*(1-x1))^2 + abs(u-3.6)",
            "exp(-x2)/cos(u) ^ 2",
            "0.1 + 1e-300 * 7",
        ] {
            let e = Expr::parse(src).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src}");
        }
    }

    #[test]
    fn substitution_composes() {
        let lambda = Expr::parse("x1^2").unwrap();
        let f = Expr::parse("u*x1*(1-x1)").unwrap();
        let composed = lambda.substitute(&[f], None);
        let v = composed.eval(&[0.5], 3.6).unwrap();
        assert!((v - 0.81).abs() < 1e-12);
        assert!(composed.uses_control());
    }

    #[test]
    fn eval_is_bitwise_repeatable() {
        let e = Expr::parse("sin(x1)*exp(u) - sqrt(abs(x1*u))").unwrap();
        let a = e.eval(&[0.3], 1.7).unwrap();
        let b = e.eval(&[0.3], 1.7).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
