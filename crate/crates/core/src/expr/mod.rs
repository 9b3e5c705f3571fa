//! Scalar dynamics expressions: parsing, symbolic differentiation, and point
//! and interval evaluation.
//!
//! Variables are referenced by slot index. A [`SystemModel`] lays slots out
//! as states, then inputs, then named constants, so a single environment
//! slice drives every evaluation.

mod diff;
mod interval;
mod model;
mod parse;

use std::fmt;

use thiserror::Error;

pub use interval::{Interval, IntervalMatrix};
pub use model::{parse_model, ModelDesc, ModelError, SystemModel};
pub use parse::parse_expr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("exponent at offset {pos} must be a nonnegative integer")]
    BadExponent { pos: usize },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
}

impl ExprError {
    pub(crate) fn domain(op: &'static str, detail: String) -> Self {
        ExprError::Domain { op, detail }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        let y = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => {
                if x <= 0.0 {
                    return Err(ExprError::domain("ln", format!("argument {x} is not positive")));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(ExprError::domain("sqrt", format!("argument {x} is negative")));
                }
                x.sqrt()
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ExprError::domain(self.name(), format!("non-finite result at {x}")))
        }
    }

    fn apply_interval(self, x: Interval) -> Result<Interval, ExprError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Expression tree over variable slots.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Highest variable slot referenced, if any.
    pub fn max_slot(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Func(_, a) | Expr::Pow(a, _) => a.max_slot(),
            Expr::Bin(_, a, b) => match (a.max_slot(), b.max_slot()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn eval(&self, env: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => env[*i],
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Func(f, a) => f.apply(a.eval(env)?)?,
            Expr::Pow(a, n) => a.eval(env)?.powi(*n as i32),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(ExprError::domain("division", format!("{x} / 0")));
                        }
                        x / y
                    }
                }
            }
        })
    }

    /// Natural interval extension; the result encloses the exact range of
    /// the expression over the box `env`.
    pub fn eval_interval(&self, env: &[Interval]) -> Result<Interval, ExprError> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(i) => env[*i],
            Expr::Neg(a) => -a.eval_interval(env)?,
            Expr::Func(f, a) => f.apply_interval(a.eval_interval(env)?)?,
            Expr::Pow(a, n) => a.eval_interval(env)?.powi(*n),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval_interval(env)?, b.eval_interval(env)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x.try_div(&y)?,
                }
            }
        })
    }

    /// Printable view using `names[slot]` for variables. The output parses
    /// back to a structurally identical tree.
    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> ExprDisplay<'a, S> {
        ExprDisplay { expr: self, names }
    }
}

/// Interval evaluation of `expr` over a box covering every slot.
pub fn interval_eval(expr: &Expr, env: &[Interval]) -> Result<Interval, ExprError> {
    expr.eval_interval(env)
}

pub struct ExprDisplay<'a, S> {
    expr: &'a Expr,
    names: &'a [S],
}

impl<S: AsRef<str>> fmt::Display for ExprDisplay<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.names, f)
    }
}

// Every compound node is parenthesized, so printing never depends on
// precedence.
fn write_expr<S: AsRef<str>>(e: &Expr, names: &[S], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(i) => match names.get(*i) {
            Some(n) => f.write_str(n.as_ref()),
            None => write!(f, "${i}"),
        },
        Expr::Neg(a) => {
            f.write_str("(-")?;
            write_expr(a, names, f)?;
            f.write_str(")")
        }
        Expr::Func(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, names, f)?;
            f.write_str(")")
        }
        Expr::Bin(op, a, b) => {
            f.write_str("(")?;
            write_expr(a, names, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, names, f)?;
            f.write_str(")")
        }
        Expr::Pow(a, n) => {
            f.write_str("(")?;
            write_expr(a, names, f)?;
            write!(f, "^{n})")
        }
    }
}

// Simplifying constructors used by differentiation. They fold constants and
// drop additive/multiplicative identities, nothing more.

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.constant_value(), b.constant_value()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.constant_value(), b.constant_value()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.constant_value(), b.constant_value()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a.constant_value(), b.constant_value()) {
        (Some(x), _) if x == 0.0 => Expr::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn pow(a: Expr, n: u32) -> Expr {
    match (n, a.constant_value()) {
        (0, _) => Expr::Const(1.0),
        (1, _) => a,
        (_, Some(c)) => Expr::Const(c.powi(n as i32)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub(crate) fn func(f: Func, a: Expr) -> Expr {
    Expr::Func(f, Box::new(a))
}
