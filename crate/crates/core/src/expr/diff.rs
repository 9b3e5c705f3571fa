use super::{add, div, func, mul, neg, pow, sub, BinOp, Expr, Func};

impl Expr {
    /// Exact symbolic partial derivative with respect to slot `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => {
                        if db.is_zero() {
                            div(da, b)
                        } else {
                            div(sub(mul(da, b.clone()), mul(a, db)), pow(b, 2))
                        }
                    }
                }
            }
            Expr::Pow(a, n) => {
                if *n == 0 {
                    return Expr::Const(0.0);
                }
                let da = a.derivative(var);
                mul(mul(Expr::Const(*n as f64), pow(a.as_ref().clone(), n - 1)), da)
            }
            Expr::Func(f, a) => {
                let da = a.derivative(var);
                if da.is_zero() {
                    return Expr::Const(0.0);
                }
                let a = a.as_ref().clone();
                let outer = match f {
                    Func::Sin => func(Func::Cos, a),
                    Func::Cos => neg(func(Func::Sin, a)),
                    Func::Tan => div(Expr::Const(1.0), pow(func(Func::Cos, a), 2)),
                    Func::Exp => func(Func::Exp, a),
                    Func::Ln => return div(da, a),
                    Func::Sqrt => return div(da, mul(Expr::Const(2.0), func(Func::Sqrt, a))),
                };
                mul(outer, da)
            }
        }
    }
}
