use std::fmt;

use super::jet::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Expression tree for one component of a vector field.
///
/// Variables are 0-indexed; parameters index into the owning system's
/// parameter table.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Param(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Param(_) => None,
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    pub fn max_param(&self) -> Option<usize> {
        match self {
            Expr::Param(i) => Some(*i),
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary(_, a) => a.max_param(),
            Expr::Binary(_, a, b) => match (a.max_param(), b.max_param()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    pub fn eval(&self, x: &[f64], params: &[f64]) -> Result<f64, String> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Param(i) => params[*i],
            Expr::Unary(op, a) => {
                let v = a.eval(x, params)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Tan => v.tan(),
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Log => {
                        if v <= 0.0 {
                            return Err(format!("log of nonpositive value {v}"));
                        }
                        v.ln()
                    }
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(format!("sqrt of negative value {v}"));
                        }
                        v.sqrt()
                    }
                    UnaryOp::Abs => v.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let u = a.eval(x, params)?;
                let v = b.eval(x, params)?;
                match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                    BinaryOp::Div => {
                        if v == 0.0 {
                            return Err("division by zero".into());
                        }
                        u / v
                    }
                    BinaryOp::Pow => pow_value(u, v)?,
                }
            }
        })
    }

    pub fn eval_jet(&self, x: &[f64], params: &[f64]) -> Result<Jet, String> {
        let n = x.len();
        Ok(match self {
            Expr::Const(c) => Jet::constant(*c, n),
            Expr::Var(i) => Jet::variable(x[*i], *i, n),
            Expr::Param(i) => Jet::constant(params[*i], n),
            Expr::Unary(op, a) => {
                let j = a.eval_jet(x, params)?;
                match op {
                    UnaryOp::Neg => j.neg(),
                    UnaryOp::Sin => j.sin(),
                    UnaryOp::Cos => j.cos(),
                    UnaryOp::Tan => j.tan(),
                    UnaryOp::Exp => j.exp(),
                    UnaryOp::Log => {
                        if j.value <= 0.0 {
                            return Err(format!("log of nonpositive value {}", j.value));
                        }
                        j.ln()
                    }
                    UnaryOp::Sqrt => {
                        if j.value < 0.0 {
                            return Err(format!("sqrt of negative value {}", j.value));
                        }
                        if j.value == 0.0 && !j.is_constant() {
                            return Err("sqrt is not differentiable at 0".into());
                        }
                        j.sqrt()
                    }
                    UnaryOp::Abs => j.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let u = a.eval_jet(x, params)?;
                let v = b.eval_jet(x, params)?;
                match op {
                    BinaryOp::Add => u.add(&v),
                    BinaryOp::Sub => u.sub(&v),
                    BinaryOp::Mul => u.mul(&v),
                    BinaryOp::Div => {
                        if v.value == 0.0 {
                            return Err("division by zero".into());
                        }
                        u.div(&v)
                    }
                    BinaryOp::Pow => pow_jet(&u, &v)?,
                }
            }
        })
    }
}

fn integer_exponent(v: f64) -> Option<i32> {
    if v.fract() == 0.0 && v.abs() < i32::MAX as f64 {
        Some(v as i32)
    } else {
        None
    }
}

fn pow_value(u: f64, v: f64) -> Result<f64, String> {
    if let Some(k) = integer_exponent(v) {
        if u == 0.0 && k < 0 {
            return Err("zero raised to a negative power".into());
        }
        return Ok(u.powi(k));
    }
    if u < 0.0 {
        return Err(format!("negative base {u} with non-integer exponent {v}"));
    }
    if u == 0.0 && v < 0.0 {
        return Err("zero raised to a negative power".into());
    }
    Ok(u.powf(v))
}

fn pow_jet(u: &Jet, v: &Jet) -> Result<Jet, String> {
    if v.is_constant() {
        if let Some(k) = integer_exponent(v.value) {
            if u.value == 0.0 && k < 0 {
                return Err("zero raised to a negative power".into());
            }
            return Ok(u.powi(k));
        }
    }
    if u.value < 0.0 {
        return Err(format!(
            "negative base {} with non-integer exponent {}",
            u.value, v.value
        ));
    }
    if u.value == 0.0 {
        // 0^v for v > 1 has a vanishing derivative; anything else is singular
        if v.value > 1.0 && v.is_constant() {
            return Ok(Jet::constant(0.0, u.dim()));
        }
        return Err(format!("zero base with exponent {} is not differentiable", v.value));
    }
    Ok(u.powf_positive(v))
}

/// Printer bound to a parameter name table.
pub struct ExprDisplay<'a> {
    pub expr: &'a Expr,
    pub params: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.params, f)
    }
}

fn write_expr(e: &Expr, params: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "(-{:?})", -c)
            } else {
                write!(f, "{c:?}")
            }
        }
        Expr::Var(i) => write!(f, "x{}", i + 1),
        Expr::Param(i) => f.write_str(&params[*i]),
        Expr::Unary(UnaryOp::Neg, a) => {
            f.write_str("(-")?;
            write_expr(a, params, f)?;
            f.write_str(")")
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_expr(a, params, f)?;
            f.write_str(")")
        }
        Expr::Binary(op, a, b) => {
            f.write_str("(")?;
            write_expr(a, params, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, params, f)?;
            f.write_str(")")
        }
    }
}
