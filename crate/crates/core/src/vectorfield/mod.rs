//! User-defined vector fields `x' = f(x)` with exact forward-mode Jacobians.

mod expr;
mod jet;
mod parse;

use std::fmt;

pub use expr::{BinaryOp, Expr, ExprDisplay, UnaryOp};
pub use jet::Jet;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A parsed autonomous vector field on real n-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    name: String,
    components: Vec<Expr>,
    param_names: Vec<String>,
    param_values: Vec<f64>,
}

impl SystemSpec {
    pub fn new(name: &str, components: Vec<Expr>, parameters: Vec<(String, f64)>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                declared: 0,
                detail: "a system needs at least one component".into(),
            });
        }
        let (param_names, param_values): (Vec<_>, Vec<_>) = parameters.into_iter().unzip();
        for (k, c) in components.iter().enumerate() {
            if let Some(v) = c.max_var().filter(|v| *v >= n) {
                return Err(Error::UnknownIdentifier {
                    pos: 0,
                    name: format!("x{} (in f{})", v + 1, k + 1),
                });
            }
            if let Some(p) = c.max_param().filter(|p| *p >= param_names.len()) {
                return Err(Error::UnknownIdentifier {
                    pos: 0,
                    name: format!("parameter #{p} (in f{})", k + 1),
                });
            }
        }
        Ok(SystemSpec {
            name: name.to_string(),
            components,
            param_names,
            param_values,
        })
    }

    /// Parses the textual system format.
    pub fn parse(text: &str) -> Result<Self> {
        parse::parse_system(text, "user")
    }

    pub fn parse_named(text: &str, name: &str) -> Result<Self> {
        parse::parse_system(text, name)
    }

    /// One of `fixedpoint-example`, `vanderpol`, `linear-diag(a1,...,an)`.
    pub fn builtin(name: &str) -> Result<Self> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "fixedpoint-example" => Self::parse_named(
                "n=2; f1=-sin(x1)-2*sin(x2/2)^2; f2=2*sin(x1/2)^2-1.5*sin(x2)",
                "fixedpoint-example",
            ),
            "vanderpol" => Self::parse_named("n=2; f1=x2; f2=(1-x1^2)*x2-x1", "vanderpol"),
            other => {
                let inner = other
                    .strip_prefix("linear-diag(")
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| Error::UnknownBuiltin(name.to_string()))?;
                let rates: Vec<f64> = inner
                    .split(',')
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::UnknownBuiltin(name.to_string()))?;
                if rates.is_empty() || rates.iter().any(|r| !r.is_finite()) {
                    return Err(Error::UnknownBuiltin(name.to_string()));
                }
                let components = rates
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Expr::binary(BinaryOp::Mul, Expr::Const(*a), Expr::Var(i)))
                    .collect();
                SystemSpec::new(&compact, components, vec![])
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn parameters(&self) -> Vec<(String, f64)> {
        self.param_names
            .iter()
            .cloned()
            .zip(self.param_values.iter().copied())
            .collect()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::StateLength {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_field_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_field_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(x)?;
        for (k, c) in self.components.iter().enumerate() {
            let v = c
                .eval(x, &self.param_values)
                .map_err(|what| Error::Domain { component: k, what })?;
            if !v.is_finite() {
                return Err(Error::Domain {
                    component: k,
                    what: format!("non-finite value {v}"),
                });
            }
            out[k] = v;
        }
        Ok(())
    }

    pub fn eval_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.dim();
        let mut f = vec![0.0; n];
        let mut j = Matrix::zeros(n, n);
        self.eval_with_jacobian(x, &mut f, &mut j)?;
        Ok(j)
    }

    /// Field value and Jacobian from a single jet pass.
    pub fn eval_with_jacobian(&self, x: &[f64], f: &mut [f64], jac: &mut Matrix) -> Result<()> {
        self.check_len(x)?;
        let n = self.dim();
        for (k, c) in self.components.iter().enumerate() {
            let jet = c
                .eval_jet(x, &self.param_values)
                .map_err(|what| Error::Domain { component: k, what })?;
            if !jet.is_finite() {
                return Err(Error::Domain {
                    component: k,
                    what: format!("non-finite value or derivative at {x:?}"),
                });
            }
            f[k] = jet.value;
            jac.as_mut_slice()[k * n..(k + 1) * n].copy_from_slice(&jet.gradient);
        }
        Ok(())
    }

    /// Divergence (trace of the Jacobian) at `x`.
    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_jacobian(x)?.trace())
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={};", self.dim())?;
        for (k, c) in self.components.iter().enumerate() {
            write!(
                f,
                " f{}={};",
                k + 1,
                ExprDisplay {
                    expr: c,
                    params: &self.param_names
                }
            )?;
        }
        for (name, v) in self.param_names.iter().zip(&self.param_values) {
            if v.is_sign_negative() {
                write!(f, " param {name}=-{:?};", -v)?;
            } else {
                write!(f, " param {name}={v:?};")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_difference(spec: &SystemSpec, x: &[f64], h: f64) -> Matrix {
        let n = spec.dim();
        let mut m = Matrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fp = spec.eval_field(&xp).unwrap();
            let fm = spec.eval_field(&xm).unwrap();
            for i in 0..n {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        m
    }

    /// Random expression over `n` variables whose domain is all of R^n.
    fn random_expr(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Expr {
        if depth == 0 || rng.gen_bool(0.25) {
            return if rng.gen_bool(0.5) {
                Expr::Var(rng.gen_range(0..n))
            } else {
                Expr::Const(rng.gen_range(-2.0..2.0))
            };
        }
        match rng.gen_range(0..8) {
            0 => Expr::unary(UnaryOp::Sin, random_expr(rng, n, depth - 1)),
            1 => Expr::unary(UnaryOp::Cos, random_expr(rng, n, depth - 1)),
            2 => Expr::unary(
                UnaryOp::Exp,
                Expr::unary(UnaryOp::Sin, random_expr(rng, n, depth - 1)),
            ),
            3 => Expr::unary(UnaryOp::Neg, random_expr(rng, n, depth - 1)),
            4 => Expr::binary(
                BinaryOp::Pow,
                random_expr(rng, n, depth - 1),
                Expr::Const(rng.gen_range(0..4) as f64),
            ),
            5 => Expr::binary(
                BinaryOp::Add,
                random_expr(rng, n, depth - 1),
                random_expr(rng, n, depth - 1),
            ),
            6 => Expr::binary(
                BinaryOp::Sub,
                random_expr(rng, n, depth - 1),
                random_expr(rng, n, depth - 1),
            ),
            _ => Expr::binary(
                BinaryOp::Mul,
                random_expr(rng, n, depth - 1),
                random_expr(rng, n, depth - 1),
            ),
        }
    }

    #[test]
    fn builtins() {
        let vdp = SystemSpec::builtin("vanderpol").unwrap();
        assert_eq!(vdp.eval_field(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let j = vdp.eval_jacobian(&[0.0, 0.0]).unwrap();
        assert_eq!(j, Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 1.0]]));

        let fp = SystemSpec::builtin("fixedpoint-example").unwrap();
        assert_eq!(fp.eval_field(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(fp.eval_jacobian(&[0.0, 0.0]).unwrap(), Matrix::diag(&[-1.0, -1.5]));
        for x in [[0.3, -1.2], [1.9, 0.7], [-2.0, 2.0]] {
            let f = fp.eval_field(&x).unwrap();
            let textbook = [
                -x[0].sin() + x[1].cos() - 1.0,
                -x[0].cos() - 1.5 * x[1].sin() + 1.0,
            ];
            assert!((f[0] - textbook[0]).abs() < 1e-15 && (f[1] - textbook[1]).abs() < 1e-15);
        }

        let lin = SystemSpec::builtin("linear-diag(-1, -2)").unwrap();
        assert_eq!(lin.eval_field(&[1.0, 1.0]).unwrap(), vec![-1.0, -2.0]);
        assert_eq!(lin.name(), "linear-diag(-1,-2)");

        assert!(matches!(
            SystemSpec::builtin("lorenz"),
            Err(Error::UnknownBuiltin(_))
        ));
        assert!(SystemSpec::builtin("linear-diag()").is_err());
    }

    #[test]
    fn zero_field() {
        let s = SystemSpec::parse("n=1; f1=0").unwrap();
        assert_eq!(s.eval_field(&[3.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn domain_errors_name_the_component() {
        let s = SystemSpec::parse("n=2; f1=x1; f2=log(x2)").unwrap();
        assert!(matches!(
            s.eval_field(&[1.0, -1.0]),
            Err(Error::Domain { component: 1, .. })
        ));
        let s = SystemSpec::parse("n=1; f1=1/x1").unwrap();
        assert!(matches!(s.eval_field(&[0.0]), Err(Error::Domain { component: 0, .. })));
        let s = SystemSpec::parse("n=1; f1=x1^0.5").unwrap();
        assert!(matches!(s.eval_field(&[-1.0]), Err(Error::Domain { .. })));
        assert!(matches!(s.eval_jacobian(&[-1.0]), Err(Error::Domain { .. })));
        // integer powers of negative bases are fine
        let s = SystemSpec::parse("n=1; f1=x1^3").unwrap();
        assert_eq!(s.eval_jacobian(&[-2.0]).unwrap()[(0, 0)], 12.0);
    }

    #[test]
    fn state_length_is_checked() {
        let s = SystemSpec::builtin("vanderpol").unwrap();
        assert!(matches!(s.eval_field(&[1.0]), Err(Error::StateLength { .. })));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut specs = vec![
            SystemSpec::builtin("fixedpoint-example").unwrap(),
            SystemSpec::builtin("vanderpol").unwrap(),
            SystemSpec::builtin("linear-diag(-1,-2,-3)").unwrap(),
        ];
        for _ in 0..100 {
            let n = rng.gen_range(1..4);
            let comps = (0..n).map(|_| random_expr(&mut rng, n, 4)).collect();
            specs.push(SystemSpec::new("random", comps, vec![]).unwrap());
        }
        for spec in &specs {
            for _ in 0..20 {
                let x: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let exact = spec.eval_jacobian(&x).unwrap();
                let fd = central_difference(spec, &x, 1e-6);
                let scale = 1.0 + exact.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(
                    exact.max_abs_diff(&fd) <= 1e-6 * scale,
                    "{spec}: {:?} vs {:?}",
                    exact,
                    fd
                );
            }
        }
    }

    #[test]
    fn print_parse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..4);
            let comps = (0..n).map(|_| random_expr(&mut rng, n, 5)).collect();
            let spec =
                SystemSpec::new("random", comps, vec![("mu".into(), -0.25), ("k".into(), 3.0)])
                    .unwrap();
            let text = spec.to_string();
            let back = SystemSpec::parse(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let a = spec.eval_field(&x).unwrap();
                let b = back.eval_field(&x).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() <= 1e-15 * (1.0 + u.abs()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn builtin_round_trip(a in -5.0..5.0f64, b in -5.0..5.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let spec = SystemSpec::builtin(&format!("linear-diag({a},{b})")).unwrap();
            let back = SystemSpec::parse(&spec.to_string()).unwrap();
            prop_assert_eq!(spec.eval_field(&[x, y]).unwrap(), back.eval_field(&[x, y]).unwrap());
        }
    }
}
