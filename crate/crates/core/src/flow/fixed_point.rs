use num_complex::Complex64;

use super::check_state;
use crate::error::{Error, Result};
use crate::linalg::{eigen, norm, solve, Matrix};
use crate::vectorfield::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Relative residual target; the absolute target is `tol * (1 + |guess|)`.
    pub tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iterations: 100,
            tol: 1e-12,
        }
    }
}

/// Hyperbolic equilibrium with its linearization.
#[derive(Debug, Clone)]
pub struct FixedPointModel {
    pub x: Vec<f64>,
    pub jacobian: Matrix,
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub right: Vec<Vec<Complex64>>,
    /// Normalized against `right`: `left[i] . right[j] = delta_ij`.
    pub left: Vec<Vec<Complex64>>,
    pub condition: f64,
    pub residual: f64,
}

impl FixedPointModel {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// True when every eigenvalue has negative real part.
    pub fn is_stable(&self) -> bool {
        self.eigenvalues.iter().all(|l| l.re < 0.0)
    }
}

/// Damped Newton iteration on `f(x) = 0` followed by eigen-analysis of the Jacobian.
pub fn find_fixed_point(spec: &SystemSpec, guess: &[f64], cfg: &NewtonConfig) -> Result<FixedPointModel> {
    check_state(spec, guess)?;
    let n = spec.dim();
    let target = cfg.tol * (1.0 + norm(guess));
    let mut x = guess.to_vec();
    let mut f = vec![0.0; n];
    let mut jac = Matrix::zeros(n, n);
    spec.eval_with_jacobian(&x, &mut f, &mut jac)?;
    let mut res = norm(&f);
    let mut iterations = 0;
    while res > target {
        if iterations >= cfg.max_iterations {
            return Err(Error::NewtonFailed {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let step = solve(&jac, &f).map_err(|_| Error::NewtonFailed {
            iterations,
            residual: res,
        })?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - damping * s).collect();
            let ok = spec.eval_field(&trial).map(|ft| (norm(&ft), ft));
            match ok {
                Ok((r, _)) if r < res || damping < 1e-3 => {
                    x = trial;
                    break;
                }
                _ if damping < 1e-3 => {
                    return Err(Error::NewtonFailed {
                        iterations,
                        residual: res,
                    })
                }
                _ => damping *= 0.5,
            }
        }
        spec.eval_with_jacobian(&x, &mut f, &mut jac)?;
        res = norm(&f);
    }
    // one polishing step, kept only if it does not increase the residual
    if let Ok(step) = solve(&jac, &f) {
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - s).collect();
        if let Ok(ft) = spec.eval_field(&trial) {
            if norm(&ft) <= res {
                x = trial;
                spec.eval_with_jacobian(&x, &mut f, &mut jac)?;
                res = norm(&f);
            }
        }
    }
    let eig = eigen(&jac)?;
    if eig.condition > 1e12 {
        return Err(Error::IllConditionedEigenbasis {
            condition: eig.condition,
        });
    }
    Ok(FixedPointModel {
        x,
        jacobian: jac,
        eigenvalues: eig.values,
        right: eig.right,
        left: eig.left,
        condition: eig.condition,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eig_residual(m: &FixedPointModel) -> f64 {
        let n = m.dim();
        let mut worst: f64 = 0.0;
        for (lambda, v) in m.eigenvalues.iter().zip(&m.right) {
            for i in 0..n {
                let jv: Complex64 = (0..n).map(|k| v[k] * m.jacobian[(i, k)]).sum();
                worst = worst.max((jv - lambda * v[i]).norm());
            }
        }
        worst
    }

    #[test]
    fn fixedpoint_example() {
        let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
        let m = find_fixed_point(&spec, &[0.1, 0.1], &NewtonConfig::default()).unwrap();
        assert!(norm(&m.x) < 1e-12);
        assert!((m.eigenvalues[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-10);
        assert!((m.eigenvalues[1] - Complex64::new(-1.5, 0.0)).norm() < 1e-10);
        assert!(eig_residual(&m) < 1e-10 * m.jacobian.frobenius_norm());
        assert!(m.is_stable());
    }

    #[test]
    fn vanderpol_origin() {
        let spec = SystemSpec::builtin("vanderpol").unwrap();
        let m = find_fixed_point(&spec, &[0.1, -0.1], &NewtonConfig::default()).unwrap();
        assert!(norm(&m.x) < 1e-12);
        let s = 3f64.sqrt() / 2.0;
        assert!((m.eigenvalues[0] - Complex64::new(0.5, s)).norm() < 1e-10);
        assert!((m.eigenvalues[1] - Complex64::new(0.5, -s)).norm() < 1e-10);
        assert!(!m.is_stable());
    }

    #[test]
    fn linear_one_step() {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        let m = find_fixed_point(&spec, &[5.0, 5.0], &NewtonConfig::default()).unwrap();
        assert!(norm(&m.x) < 1e-14);
    }

    #[test]
    fn left_right_biorthogonal() {
        let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
        let m = find_fixed_point(&spec, &[0.1, 0.1], &NewtonConfig::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let d: Complex64 = m.left[i].iter().zip(&m.right[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn no_root_fails() {
        let spec = SystemSpec::parse("n=1; f1=x1^2+1").unwrap();
        assert!(matches!(
            find_fixed_point(&spec, &[0.5], &NewtonConfig::default()),
            Err(Error::NewtonFailed { .. })
        ));
    }
}
