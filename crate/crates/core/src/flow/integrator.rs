//! Explicit Runge-Kutta steppers over flat `f64` state vectors.
//!
//! The adaptive method is the Dormand-Prince 5(4) pair with FSAL; the fixed
//! step classical RK4 is kept as a reference integrator for oracles.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4 { dt: f64 },
    /// Embedded Dormand-Prince 5(4) with step-size control.
    DormandPrince,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub initial_step: f64,
    pub max_step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    /// Integration stops with [`Error::Diverged`] once the state norm exceeds this.
    pub divergence_radius: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::DormandPrince,
            initial_step: 1e-3,
            max_step: 0.5,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_steps: 2_000_000,
            divergence_radius: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4 { dt },
            ..Default::default()
        }
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_divergence_radius(mut self, r: f64) -> Self {
        self.divergence_radius = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.divergence_radius > 0.0) {
            return bad("divergence radius must be positive");
        }
        if self.max_steps == 0 {
            return bad("max steps must be positive");
        }
        if !(self.initial_step > 0.0) || !(self.max_step > 0.0) {
            return bad("step sizes must be positive");
        }
        if let Method::Rk4 { dt } = self.method {
            if !(dt > 0.0) {
                return bad("RK4 step must be positive");
            }
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// error coefficients: b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// A stateful integrator for `y' = rhs(t, y)`.
///
/// Only the first `controlled` components enter the error norm (the rest
/// are quadratures riding along), and only the first `monitored` components
/// are checked against the divergence radius.
pub struct Solver<F> {
    rhs: F,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    h: f64,
    dir: f64,
    steps: usize,
    controlled: usize,
    monitored: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    // compensated summation of the increments
    comp: Vec<f64>,
    comp_new: Vec<f64>,
    prev_t: f64,
    prev_y: Vec<f64>,
    prev_dy: Vec<f64>,
}

impl<F> Solver<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(
        mut rhs: F,
        t0: f64,
        y0: Vec<f64>,
        forward: bool,
        cfg: IntegratorConfig,
        controlled: usize,
        monitored: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let dim = y0.len();
        let mut dy = vec![0.0; dim];
        rhs(t0, &y0, &mut dy)?;
        let dir = if forward { 1.0 } else { -1.0 };
        let h = match cfg.method {
            Method::Rk4 { dt } => dt,
            Method::DormandPrince => cfg.initial_step.min(cfg.max_step),
        };
        Ok(Solver {
            rhs,
            cfg,
            t: t0,
            prev_t: t0,
            prev_y: y0.clone(),
            prev_dy: dy.clone(),
            y: y0,
            dy,
            h: dir * h,
            dir,
            steps: 0,
            controlled: controlled.min(dim),
            monitored: monitored.min(dim),
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y_new: vec![0.0; dim],
            comp: vec![0.0; dim],
            comp_new: vec![0.0; dim],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// State and derivative at the start of the last accepted step.
    pub fn previous(&self) -> (f64, &[f64], &[f64]) {
        (self.prev_t, &self.prev_y, &self.prev_dy)
    }

    /// Cubic Hermite interpolation inside the last accepted step.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        hermite(
            self.prev_t,
            &self.prev_y,
            &self.prev_dy,
            self.t,
            &self.y,
            &self.dy,
            t,
            out,
        );
    }

    /// Takes one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let remaining = (t_limit - self.t) * self.dir;
        if remaining <= 0.0 {
            return Ok(());
        }
        if self.steps >= self.cfg.max_steps {
            return Err(Error::MaxSteps {
                max_steps: self.cfg.max_steps,
                t: self.t,
            });
        }
        self.prev_t = self.t;
        self.prev_y.copy_from_slice(&self.y);
        self.prev_dy.copy_from_slice(&self.dy);
        match self.cfg.method {
            Method::Rk4 { dt } => {
                let h = self.dir * dt.min(remaining);
                self.rk4_step(h)?;
                self.t = if dt >= remaining { t_limit } else { self.t + h };
            }
            Method::DormandPrince => loop {
                let mut h = self.h;
                let clipped = h.abs() >= remaining;
                if clipped {
                    h = self.dir * remaining;
                }
                if h.abs() < 1e-14 * self.t.abs().max(1.0) && !clipped {
                    return Err(Error::StepUnderflow { t: self.t });
                }
                let err = self.dp_trial(h)?;
                if err <= 1.0 {
                    self.t = if clipped { t_limit } else { self.t + h };
                    std::mem::swap(&mut self.y, &mut self.y_new);
                    std::mem::swap(&mut self.comp, &mut self.comp_new);
                    self.dy.copy_from_slice(&self.k[6]);
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if !clipped || factor < 1.0 {
                        self.h = self.dir * (h.abs() * factor).min(self.cfg.max_step);
                    }
                    break;
                }
                let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                self.h = h * factor;
            },
        }
        self.steps += 1;
        let r2: f64 = self.y[..self.monitored].iter().map(|v| v * v).sum();
        if !r2.is_finite() || r2.sqrt() > self.cfg.divergence_radius {
            return Err(Error::Diverged {
                t: self.t,
                state: self.y[..self.monitored].to_vec(),
            });
        }
        Ok(())
    }

    /// Integrates exactly up to `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while (t_target - self.t) * self.dir > 0.0 {
            self.step(t_target)?;
        }
        Ok(())
    }

    fn stage(&mut self, t: f64, coeffs: &[(usize, f64)], h: f64, out: usize) -> Result<()> {
        for i in 0..self.y.len() {
            let mut acc = self.y[i];
            for &(j, a) in coeffs {
                acc += h * a * self.k[j][i];
            }
            self.tmp[i] = acc;
        }
        let (tmp, k) = (&self.tmp, &mut self.k[out]);
        (self.rhs)(t, tmp, k)
    }

    fn dp_trial(&mut self, h: f64) -> Result<f64> {
        let t = self.t;
        self.k[0].copy_from_slice(&self.dy);
        self.stage(t + C2 * h, &[(0, A21)], h, 1)?;
        self.stage(t + C3 * h, &[(0, A31), (1, A32)], h, 2)?;
        self.stage(t + C4 * h, &[(0, A41), (1, A42), (2, A43)], h, 3)?;
        self.stage(t + C5 * h, &[(0, A51), (1, A52), (2, A53), (3, A54)], h, 4)?;
        self.stage(
            t + h,
            &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)],
            h,
            5,
        )?;
        for i in 0..self.y.len() {
            let inc = h
                * (B1 * self.k[0][i]
                    + B3 * self.k[2][i]
                    + B4 * self.k[3][i]
                    + B5 * self.k[4][i]
                    + B6 * self.k[5][i])
                + self.comp[i];
            let sum = self.y[i] + inc;
            self.comp_new[i] = inc - (sum - self.y[i]);
            self.y_new[i] = sum;
        }
        {
            let (y_new, k) = (&self.y_new, &mut self.k[6]);
            (self.rhs)(t + h, y_new, k)?;
        }
        let mut acc = 0.0;
        for i in 0..self.controlled {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * self.y[i].abs().max(self.y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        let err = (acc / self.controlled.max(1) as f64).sqrt();
        if !err.is_finite() {
            return Ok(1e10);
        }
        Ok(err)
    }

    fn rk4_step(&mut self, h: f64) -> Result<()> {
        let t = self.t;
        self.k[0].copy_from_slice(&self.dy);
        self.stage(t + 0.5 * h, &[(0, 0.5)], h, 1)?;
        self.stage(t + 0.5 * h, &[(1, 0.5)], h, 2)?;
        self.stage(t + h, &[(2, 1.0)], h, 3)?;
        for i in 0..self.y.len() {
            let inc = h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i])
                + self.comp[i];
            let sum = self.y[i] + inc;
            self.comp[i] = inc - (sum - self.y[i]);
            self.y[i] = sum;
        }
        let (y, dy) = (&self.y, &mut self.dy);
        (self.rhs)(t + h, y, dy)
    }
}

/// Cubic Hermite interpolant through `(t0, y0, d0)` and `(t1, y1, d1)`.
#[allow(clippy::too_many_arguments)]
pub fn hermite(t0: f64, y0: &[f64], d0: &[f64], t1: f64, y1: &[f64], d1: &[f64], t: f64, out: &mut [f64]) {
    let h = t1 - t0;
    if h == 0.0 {
        out.copy_from_slice(y1);
        return;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -y[0];
        Ok(())
    }

    #[test]
    fn dormand_prince_exponential() {
        let cfg = IntegratorConfig::default();
        let mut s = Solver::new(decay, 0.0, vec![1.0], true, cfg, 1, 1).unwrap();
        s.advance_to(1.0).unwrap();
        assert!((s.y()[0] - (-1.0f64).exp()).abs() < 1e-10);
        assert_eq!(s.t(), 1.0);
    }

    #[test]
    fn backward_integration() {
        let cfg = IntegratorConfig::default();
        let mut s = Solver::new(decay, 0.0, vec![1.0], false, cfg, 1, 1).unwrap();
        s.advance_to(-2.0).unwrap();
        assert!((s.y()[0] - 2f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|dt| {
                let mut s =
                    Solver::new(decay, 0.0, vec![1.0], true, IntegratorConfig::rk4(*dt), 1, 1)
                        .unwrap();
                s.advance_to(1.0).unwrap();
                (s.y()[0] - (-1.0f64).exp()).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 4.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn divergence_is_reported() {
        let cubic = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = y[0] * y[0] * y[0];
            Ok(())
        };
        let cfg = IntegratorConfig::default().with_divergence_radius(100.0);
        let mut s = Solver::new(cubic, 0.0, vec![1.0], true, cfg, 1, 1).unwrap();
        assert!(matches!(s.advance_to(1.0), Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_config() {
        let cfg = IntegratorConfig {
            abs_tol: 0.0,
            ..Default::default()
        };
        assert!(Solver::new(decay, 0.0, vec![1.0], true, cfg, 1, 1).is_err());
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t * t * t - 2.0 * t;
        let d = |t: f64| 3.0 * t * t - 2.0;
        let mut out = [0.0];
        hermite(0.5, &[f(0.5)], &[d(0.5)], 1.5, &[f(1.5)], &[d(1.5)], 0.8, &mut out);
        assert!((out[0] - f(0.8)).abs() < 1e-14);
    }
}
