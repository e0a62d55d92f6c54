//! Flow of `x' = f(x)` and of its prolonged system `(x, M)' = (f(x), J(x) M)`.

mod fixed_point;
mod integrator;
mod limit_cycle;

use std::io::Write;

pub use fixed_point::{find_fixed_point, FixedPointModel, NewtonConfig};
pub use integrator::{hermite, IntegratorConfig, Method, Solver};
pub use limit_cycle::{find_limit_cycle, radial_projection, CycleConfig, CycleSample, LimitCycleModel};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::linalg::Matrix;
use crate::vectorfield::SystemSpec;

/// Stored integration nodes with cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one node")
    }

    /// State at time `t`, clamped to the integrated interval.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        let dim = self.states[0].len();
        if n == 1 {
            return self.states[0].clone();
        }
        let forward = self.times[n - 1] >= self.times[0];
        let key = |s: f64| if forward { s } else { -s };
        let tk = key(t);
        if tk <= key(self.times[0]) {
            return self.states[0].clone();
        }
        if tk >= key(self.times[n - 1]) {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| key(s) <= tk).saturating_sub(1).min(n - 2);
        let mut out = vec![0.0; dim];
        hermite(
            self.times[i],
            &self.states[i],
            &self.derivatives[i],
            self.times[i + 1],
            &self.states[i + 1],
            &self.derivatives[i + 1],
            t,
            &mut out,
        );
        out
    }

    /// CSV dump `t,x1..xn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.states[0].len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=dim).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(fmt_f64(*t)).chain(x.iter().map(|v| fmt_f64(*v))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Joint trajectory of the state and the tangent frame `M(t) = dpsi^t(x0) M0`.
#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub frames: Vec<Matrix>,
}

impl TangentTrajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("non-empty")
    }

    pub fn last_frame(&self) -> &Matrix {
        self.frames.last().expect("non-empty")
    }

    /// CSV dump `t,x1..xn,m11..mnn` (row-major frame entries).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.states[0].len();
        let cols = self.frames[0].cols();
        let mut header = vec!["t".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        for i in 1..=dim {
            header.extend((1..=cols).map(|j| format!("m{i}{j}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt_f64(self.times[k])];
            row.extend(self.states[k].iter().map(|v| fmt_f64(*v)));
            row.extend(self.frames[k].as_slice().iter().map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn check_state(spec: &SystemSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(Error::StateLength {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite state {x:?}")));
    }
    Ok(())
}

/// Right-hand side of the flow alone.
pub fn field_rhs(spec: &SystemSpec) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let n = spec.dim();
    move |_t, y, dy| spec.eval_field_into(&y[..n], &mut dy[..n])
}

/// Right-hand side of the prolonged flow acting on an `n x cols` frame
/// stored row-major after the state. Components past `n + n*cols` are left
/// untouched for the caller.
pub fn prolonged_rhs(
    spec: &SystemSpec,
    cols: usize,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let n = spec.dim();
    let mut jac = Matrix::zeros(n, n);
    move |_t, y, dy| {
        spec.eval_with_jacobian(&y[..n], &mut dy[..n], &mut jac)?;
        let m = &y[n..n + n * cols];
        let out = &mut dy[n..n + n * cols];
        for i in 0..n {
            for j in 0..cols {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += jac[(i, k)] * m[k * cols + j];
                }
                out[i * cols + j] = acc;
            }
        }
        Ok(())
    }
}

/// Integrates the flow from `x0` to `t_end` (which may be negative).
pub fn integrate(spec: &SystemSpec, x0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    check_state(spec, x0)?;
    let n = spec.dim();
    let mut solver = Solver::new(field_rhs(spec), 0.0, x0.to_vec(), t_end >= 0.0, *cfg, n, n)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        derivatives: vec![solver.dy().to_vec()],
    };
    while solver.t() != t_end {
        solver.step(t_end)?;
        traj.times.push(solver.t());
        traj.states.push(solver.y().to_vec());
        traj.derivatives.push(solver.dy().to_vec());
    }
    Ok(traj)
}

/// Endpoint of the flow, without storing intermediate nodes.
pub fn flow_point(spec: &SystemSpec, x0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    check_state(spec, x0)?;
    let n = spec.dim();
    let mut solver = Solver::new(field_rhs(spec), 0.0, x0.to_vec(), t >= 0.0, *cfg, n, n)?;
    solver.advance_to(t)?;
    Ok(solver.y().to_vec())
}

/// Integrates the prolonged flow from `(x0, m0)`; `m0` may be rectangular
/// (`n x k`). Both the state and the frame are under error control.
pub fn integrate_prolonged(
    spec: &SystemSpec,
    x0: &[f64],
    m0: &Matrix,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<TangentTrajectory> {
    check_state(spec, x0)?;
    let n = spec.dim();
    if m0.rows() != n {
        return Err(Error::StateLength {
            expected: n,
            found: m0.rows(),
        });
    }
    if m0.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite initial frame".into()));
    }
    let cols = m0.cols();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(m0.as_slice());
    let total = y0.len();
    let mut solver = Solver::new(prolonged_rhs(spec, cols), 0.0, y0, t_end >= 0.0, *cfg, total, n)?;
    let mut traj = TangentTrajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        frames: vec![m0.clone()],
    };
    while solver.t() != t_end {
        solver.step(t_end)?;
        let y = solver.y();
        traj.times.push(solver.t());
        traj.states.push(y[..n].to_vec());
        traj.frames.push(Matrix::from_row_slice(n, cols, &y[n..]));
    }
    Ok(traj)
}

/// Endpoint `(psi^t(x0), dpsi^t(x0) m0)` of the prolonged flow.
pub fn prolonged_point(
    spec: &SystemSpec,
    x0: &[f64],
    m0: &Matrix,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Matrix)> {
    check_state(spec, x0)?;
    let n = spec.dim();
    let cols = m0.cols();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(m0.as_slice());
    let total = y0.len();
    let mut solver = Solver::new(prolonged_rhs(spec, cols), 0.0, y0, t >= 0.0, *cfg, total, n)?;
    solver.advance_to(t)?;
    let y = solver.y();
    Ok((y[..n].to_vec(), Matrix::from_row_slice(n, cols, &y[n..])))
}
