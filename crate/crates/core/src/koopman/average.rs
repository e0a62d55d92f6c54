//! Laplace averages `lim (1/T) int_0^T e^{-lambda t} g(psi^t x) dt` and their
//! prolonged counterparts, estimated by a sliding window.
//!
//! The running integral `I(t)` is carried as extra ODE components, so its
//! accuracy follows the adaptive stepper. The estimate at time `t` is
//! `(I(t) - I(t - W)) / W`, which removes the `1/T` tail of the running
//! average while keeping its limit.

use num_complex::Complex64;

use super::observable::Observable;
use crate::error::{Error, Result};
use crate::flow::{check_state, prolonged_rhs, IntegratorConfig, Solver};
use crate::linalg::Matrix;
use crate::vectorfield::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageConfig {
    /// Averaging window and convergence step `Delta T`.
    pub window: f64,
    pub t_max: f64,
    /// Target relative change of the estimate over one window.
    pub tol: f64,
    /// Largest relative change accepted when the target is out of reach
    /// because of a floating point floor.
    pub accept_tol: f64,
    /// No estimate is accepted whose window starts before this time.
    pub skip: f64,
    /// Checkpoints per window.
    pub checkpoints: usize,
    pub integrator: IntegratorConfig,
}

impl Default for AverageConfig {
    fn default() -> Self {
        AverageConfig {
            window: 1.0,
            t_max: 200.0,
            tol: 1e-6,
            accept_tol: 1e-3,
            skip: 0.0,
            checkpoints: 8,
            integrator: IntegratorConfig {
                abs_tol: 1e-18,
                rel_tol: 1e-12,
                max_step: 0.25,
                ..Default::default()
            },
        }
    }
}

impl AverageConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.window > 0.0) {
            return bad("averaging window must be positive");
        }
        if !(self.t_max > self.window) {
            return bad("maximum horizon must exceed the averaging window");
        }
        if !(self.tol > 0.0) || !(self.accept_tol >= self.tol) {
            return bad("averaging tolerances must satisfy 0 < tol <= accept_tol");
        }
        if !(self.skip >= 0.0) {
            return bad("transient skip must be non-negative");
        }
        if self.checkpoints == 0 {
            return bad("at least one checkpoint per window is needed");
        }
        self.integrator.validate()
    }
}

/// One observable averaged against one eigenvalue.
pub struct Job<'a> {
    pub observable: &'a dyn Observable,
    pub lambda: Complex64,
    /// Overrides [`AverageConfig::skip`] for this job.
    pub skip: Option<f64>,
    /// Rate `mu` of the leading correction `A e^{mu t}` in the window
    /// estimate. When set, two consecutive windows are combined to cancel it.
    pub correction: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub value: Complex64,
    /// Prolonged averages against the columns of the initial frame.
    pub row: Vec<Complex64>,
    /// Time at which the accepted estimate ends.
    pub horizon: f64,
    /// Relative change over the last window of the accepted estimate.
    pub residual: f64,
}

struct Track {
    done: Option<Average>,
    best: Option<(f64, Vec<Complex64>, f64)>,
    last_change: f64,
}

/// Averages every job along one trajectory from `x`, optionally carrying
/// the tangent frame `frame` (`n x k`) for the prolonged averages.
pub fn average_jobs(
    spec: &SystemSpec,
    x: &[f64],
    frame: Option<&Matrix>,
    jobs: &[Job<'_>],
    cfg: &AverageConfig,
) -> Result<Vec<Average>> {
    check_state(spec, x)?;
    cfg.validate()?;
    let n = spec.dim();
    let k = frame.map_or(0, |m| m.cols());
    if let Some(m) = frame {
        if m.rows() != n {
            return Err(Error::StateLength {
                expected: n,
                found: m.rows(),
            });
        }
    }
    let per_job = 1 + k;
    let base = n + n * k;
    let mut y0 = x.to_vec();
    if let Some(m) = frame {
        y0.extend_from_slice(m.as_slice());
    }
    y0.resize(base + 2 * per_job * jobs.len(), 0.0);

    let mut inner = prolonged_rhs(spec, k);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        inner(t, y, dy)?;
        let state = &y[..n];
        let m = &y[n..base];
        for (j, job) in jobs.iter().enumerate() {
            let w = (-job.lambda * t).exp();
            let off = base + 2 * per_job * j;
            let g = w * job.observable.value(state)?;
            dy[off] = g.re;
            dy[off + 1] = g.im;
            if k > 0 {
                let c = job.observable.covector(state)?;
                for col in 0..k {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        acc += c[i] * m[i * k + col];
                    }
                    let r = w * acc;
                    dy[off + 2 + 2 * col] = r.re;
                    dy[off + 3 + 2 * col] = r.im;
                }
            }
        }
        Ok(())
    };

    let mut solver = Solver::new(rhs, 0.0, y0, true, cfg.integrator, base, n)?;
    let m = cfg.checkpoints;
    let delta = cfg.window / m as f64;
    let extrapolate = jobs.iter().any(|j| j.correction.is_some());
    let span = if extrapolate { m + 2 } else { m + 1 };
    let mut snapshots: Vec<Vec<f64>> = vec![solver.y()[base..].to_vec()];
    let mut estimates: Vec<Vec<Vec<Complex64>>> = Vec::new();
    let mut tracks: Vec<Track> = jobs
        .iter()
        .map(|_| Track {
            done: None,
            best: None,
            last_change: f64::INFINITY,
        })
        .collect();
    let mut step = 0usize;
    loop {
        step += 1;
        let t = step as f64 * delta;
        if t > cfg.t_max * (1.0 + 1e-12) {
            break;
        }
        solver.advance_to(t)?;
        snapshots.push(solver.y()[base..].to_vec());
        if snapshots.len() > m + 1 {
            snapshots.remove(0);
        }
        if step < m {
            continue;
        }
        let (old, new) = (&snapshots[0], &snapshots[snapshots.len() - 1]);
        let est: Vec<Vec<Complex64>> = (0..jobs.len())
            .map(|j| {
                let off = 2 * per_job * j;
                (0..per_job)
                    .map(|p| {
                        let i = off + 2 * p;
                        Complex64::new(new[i] - old[i], new[i + 1] - old[i + 1]) / cfg.window
                    })
                    .collect()
            })
            .collect();
        estimates.push(est);
        if estimates.len() > span {
            estimates.remove(0);
        }
        if estimates.len() < span {
            continue;
        }
        let last = span - 1;
        for (j, job) in jobs.iter().enumerate() {
            let track = &mut tracks[j];
            if track.done.is_some() {
                continue;
            }
            let skip = job.skip.unwrap_or(cfg.skip);
            let (change, cur, reach) = match job.correction {
                Some(mu) => {
                    // the cancelled estimate is compared one checkpoint back; its
                    // remainder decays like e^{2 mu t}, so the change is rescaled
                    // to the size of that remainder
                    let q = (mu * cfg.window).exp();
                    let e = |i: usize| &estimates[i][j];
                    let cur = cancel(e(last), e(last - m), q);
                    let prev = cancel(e(last - 1), e(last - 1 - m), q);
                    let shrink = (Complex64::new(1.0, 0.0) - (2.0 * mu * delta).exp()).norm();
                    (relative_change(&prev, &cur) / shrink, cur, 2.0 + 1.0 / m as f64)
                }
                None => {
                    let cur = estimates[last][j].clone();
                    (relative_change(&estimates[last - m][j], &cur), cur, 1.0)
                }
            };
            if t - reach * cfg.window < skip - 1e-12 {
                continue;
            }
            track.last_change = change;
            if change <= cfg.tol {
                track.done = Some(finish(&cur, t, change));
                continue;
            }
            let improved = track.best.as_ref().is_none_or(|b| change < b.0);
            if improved && change.is_finite() {
                track.best = Some((change, cur, t));
            } else if let Some((c, v, tb)) = &track.best {
                // past the floating point floor: the estimate only degrades
                if *c <= cfg.accept_tol && (change > 1e3 * c || !change.is_finite()) {
                    track.done = Some(finish(v, *tb, *c));
                }
            }
        }
        if tracks.iter().all(|tr| tr.done.is_some()) {
            break;
        }
    }
    tracks
        .into_iter()
        .map(|tr| match (tr.done, tr.best) {
            (Some(a), _) => Ok(a),
            (None, Some((c, v, tb))) if c <= cfg.accept_tol => Ok(finish(&v, tb, c)),
            _ => Err(Error::AverageNotConverged {
                horizon: cfg.t_max,
                residual: tr.last_change,
            }),
        })
        .collect()
}

/// `(a - q b) / (1 - q)`: cancels a term that scales by `q` from `b` to `a`.
fn cancel(a: &[Complex64], b: &[Complex64], q: Complex64) -> Vec<Complex64> {
    let s = Complex64::new(1.0, 0.0) - q;
    a.iter().zip(b).map(|(x, y)| (x - q * y) / s).collect()
}

fn relative_change(prev: &[Complex64], cur: &[Complex64]) -> f64 {
    let diff: f64 = prev.iter().zip(cur).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let size: f64 = cur.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else if size == 0.0 {
        f64::INFINITY
    } else {
        diff / size
    }
}

fn finish(est: &[Complex64], horizon: f64, residual: f64) -> Average {
    Average {
        value: est[0],
        row: est[1..].to_vec(),
        horizon,
        residual,
    }
}

/// Laplace average of a plain observable.
pub fn laplace_average(
    spec: &SystemSpec,
    g: &dyn Observable,
    lambda: Complex64,
    x: &[f64],
    cfg: &AverageConfig,
) -> Result<Complex64> {
    let jobs = [Job {
        observable: g,
        lambda,
        skip: None,
        correction: None,
    }];
    Ok(average_jobs(spec, x, None, &jobs, cfg)?[0].value)
}

/// Laplace average of the prolonged observable `g~(x, dx) = dg(x) dx`
/// along the prolonged trajectory from `(x, dx)`.
pub fn laplace_average_prolonged(
    spec: &SystemSpec,
    g: &dyn Observable,
    lambda: Complex64,
    x: &[f64],
    dx: &[f64],
    cfg: &AverageConfig,
) -> Result<Complex64> {
    if dx.len() != spec.dim() {
        return Err(Error::StateLength {
            expected: spec.dim(),
            found: dx.len(),
        });
    }
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite tangent vector".into()));
    }
    let frame = Matrix::from_row_slice(dx.len(), 1, dx);
    let jobs = [Job {
        observable: g,
        lambda,
        skip: None,
        correction: None,
    }];
    Ok(average_jobs(spec, x, Some(&frame), &jobs, cfg)?[0].row[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::LinearObservable;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn linear_coordinates_are_eigenfunctions() {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        let cfg = AverageConfig::default();
        let x = [0.7, -1.3];
        let g1 = LinearObservable::coordinate(0, 2);
        let g2 = LinearObservable::coordinate(1, 2);
        let a = laplace_average(&spec, &g1, c(-1.0), &x, &cfg).unwrap();
        let b = laplace_average(&spec, &g2, c(-2.0), &x, &cfg).unwrap();
        assert!((a - 0.7).norm() < 1e-6);
        assert!((b + 1.3).norm() < 1e-6);
        let d = laplace_average_prolonged(&spec, &g1, c(-1.0), &x, &[0.25, 3.0], &cfg).unwrap();
        assert!((d - 0.25).norm() < 1e-6);
    }

    #[test]
    fn wrong_eigenvalue_does_not_converge() {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        let cfg = AverageConfig {
            t_max: 30.0,
            ..Default::default()
        };
        let g1 = LinearObservable::coordinate(0, 2);
        // e^{-(-0.5)t} x1(t) decays, the average drifts to zero relative to itself
        let r = laplace_average(&spec, &g1, c(-0.5), &[1.0, 1.0], &cfg);
        assert!(matches!(r, Err(Error::AverageNotConverged { .. })), "{r:?}");
    }

    #[test]
    fn invalid_config_rejected() {
        let spec = SystemSpec::builtin("linear-diag(-1)").unwrap();
        let g = LinearObservable::coordinate(0, 1);
        let cfg = AverageConfig {
            t_max: 0.5,
            ..Default::default()
        };
        assert!(matches!(laplace_average(&spec, &g, c(-1.0), &[1.0], &cfg), Err(Error::Config(_))));
    }
}
