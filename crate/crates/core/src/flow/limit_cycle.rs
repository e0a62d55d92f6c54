use std::f64::consts::PI;

use num_complex::Complex64;

use super::{check_state, field_rhs, flow_point, hermite, prolonged_point, IntegratorConfig, Solver};
use crate::error::{Error, Result};
use crate::linalg::{dot, eigen, norm, Matrix};
use crate::vectorfield::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    /// Time integrated before the section is placed.
    pub transient: f64,
    /// Crossings are searched until this time past the transient.
    pub max_time: f64,
    /// Successive return points must be this close for the period to be accepted.
    pub closure_tol: f64,
    pub samples: usize,
    pub multiplier_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            transient: 50.0,
            max_time: 500.0,
            closure_tol: 1e-8,
            samples: 2048,
            multiplier_tol: 1e-5,
            integrator: IntegratorConfig::default().with_tolerances(1e-13, 1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CycleSample {
    /// Phase in `[0, 2*pi)`.
    pub phase: f64,
    pub time: f64,
    pub point: Vec<f64>,
    pub tangent: Vec<f64>,
    /// Outward unit normal; only defined for planar cycles.
    pub normal: Option<Vec<f64>>,
}

/// A stable periodic orbit with its Floquet data.
#[derive(Debug, Clone)]
pub struct LimitCycleModel {
    pub period: f64,
    pub omega: f64,
    pub anchor: Vec<f64>,
    /// Uniform in time, `samples[k].time = k * period / samples.len()`.
    pub samples: Vec<CycleSample>,
    pub monodromy: Matrix,
    pub trivial_multiplier: Complex64,
    /// Nontrivial multipliers, matched with `floquet_exponents`.
    pub multipliers: Vec<Complex64>,
    /// `log(mu) / T` for the nontrivial multipliers, by descending real part.
    pub floquet_exponents: Vec<Complex64>,
    pub closure_gap: f64,
    /// Planar orientation of the orbit (`Some(true)` when clockwise).
    pub clockwise: Option<bool>,
}

impl LimitCycleModel {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Point of the cycle at time `t` past the anchor (periodic).
    pub fn point_at_time(&self, t: f64) -> Vec<f64> {
        let n = self.samples.len();
        let dt = self.period / n as f64;
        let tau = t.rem_euclid(self.period);
        let k = ((tau / dt).floor() as usize).min(n - 1);
        let (a, b) = (&self.samples[k], &self.samples[(k + 1) % n]);
        let mut out = vec![0.0; self.dim()];
        hermite(
            k as f64 * dt,
            &a.point,
            &a.tangent,
            (k + 1) as f64 * dt,
            &b.point,
            &b.tangent,
            tau,
            &mut out,
        );
        out
    }

    pub fn point_at_phase(&self, theta: f64) -> Vec<f64> {
        self.point_at_time(theta / self.omega)
    }
}

struct Crossing {
    t: f64,
    x: Vec<f64>,
}

/// Locates a stable periodic orbit reached from `x0`.
pub fn find_limit_cycle(spec: &SystemSpec, x0: &[f64], cfg: &CycleConfig) -> Result<LimitCycleModel> {
    check_state(spec, x0)?;
    if cfg.samples < 512 {
        return Err(Error::Config("limit cycles need at least 512 samples".into()));
    }
    let n = spec.dim();
    let icfg = cfg.integrator;
    let p = flow_point(spec, x0, cfg.transient, &icfg)?;
    let fp = spec.eval_field(&p)?;
    let speed = norm(&fp);
    if speed < 1e-8 {
        return Err(Error::NotOscillating);
    }
    let nu: Vec<f64> = fp.iter().map(|v| v / speed).collect();
    let section = |x: &[f64]| -> f64 { nu.iter().zip(x.iter().zip(&p)).map(|(a, (b, c))| a * (b - c)).sum() };

    let mut solver = Solver::new(field_rhs(spec), 0.0, p.clone(), true, icfg, n, n)?;
    let mut h_prev = 0.0;
    let mut last: Option<Crossing> = None;
    let mut last_gap = f64::INFINITY;
    let mut found: Option<(f64, Vec<f64>)> = None;
    while solver.t() < cfg.max_time {
        solver.step(cfg.max_time)?;
        let h_new = section(solver.y());
        if h_prev < 0.0 && h_new >= 0.0 {
            let c = refine_crossing(spec, &solver, &section, &nu, &icfg)?;
            if let Some(prev) = &last {
                let gap = c.x.iter().zip(&prev.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                last_gap = gap;
                if gap < cfg.closure_tol {
                    found = Some((c.t - prev.t, c.x.clone()));
                    break;
                }
            }
            last = Some(c);
        }
        h_prev = h_new;
    }
    let (period, anchor) = match found {
        Some(v) => v,
        None if last.is_none() => return Err(Error::NotOscillating),
        None => return Err(Error::NoClosure { gap: last_gap }),
    };
    if !(period > 0.0) {
        return Err(Error::NotOscillating);
    }

    let count = cfg.samples;
    let mut samples = Vec::with_capacity(count);
    let mut s = Solver::new(field_rhs(spec), 0.0, anchor.clone(), true, icfg, n, n)?;
    for k in 0..count {
        let t = period * k as f64 / count as f64;
        s.advance_to(t)?;
        samples.push(CycleSample {
            phase: 2.0 * PI * k as f64 / count as f64,
            time: t,
            point: s.y().to_vec(),
            tangent: s.dy().to_vec(),
            normal: None,
        });
    }
    s.advance_to(period)?;
    let closure_gap = s.y().iter().zip(&anchor).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if closure_gap > cfg.closure_tol {
        return Err(Error::NoClosure { gap: closure_gap });
    }

    let clockwise = if n == 2 {
        let mut area = 0.0;
        for k in 0..count {
            let a = &samples[k].point;
            let b = &samples[(k + 1) % count].point;
            area += a[0] * b[1] - a[1] * b[0];
        }
        let cw = area < 0.0;
        for smp in &mut samples {
            let f = &smp.tangent;
            let len = f[0].hypot(f[1]);
            smp.normal = Some(if cw {
                vec![-f[1] / len, f[0] / len]
            } else {
                vec![f[1] / len, -f[0] / len]
            });
        }
        Some(cw)
    } else {
        None
    };

    let (_, monodromy) = prolonged_point(spec, &anchor, &Matrix::identity(n), period, &icfg)?;
    let eig = eigen(&monodromy)?;
    let (trivial_index, trivial) = eig
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, v)| (i, *v))
        .expect("non-empty spectrum");
    if (trivial - 1.0).norm() > cfg.multiplier_tol {
        return Err(Error::NoTrivialMultiplier { closest: trivial });
    }
    let mut pairs: Vec<(Complex64, Complex64)> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != trivial_index)
        .map(|(_, mu)| (*mu, mu.ln() / period))
        .collect();
    pairs.sort_by(|a, b| b.1.re.total_cmp(&a.1.re).then(b.1.im.total_cmp(&a.1.im)));

    Ok(LimitCycleModel {
        period,
        omega: 2.0 * PI / period,
        anchor,
        samples,
        monodromy,
        trivial_multiplier: trivial,
        multipliers: pairs.iter().map(|p| p.0).collect(),
        floquet_exponents: pairs.iter().map(|p| p.1).collect(),
        closure_gap,
        clockwise,
    })
}

fn refine_crossing<F>(
    spec: &SystemSpec,
    solver: &Solver<F>,
    section: &dyn Fn(&[f64]) -> f64,
    nu: &[f64],
    icfg: &IntegratorConfig,
) -> Result<Crossing>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = spec.dim();
    let (ta, ya, _) = solver.previous();
    let ya = ya.to_vec();
    let (mut lo, mut hi) = (ta, solver.t());
    let mut buf = vec![0.0; n];
    let mut iterations = 0;
    while iterations < 10 || (hi - lo > 1e-12 && iterations < 100) {
        let mid = 0.5 * (lo + hi);
        solver.interpolate(mid, &mut buf);
        if section(&buf) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut t = 0.5 * (lo + hi);
    let mut x = flow_point(spec, &ya, t - ta, icfg)?;
    for _ in 0..3 {
        let f = spec.eval_field(&x)?;
        let rate = dot(nu, &f);
        if rate.abs() < 1e-300 {
            break;
        }
        let dt = -section(&x) / rate;
        if dt.abs() < 1e-15 * t.abs().max(1.0) {
            break;
        }
        t += dt;
        x = flow_point(spec, &ya, t - ta, icfg)?;
    }
    Ok(Crossing { t, x })
}

/// Intersection of the cycle with the ray from the origin through `x`,
/// by bracketing the polar angle over the cycle samples and interpolating
/// linearly along the bracketing chord.
pub fn radial_projection(lc: &LimitCycleModel, x: &[f64]) -> Result<Vec<f64>> {
    if lc.dim() != 2 || x.len() != 2 {
        return Err(Error::Unsupported("radial projection is defined for planar cycles".into()));
    }
    let r = x[0].hypot(x[1]);
    if !(r > 1e-300) {
        return Err(Error::RadialProjection("point is at the origin".into()));
    }
    let e = [x[0] / r, x[1] / r];
    let cross = |a: &[f64], b: &[f64]| a[0] * b[1] - a[1] * b[0];
    let count = lc.samples.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..count {
        let p = &lc.samples[k].point;
        let q = &lc.samples[(k + 1) % count].point;
        let cp = cross(p, &e);
        let cq = cross(q, &e);
        if (cp > 0.0 && cq > 0.0) || (cp < 0.0 && cq < 0.0) {
            continue;
        }
        let d = [q[0] - p[0], q[1] - p[1]];
        let denom = cross(&d, &e);
        if denom == 0.0 {
            continue;
        }
        let s = (-cp / denom).clamp(0.0, 1.0);
        let y = vec![p[0] + s * d[0], p[1] + s * d[1]];
        let radius = y[0] * e[0] + y[1] * e[1];
        if radius > 0.0 && best.as_ref().is_none_or(|(b, _)| radius < *b) {
            best = Some((radius, y));
        }
    }
    best.map(|(_, y)| y)
        .ok_or_else(|| Error::RadialProjection(format!("the ray through {x:?} misses the cycle")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vdp() -> (SystemSpec, LimitCycleModel) {
        let spec = SystemSpec::builtin("vanderpol").unwrap();
        let lc = find_limit_cycle(&spec, &[2.0, 0.0], &CycleConfig::default()).unwrap();
        (spec, lc)
    }

    #[test]
    fn vanderpol_cycle_invariants() {
        let (spec, lc) = vdp();
        assert!((lc.period - 6.6633).abs() < 1e-3);
        assert!((lc.trivial_multiplier - 1.0).norm() < 1e-5);
        assert_eq!(lc.floquet_exponents.len(), 1);
        assert!(lc.floquet_exponents[0].re < 0.0);
        for s in &lc.samples {
            let xi = s.normal.as_ref().unwrap();
            assert!((norm(xi) - 1.0).abs() < 1e-14);
            assert!(dot(xi, &s.tangent).abs() < 1e-12 * norm(&s.tangent));
            // outward: away from the origin, which lies inside the cycle
            assert!(dot(xi, &s.point) > 0.0);
        }
        let f = spec.eval_field(&lc.anchor).unwrap();
        let mf = lc.monodromy.mul_vec(&f);
        let angle = crate::linalg::angle_between(&mf, &f);
        assert!(angle < 1e-5);
    }

    #[test]
    fn projection_fixes_cycle_and_scales() {
        let (_, lc) = vdp();
        for k in (0..lc.samples.len()).step_by(97) {
            let p = lc.point_at_time(lc.samples[k].time + 0.37 * lc.period / lc.samples.len() as f64);
            let y = radial_projection(&lc, &p).unwrap();
            assert!(norm(&[y[0] - p[0], y[1] - p[1]]) < 1e-3);
            let y2 = radial_projection(&lc, &[2.0 * p[0], 2.0 * p[1]]).unwrap();
            assert!(norm(&[y2[0] - p[0], y2[1] - p[1]]) < 1e-3);
        }
        let y = radial_projection(&lc, &[0.1, 0.0]).unwrap();
        assert!(y[1].abs() < 1e-3 && y[0] > 1.9);
        assert!(radial_projection(&lc, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn node_is_not_oscillating() {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        assert!(matches!(
            find_limit_cycle(&spec, &[1.0, 1.0], &CycleConfig::default()),
            Err(Error::NotOscillating)
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let spec = SystemSpec::builtin("vanderpol").unwrap();
        let cfg = CycleConfig {
            samples: 100,
            ..Default::default()
        };
        assert!(matches!(find_limit_cycle(&spec, &[2.0, 0.0], &cfg), Err(Error::Config(_))));
    }
}
