use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::{flow_point, hermite, IntegratorConfig, LimitCycleModel};
use crate::vectorfield::SystemSpec;

/// A complex observable `g` together with its differential.
///
/// The prolonged observable is `g~(x, dx) = covector(x) . dx`, which is
/// linear in `dx` by construction.
pub trait Observable: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<Complex64>;
    fn covector(&self, x: &[f64]) -> Result<Vec<Complex64>>;
    fn describe(&self) -> String;

    fn prolonged(&self, x: &[f64], dx: &[f64]) -> Result<Complex64> {
        Ok(self
            .covector(x)?
            .iter()
            .zip(dx)
            .map(|(c, d)| c * d)
            .sum())
    }
}

/// `g(x) = c . (x - center)`.
#[derive(Debug, Clone)]
pub struct LinearObservable {
    pub coeffs: Vec<Complex64>,
    pub center: Vec<f64>,
}

impl LinearObservable {
    pub fn new(coeffs: Vec<Complex64>, center: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), center.len());
        LinearObservable { coeffs, center }
    }

    /// The `i`-th coordinate, `g(x) = x_i`.
    pub fn coordinate(i: usize, n: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        coeffs[i] = Complex64::new(1.0, 0.0);
        LinearObservable::new(coeffs, vec![0.0; n])
    }
}

impl Observable for LinearObservable {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> Result<Complex64> {
        Ok(self
            .coeffs
            .iter()
            .zip(x.iter().zip(&self.center))
            .map(|(c, (a, b))| c * (a - b))
            .sum())
    }

    fn covector(&self, _x: &[f64]) -> Result<Vec<Complex64>> {
        Ok(self.coeffs.clone())
    }

    fn describe(&self) -> String {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(i, c)| {
                if c.im == 0.0 {
                    format!("{}*(x{}-{})", c.re, i + 1, self.center[i])
                } else {
                    format!("({}{:+}i)*(x{}-{})", c.re, c.im, i + 1, self.center[i])
                }
            })
            .collect();
        if terms.is_empty() {
            "0".into()
        } else {
            terms.join(" + ")
        }
    }
}

/// Smooth polar model `r = R(alpha)` of a planar cycle that winds once
/// around the origin, as a truncated Fourier series.
#[derive(Debug, Clone)]
pub struct PolarCycle {
    a0: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PolarCycle {
    /// Fits the series on `nodes` uniform polar angles. Each node radius is
    /// bracketed on the Hermite interpolant of the cycle samples, then
    /// polished by Newton's method on the exact flow.
    pub fn fit(spec: &SystemSpec, lc: &LimitCycleModel, nodes: usize) -> Result<Self> {
        if lc.dim() != 2 {
            return Err(Error::Unsupported("polar cycle model needs a planar cycle".into()));
        }
        let radii: Vec<f64> = (0..nodes)
            .map(|m| ray_radius(spec, lc, 2.0 * PI * m as f64 / nodes as f64))
            .collect::<Result<_>>()?;
        let m = nodes as f64;
        let half = nodes / 2;
        let a0 = radii.iter().sum::<f64>() / m;
        let mut cos = Vec::with_capacity(half);
        let mut sin = Vec::with_capacity(half);
        for k in 1..half {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, r) in radii.iter().enumerate() {
                let ang = 2.0 * PI * (k * j) as f64 / m;
                a += r * ang.cos();
                b += r * ang.sin();
            }
            cos.push(2.0 * a / m);
            sin.push(2.0 * b / m);
        }
        // drop the tail once coefficients are at rounding level
        let floor = 1e-15 * a0.abs();
        let keep = (0..cos.len())
            .rev()
            .find(|&k| cos[k].abs().max(sin[k].abs()) > floor)
            .map_or(0, |k| k + 1);
        cos.truncate(keep);
        sin.truncate(keep);
        Ok(PolarCycle { a0, cos, sin })
    }

    pub fn modes(&self) -> usize {
        self.cos.len()
    }

    /// `(R, R', R'')` at polar angle `alpha`.
    pub fn radius(&self, alpha: f64) -> (f64, f64, f64) {
        let (s1, c1) = alpha.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        let (mut r, mut dr, mut ddr) = (self.a0, 0.0, 0.0);
        for k in 0..self.cos.len() {
            let (sn, cn) = (s * c1 + c * s1, c * c1 - s * s1);
            s = sn;
            c = cn;
            let kf = (k + 1) as f64;
            let (a, b) = (self.cos[k], self.sin[k]);
            r += a * c + b * s;
            dr += kf * (b * c - a * s);
            ddr -= kf * kf * (a * c + b * s);
        }
        (r, dr, ddr)
    }

    pub fn point(&self, alpha: f64) -> [f64; 2] {
        let (r, _, _) = self.radius(alpha);
        [r * alpha.cos(), r * alpha.sin()]
    }
}

/// Radius where the ray at angle `alpha` meets the cycle.
fn ray_radius(spec: &SystemSpec, lc: &LimitCycleModel, alpha: f64) -> Result<f64> {
    let e = [alpha.cos(), alpha.sin()];
    let cross = |p: &[f64]| p[0] * e[1] - p[1] * e[0];
    let count = lc.samples.len();
    let dt = lc.period / count as f64;
    // (radius, sample index, time offset from that sample)
    let mut best: Option<(f64, usize, f64)> = None;
    let mut buf = [0.0; 2];
    for k in 0..count {
        let a = &lc.samples[k];
        let b = &lc.samples[(k + 1) % count];
        let (ca, cb) = (cross(&a.point), cross(&b.point));
        if (ca > 0.0 && cb > 0.0) || (ca < 0.0 && cb < 0.0) {
            continue;
        }
        if a.point[0] * e[0] + a.point[1] * e[1] <= 0.0 {
            continue;
        }
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let eval = |t: f64, out: &mut [f64; 2]| {
            hermite(t0, &a.point, &a.tangent, t1, &b.point, &b.tangent, t, out);
        };
        let (mut lo, mut hi) = (t0, t1);
        let lo_sign = ca.signum();
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            eval(mid, &mut buf);
            let c = cross(&buf);
            if c == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if c.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        eval(t, &mut buf);
        let r = buf[0] * e[0] + buf[1] * e[1];
        if r > 0.0 && best.is_none_or(|b| r < b.0) {
            best = Some((r, k, t - t0));
        }
    }
    let (r, k, mut tau) =
        best.ok_or_else(|| Error::RadialProjection(format!("the ray at angle {alpha} misses the cycle")))?;
    let start = &lc.samples[k].point;
    let cfg = IntegratorConfig::default().with_tolerances(1e-16, 1e-14);
    let mut radius = r;
    for _ in 0..8 {
        let p = flow_point(spec, start, tau, &cfg)?;
        let f = spec.eval_field(&p)?;
        radius = p[0] * e[0] + p[1] * e[1];
        let slope = cross(&f);
        if slope == 0.0 {
            break;
        }
        let step = cross(&p) / slope;
        tau -= step;
        if step.abs() <= 1e-15 * dt {
            break;
        }
    }
    Ok(radius)
}

/// Signed distance-like observable `g(x) = xi(alpha)^T (x - rho(alpha))`,
/// where `alpha` is the polar angle of `x`, `rho` the polar cycle model and
/// `xi` its outward unit normal. Its covector is the exact differential.
#[derive(Debug, Clone)]
pub struct TransverseObservable {
    model: PolarCycle,
}

impl TransverseObservable {
    pub fn new(model: PolarCycle) -> Self {
        TransverseObservable { model }
    }

    pub fn model(&self) -> &PolarCycle {
        &self.model
    }

    fn frame(&self, x: &[f64]) -> Result<Frame> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if !(r2 > 1e-24) {
            return Err(Error::RadialProjection("point is at the origin".into()));
        }
        let alpha = x[1].atan2(x[0]);
        let (s, c) = alpha.sin_cos();
        let (r, dr, ddr) = self.model.radius(alpha);
        let rho = [r * c, r * s];
        // rho' = R' e + R e_perp, rho'' = (R'' - R) e + 2 R' e_perp
        let d1 = [dr * c - r * s, dr * s + r * c];
        let d2 = [(ddr - r) * c - 2.0 * dr * s, (ddr - r) * s + 2.0 * dr * c];
        let len = d1[0].hypot(d1[1]);
        let xi = [d1[1] / len, -d1[0] / len];
        let proj = (d1[0] * d2[0] + d1[1] * d2[1]) / (len * len * len);
        let dxi = [d2[1] / len - d1[1] * proj, -d2[0] / len + d1[0] * proj];
        let grad_alpha = [-x[1] / r2, x[0] / r2];
        Ok(Frame {
            rho,
            xi,
            dxi,
            grad_alpha,
        })
    }
}

struct Frame {
    rho: [f64; 2],
    xi: [f64; 2],
    dxi: [f64; 2],
    grad_alpha: [f64; 2],
}

impl Observable for TransverseObservable {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> Result<Complex64> {
        let fr = self.frame(x)?;
        let v = fr.xi[0] * (x[0] - fr.rho[0]) + fr.xi[1] * (x[1] - fr.rho[1]);
        Ok(Complex64::new(v, 0.0))
    }

    fn covector(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let fr = self.frame(x)?;
        let k = (x[0] - fr.rho[0]) * fr.dxi[0] + (x[1] - fr.rho[1]) * fr.dxi[1];
        Ok((0..2)
            .map(|i| Complex64::new(fr.xi[i] + k * fr.grad_alpha[i], 0.0))
            .collect())
    }

    fn describe(&self) -> String {
        format!(
            "xi(alpha)^T (x - rho(alpha)) with a {}-mode polar cycle model",
            self.model.modes()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_observable_is_linear_in_dx() {
        let g = LinearObservable::new(
            vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)],
            vec![0.3, 0.1],
        );
        let x = [1.0, 2.0];
        let dx = [0.7, -0.2];
        let a = g.prolonged(&x, &dx).unwrap();
        let b = g.prolonged(&x, &[2.0 * dx[0], 2.0 * dx[1]]).unwrap();
        assert!((b - 2.0 * a).norm() < 1e-15);
        assert!((g.value(&[0.3, 0.1]).unwrap()).norm() == 0.0);
    }

    #[test]
    fn circle_model_is_exact() {
        let model = PolarCycle {
            a0: 1.0,
            cos: vec![],
            sin: vec![],
        };
        let g = TransverseObservable::new(model);
        let x = [1.5, -2.0];
        assert!((g.value(&x).unwrap().re - 1.5).abs() < 1e-14);
        let row = g.covector(&x).unwrap();
        assert!((row[0].re - 0.6).abs() < 1e-14 && (row[1].re + 0.8).abs() < 1e-14);
    }

    #[test]
    fn covector_matches_finite_differences() {
        let model = PolarCycle {
            a0: 2.0,
            cos: vec![0.1, 0.05, 0.0],
            sin: vec![0.2, 0.0, -0.03],
        };
        let g = TransverseObservable::new(model);
        for x in [[1.3, 0.4], [-0.7, 2.2], [0.2, -1.9], [-2.5, -0.1]] {
            let row = g.covector(&x).unwrap();
            for i in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (g.value(&xp).unwrap().re - g.value(&xm).unwrap().re) / (2.0 * h);
                assert!((fd - row[i].re).abs() < 1e-7, "{x:?} {i}: {fd} vs {}", row[i].re);
            }
        }
    }
}
