//! The Perron-Frobenius vector field `w(x)`: the unit direction annihilated by
//! every subordinate eigenfunction differential, oriented into the cone.

use std::io::Write;

use num_complex::Complex64;

use crate::cone::ConeField;
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::flow::{check_state, flow_point, prolonged_point, IntegratorConfig};
use crate::grid::Exec;
use crate::koopman::EigenpairSet;
use crate::linalg::{angle_between, cdot, cnorm, norm, svd, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PfVector {
    pub x: Vec<f64>,
    /// Unit vector inside the cone.
    pub w: Vec<f64>,
    /// Cone margin of `w`.
    pub margin: f64,
    /// `|ds_j . w| / |ds_j|` for each subordinate row.
    pub residuals: Vec<f64>,
}

/// Null-space direction of the subordinate rows at `x`.
pub fn pf_vector(field: &dyn ConeField, x: &[f64]) -> Result<PfVector> {
    let cone = field.cone_at(x)?;
    let n = cone.dim();
    let w = if cone.subordinate.is_empty() {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    } else {
        let mut rows = Vec::with_capacity(2 * cone.subordinate.len());
        for s in &cone.subordinate {
            rows.push(s.iter().map(|c| c.re).collect::<Vec<f64>>());
            rows.push(s.iter().map(|c| c.im).collect());
        }
        let (sv, v) = svd(&Matrix::from_rows(&rows));
        let max = sv[0];
        let min = sv[n - 1];
        let next = if n >= 2 { sv[n - 2] } else { max };
        if !(max > 0.0) || !(min < 1e-6 * max) || !(next > 1e-3 * max) {
            return Err(Error::NullSpace {
                x: x.to_vec(),
                singular_values: sv,
            });
        }
        v[n - 1].clone()
    };
    let flipped: Vec<f64> = w.iter().map(|c| -c).collect();
    let (mp, mn) = (cone.margin(&w), cone.margin(&flipped));
    let (w, margin) = if mp >= mn { (w, mp) } else { (flipped, mn) };
    if !(margin > 0.0) {
        return Err(Error::PfOutsideCone { x: x.to_vec() });
    }
    let residuals = cone
        .subordinate
        .iter()
        .map(|s| cdot(s, &w).norm() / cnorm(s).max(f64::MIN_POSITIVE))
        .collect();
    Ok(PfVector {
        x: x.to_vec(),
        w,
        margin,
        residuals,
    })
}

/// `pf_vector` over many points; failures are kept per point.
pub fn pf_field(field: &dyn ConeField, points: &[Vec<f64>], exec: Exec) -> Vec<Result<PfVector>> {
    exec.map(points, |_, x| pf_vector(field, x))
}

/// CSV `x1..xn,w1..wn,margin,res_2..res_n`; unresolved points are omitted.
pub fn write_pf_csv<W: Write>(field: &dyn ConeField, vectors: &[Result<PfVector>], mut w: W) -> Result<usize> {
    let n = field.dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.push("margin".into());
    header.extend((2..=n).map(|j| format!("res_{j}")));
    let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut written = 0;
    for v in vectors.iter().flatten() {
        let mut row: Vec<String> = v.x.iter().chain(&v.w).map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(v.margin));
        row.extend(v.residuals.iter().map(|r| fmt_f64(*r)));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
        written += 1;
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuity {
    /// Neighbouring pairs compared.
    pub pairs: usize,
    pub max_angle: f64,
    /// Pairs whose directions differ by more than the threshold.
    pub steep: Vec<(Vec<f64>, Vec<f64>)>,
    /// Pairs more than a right angle apart, i.e. orientation flips.
    pub reversals: usize,
}

/// Compares `w` at points closer than `spacing` (grid neighbours) and
/// flags pairs whose angle exceeds `threshold`. Smooth rotation of the
/// field also trips the threshold on coarse grids; only `reversals` are
/// unambiguous.
pub fn pf_continuity(vectors: &[PfVector], spacing: f64, threshold: f64) -> Continuity {
    let mut out = Continuity {
        pairs: 0,
        max_angle: 0.0,
        steep: Vec::new(),
        reversals: 0,
    };
    let reach = spacing * (1.0 + 1e-9);
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            let d: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect();
            if norm(&d) > reach {
                continue;
            }
            out.pairs += 1;
            let angle = angle_between(&a.w, &b.w);
            out.max_angle = out.max_angle.max(angle);
            if angle > threshold {
                out.steep.push((a.x.clone(), b.x.clone()));
            }
            if angle > std::f64::consts::FRAC_PI_2 {
                out.reversals += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfLimit {
    /// `psi^{-t}(x)`.
    pub origin: Vec<f64>,
    pub seed: Vec<f64>,
    /// Angle between the propagated seed and `w(x)`.
    pub angle: f64,
    /// Angle between `w(psi^t x)` and the propagated `w(x)`, when the
    /// forward point is resolved.
    pub invariance: Option<f64>,
}

/// Pulls `x` back by `t`, pushes a cone tangent forward along the prolonged
/// flow and measures how far it lands from `w(x)`.
///
/// Without a seed, the midpoint of `w` and one boundary ray of the cone at
/// the pulled back point is used.
pub fn pf_limit_check(
    spec: &crate::SystemSpec,
    field: &dyn ConeField,
    x: &[f64],
    t: f64,
    seed: Option<&[f64]>,
    cfg: &IntegratorConfig,
) -> Result<PfLimit> {
    check_state(spec, x)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Config("limit horizon must be non-negative".into()));
    }
    let n = spec.dim();
    let target = pf_vector(field, x)?;
    let origin = flow_point(spec, x, -t, cfg)?;
    let cone = field.cone_at(&origin)?;
    let seed = match seed {
        Some(s) => {
            if s.len() != n {
                return Err(Error::StateLength {
                    expected: n,
                    found: s.len(),
                });
            }
            if !(cone.margin(s) > 0.0) {
                return Err(Error::SeedOutsideCone { x: origin });
            }
            s.to_vec()
        }
        None => {
            let wb = pf_vector(field, &origin)?.w;
            let ray = &cone.sample_rays(2, 0)?[0];
            let mid: Vec<f64> = wb.iter().zip(ray).map(|(a, b)| 0.5 * (a + b)).collect();
            let l = norm(&mid);
            mid.iter().map(|v| v / l).collect()
        }
    };
    let (_, m) = prolonged_point(spec, &origin, &Matrix::from_row_slice(n, 1, &seed), t, cfg)?;
    let angle = angle_between(&m.column(0), &target.w);
    let invariance = pf_invariance(spec, field, x, t, cfg).ok();
    Ok(PfLimit {
        origin,
        seed,
        angle,
        invariance,
    })
}

/// Angle between `w(psi^t x)` and `dpsi^t(x) w(x)`.
pub fn pf_invariance(
    spec: &crate::SystemSpec,
    field: &dyn ConeField,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let n = spec.dim();
    let w = pf_vector(field, x)?.w;
    let (y, m) = prolonged_point(spec, x, &Matrix::from_row_slice(n, 1, &w), t, cfg)?;
    Ok(angle_between(&m.column(0), &pf_vector(field, &y)?.w))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveStatus {
    Complete,
    /// The field could not be resolved past `s`.
    Stopped { s: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfCurve {
    pub s: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Subordinate eigenfunction values at every sample.
    pub phis: Vec<Vec<Complex64>>,
    pub status: CurveStatus,
}

impl PfCurve {
    /// Largest `|phi_j(gamma(s)) - phi_j(gamma(s0))| / (1 + |phi_j(gamma(s0))|)`.
    pub fn level_variation(&self) -> f64 {
        let Some(first) = self.phis.first() else {
            return 0.0;
        };
        self.phis
            .iter()
            .flat_map(|row| row.iter().zip(first).map(|(p, q)| (p - q).norm() / (1.0 + q.norm())))
            .fold(0.0, f64::max)
    }

    /// CSV `s,x1..xn,phi_2_re,phi_2_im,..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.points.first().map_or(0, Vec::len);
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        for j in 2..=n {
            header.push(format!("phi_{j}_re"));
            header.push(format!("phi_{j}_im"));
        }
        writeln!(w, "{}", header.join(","))?;
        for ((s, x), phis) in self.s.iter().zip(&self.points).zip(&self.phis) {
            let mut row = vec![fmt_f64(*s)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            for p in phis {
                row.push(fmt_f64(p.re));
                row.push(fmt_f64(p.im));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// RK4 integral curve of `w` over `s_span` with arc-length step `step`.
pub fn pf_curve(set: &EigenpairSet, x0: &[f64], s_span: (f64, f64), step: f64) -> Result<PfCurve> {
    check_state(set.spec(), x0)?;
    if !(step.is_finite() && step > 0.0) || !(s_span.0.is_finite() && s_span.1.is_finite()) {
        return Err(Error::Config("curve step must be positive and the span finite".into()));
    }
    let subordinate = |x: &[f64]| -> Result<Vec<Complex64>> {
        Ok(set.evaluate(x)?[1..].iter().map(|v| v.phi).collect())
    };
    let w = |x: &[f64]| -> Result<Vec<f64>> { Ok(pf_vector(set, x)?.w) };
    let (s0, s1) = s_span;
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    let mut curve = PfCurve {
        s: vec![s0],
        points: vec![x0.to_vec()],
        phis: vec![subordinate(x0)?],
        status: CurveStatus::Complete,
    };
    w(x0)?;
    let mut s = s0;
    let mut x = x0.to_vec();
    while (s1 - s) * dir > 1e-12 * step {
        let h = dir * step.min((s1 - s).abs());
        let next = rk4_step(&w, &x, h).and_then(|y| subordinate(&y).map(|p| (y, p)));
        match next {
            Ok((y, p)) => {
                s += h;
                x = y;
                curve.s.push(s);
                curve.points.push(x.clone());
                curve.phis.push(p);
            }
            Err(e) => {
                curve.status = CurveStatus::Stopped {
                    s,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    Ok(curve)
}

fn rk4_step(w: &dyn Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let shift = |k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k1 = w(x)?;
    let k2 = w(&shift(&k1, 0.5 * h))?;
    let k3 = w(&shift(&k2, 0.5 * h))?;
    let k4 = w(&shift(&k3, h))?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// `|phi_1|`: isostables of a fixed point.
    DominantMagnitude,
    /// `arg phi_1`: isochrons of a cycle.
    DominantAngle,
    /// `phi_j`, counted from 1.
    Subordinate(usize),
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dominant-magnitude" => Ok(Level::DominantMagnitude),
            "dominant-angle" => Ok(Level::DominantAngle),
            other => other
                .strip_prefix("subordinate-")
                .and_then(|j| j.parse().ok())
                .filter(|j| *j >= 2)
                .map(Level::Subordinate)
                .ok_or_else(|| Error::Config(format!("unknown level field `{other}`"))),
        }
    }
}

/// Level-set samples; `None` marks points where the eigenfunctions are
/// unresolved.
pub fn level_grid(set: &EigenpairSet, points: &[Vec<f64>], which: Level, exec: Exec) -> Result<Vec<Option<Complex64>>> {
    if let Level::Subordinate(j) = which {
        if j < 2 || j > set.dim() {
            return Err(Error::Config(format!("no subordinate eigenfunction {j}")));
        }
    }
    Ok(exec.map(points, |_, x| {
        let v = set.evaluate(x).ok()?;
        Some(match which {
            Level::DominantMagnitude => Complex64::new(v[0].phi.norm(), 0.0),
            Level::DominantAngle => Complex64::new(v[0].phi.arg(), 0.0),
            Level::Subordinate(j) => v[j - 1].phi,
        })
    }))
}

/// CSV `x1..xn,re,im`; missing samples are written as `NaN`.
pub fn write_level_csv<W: Write>(points: &[Vec<f64>], values: &[Option<Complex64>], mut w: W) -> std::io::Result<()> {
    let n = points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("re".into());
    header.push("im".into());
    writeln!(w, "{}", header.join(","))?;
    for (x, v) in points.iter().zip(values) {
        let v = v.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        let mut row: Vec<String> = x.iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(v.re));
        row.push(fmt_f64(v.im));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
