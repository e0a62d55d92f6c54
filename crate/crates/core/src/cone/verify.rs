use std::fmt;
use std::io::Write;

use super::ConeField;
use crate::error::{Error, Result};
use crate::flow::{check_state, prolonged_rhs, IntegratorConfig, Solver};
use crate::grid::Exec;
use crate::linalg::Matrix;
use crate::vectorfield::SystemSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub ray_count: usize,
    pub horizons: Vec<f64>,
    /// Margins above `-slack` count as inside.
    pub slack: f64,
    /// Horizon at which the strictness margin is measured.
    pub strict_t: f64,
    pub eps_min: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Cap on the counterexamples kept per point.
    pub max_counterexamples: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            ray_count: 16,
            horizons: vec![0.5, 1.0, 2.0],
            slack: 1e-6,
            strict_t: 2.0,
            eps_min: 1e-3,
            seed: 0,
            integrator: IntegratorConfig::default().with_tolerances(1e-12, 1e-11),
            max_counterexamples: 4,
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.ray_count < 2 {
            return bad("at least two rays per point are needed");
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("horizons must be positive and finite");
        }
        if !(self.slack >= 0.0) || !(self.eps_min >= 0.0) {
            return bad("slack and eps_min must be non-negative");
        }
        if !(self.strict_t.is_finite() && self.strict_t > 0.0) {
            return bad("strictness horizon must be positive");
        }
        self.integrator.validate()
    }

    fn times(&self) -> Vec<f64> {
        let mut t = self.horizons.clone();
        t.push(self.strict_t);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub ray: Vec<f64>,
    pub t: f64,
    pub margin: f64,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x={:?} dx={:?} t={} margin={:e}",
            self.x, self.ray, self.t, self.margin
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub x: Vec<f64>,
    /// Smallest unit margin over rays and horizons.
    pub worst_margin: f64,
    /// Smallest unit margin over rays at the strictness horizon.
    pub strict_margin: f64,
    pub counterexamples: Vec<Counterexample>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    StrictlyPositive,
    Positive,
    Counterexamples,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::StrictlyPositive => 0,
            Verdict::Positive => 1,
            Verdict::Counterexamples => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::StrictlyPositive => "strictly positive",
            Verdict::Positive => "positive",
            Verdict::Counterexamples => "counterexamples found",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub grid: String,
    pub field: String,
    pub settings: VerifySettings,
    pub points: Vec<PointResult>,
    pub resolved: usize,
    pub skipped: usize,
    pub worst_margin: f64,
    pub strictness: f64,
    pub counterexamples: Vec<Counterexample>,
    pub verdict: Verdict,
}

impl PositivityReport {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let s = &self.settings;
        writeln!(w, "positivity report")?;
        writeln!(w, "field: {}", self.field)?;
        writeln!(w, "grid: {}", self.grid)?;
        writeln!(w, "rays per point: {}", s.ray_count)?;
        let hs: Vec<String> = s.horizons.iter().map(|h| h.to_string()).collect();
        writeln!(w, "horizons: {}", hs.join(", "))?;
        writeln!(w, "strictness horizon: {}", s.strict_t)?;
        writeln!(w, "slack: {:e}", s.slack)?;
        writeln!(w, "eps_min: {:e}", s.eps_min)?;
        writeln!(w, "resolved points: {}", self.resolved)?;
        writeln!(w, "skipped points: {}", self.skipped)?;
        for p in self.points.iter().filter(|p| p.skipped.is_some()).take(20) {
            writeln!(w, "  skipped x={:?}: {}", p.x, p.skipped.as_deref().unwrap_or(""))?;
        }
        writeln!(w, "worst invariance margin: {:e}", self.worst_margin)?;
        writeln!(w, "strictness margin: {:e}", self.strictness)?;
        writeln!(w, "counterexamples: {}", self.counterexamples.len())?;
        for c in self.counterexamples.iter().take(50) {
            writeln!(w, "  {c}")?;
        }
        writeln!(w, "verdict: {}", self.verdict.label())?;
        writeln!(
            w,
            "note: numerical certification on sampled rays and grid points, not a proof"
        )
    }
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn check_point(
    spec: &SystemSpec,
    field: &dyn ConeField,
    x: &[f64],
    index: usize,
    s: &VerifySettings,
    times: &[f64],
) -> Result<PointResult> {
    check_state(spec, x)?;
    let n = spec.dim();
    let cone = field.cone_at(x)?;
    let rays = cone.sample_rays(s.ray_count, point_seed(s.seed, index))?;
    let k = rays.len();
    let mut frame = Matrix::zeros(n, k);
    for (j, r) in rays.iter().enumerate() {
        for i in 0..n {
            frame[(i, j)] = r[i];
        }
    }
    let mut y0 = x.to_vec();
    y0.extend_from_slice(frame.as_slice());
    let total = y0.len();
    let mut solver = Solver::new(prolonged_rhs(spec, k), 0.0, y0, true, s.integrator, total, n)?;
    let mut result = PointResult {
        x: x.to_vec(),
        worst_margin: f64::INFINITY,
        strict_margin: f64::INFINITY,
        counterexamples: Vec::new(),
        skipped: None,
    };
    let mut v = vec![0.0; n];
    for &t in times {
        solver.advance_to(t)?;
        let y = solver.y();
        let target = field.cone_at(&y[..n])?;
        for (j, ray) in rays.iter().enumerate() {
            for i in 0..n {
                v[i] = y[n + i * k + j];
            }
            let m = target.margin(&v);
            if s.horizons.contains(&t) || t == s.strict_t {
                result.worst_margin = result.worst_margin.min(m);
            }
            if t == s.strict_t {
                result.strict_margin = result.strict_margin.min(m);
            }
            if m < -s.slack && result.counterexamples.len() < s.max_counterexamples {
                result.counterexamples.push(Counterexample {
                    x: x.to_vec(),
                    ray: ray.clone(),
                    t,
                    margin: m,
                });
            }
        }
    }
    Ok(result)
}

/// Propagates sampled rays of `K(x)` for every point and compares them
/// with the cone at the image point.
pub fn verify_positivity(
    spec: &SystemSpec,
    field: &dyn ConeField,
    points: &[Vec<f64>],
    grid: &str,
    settings: &VerifySettings,
    exec: Exec,
) -> Result<PositivityReport> {
    settings.validate()?;
    if field.dim() != spec.dim() {
        return Err(Error::StateLength {
            expected: spec.dim(),
            found: field.dim(),
        });
    }
    let times = settings.times();
    let results = exec.map(points, |i, x| {
        check_point(spec, field, x, i, settings, &times).unwrap_or_else(|e| PointResult {
            x: x.clone(),
            worst_margin: f64::NAN,
            strict_margin: f64::NAN,
            counterexamples: Vec::new(),
            skipped: Some(e.to_string()),
        })
    });
    let resolved: Vec<&PointResult> = results.iter().filter(|p| p.skipped.is_none()).collect();
    if resolved.is_empty() {
        return Err(Error::Config(format!(
            "no grid point could be resolved ({} skipped)",
            results.len()
        )));
    }
    let worst_margin = resolved.iter().map(|p| p.worst_margin).fold(f64::INFINITY, f64::min);
    let strictness = resolved.iter().map(|p| p.strict_margin).fold(f64::INFINITY, f64::min);
    let counterexamples: Vec<Counterexample> = resolved.iter().flat_map(|p| p.counterexamples.clone()).collect();
    let verdict = if !counterexamples.is_empty() || worst_margin < -settings.slack {
        Verdict::Counterexamples
    } else if strictness >= settings.eps_min {
        Verdict::StrictlyPositive
    } else {
        Verdict::Positive
    };
    Ok(PositivityReport {
        grid: grid.to_string(),
        field: field.describe(),
        settings: settings.clone(),
        resolved: resolved.len(),
        skipped: results.len() - resolved.len(),
        worst_margin,
        strictness,
        counterexamples,
        verdict,
        points: results,
    })
}

/// Strictness margin at horizon `t`: the minimum unit margin of the
/// propagated rays, over all resolved points.
pub fn verify_strictness(
    spec: &SystemSpec,
    field: &dyn ConeField,
    points: &[Vec<f64>],
    settings: &VerifySettings,
    exec: Exec,
) -> Result<f64> {
    let s = VerifySettings {
        horizons: vec![settings.strict_t],
        ..settings.clone()
    };
    Ok(verify_positivity(spec, field, points, "", &s, exec)?.strictness)
}
