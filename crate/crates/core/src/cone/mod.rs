//! Cone fields `K(x) = { dx : d(x).dx >= |s_j(x).dx| }` built from eigenfunction
//! differentials, and their invariance under the prolonged flow.

mod table;
mod verify;

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub use table::TabulatedCones;
pub use verify::{
    verify_positivity, verify_strictness, Counterexample, PointResult, PositivityReport, Verdict,
    VerifySettings,
};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::grid::Exec;
use crate::koopman::EigenpairSet;
use crate::linalg::{dot, norm, svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeMode {
    /// Dominant row `Re dphi_1` of a real dominant eigenfunction.
    RealDominant,
    /// Dominant row `d angle(phi_1)` of a cycle phase.
    AngleDominant,
    /// Rows read from a table.
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSample {
    pub x: Vec<f64>,
    pub mode: ConeMode,
    pub dominant: Vec<f64>,
    pub subordinate: Vec<Vec<Complex64>>,
}

impl ConeSample {
    pub fn new(x: Vec<f64>, mode: ConeMode, dominant: Vec<f64>, subordinate: Vec<Vec<Complex64>>) -> Self {
        ConeSample {
            x,
            mode,
            dominant,
            subordinate,
        }
    }

    pub fn dim(&self) -> usize {
        self.dominant.len()
    }

    /// `min_j k_j(u)` on the unit tangent `u = dx / |dx|`; the apex has margin 0.
    pub fn margin(&self, dx: &[f64]) -> f64 {
        let len = norm(dx);
        if len == 0.0 {
            return 0.0;
        }
        let d = dot(&self.dominant, dx) / len;
        self.subordinate
            .iter()
            .map(|s| d - s.iter().zip(dx).map(|(a, b)| a * b).sum::<Complex64>().norm() / len)
            .fold(d, f64::min)
    }

    pub fn membership(&self, dx: &[f64]) -> (bool, f64) {
        let m = self.margin(dx);
        (m >= 0.0, m)
    }

    /// Real stack `[d; Re s_2; Im s_2; ...]`.
    pub fn stack(&self) -> Matrix {
        let mut rows = vec![self.dominant.clone()];
        for s in &self.subordinate {
            rows.push(s.iter().map(|c| c.re).collect());
            rows.push(s.iter().map(|c| c.im).collect());
        }
        Matrix::from_rows(&rows)
    }

    /// Condition number of the real stack (infinite when rank deficient).
    pub fn condition(&self) -> f64 {
        let (s, _) = svd(&self.stack());
        let min = s[s.len() - 1];
        if min == 0.0 {
            f64::INFINITY
        } else {
            s[0] / min
        }
    }

    /// The planar boundary rays as polar angles `(lo, hi)`: the cone is the
    /// counterclockwise arc from `lo` to `hi`.
    pub fn boundary_angles(&self) -> Result<(f64, f64)> {
        if self.dim() != 2 || self.subordinate.len() != 1 {
            return Err(Error::Unsupported("exact boundary rays need a planar cone".into()));
        }
        let d = &self.dominant;
        let a: Vec<f64> = self.subordinate[0].iter().map(|c| c.re).collect();
        let b: Vec<f64> = self.subordinate[0].iter().map(|c| c.im).collect();
        let q = |i: usize, j: usize| d[i] * d[j] - a[i] * a[j] - b[i] * b[j];
        let (q11, q22, q12) = (q(0, 0), q(1, 1), q(0, 1));
        let c = 0.5 * (q11 + q22);
        let aa = 0.5 * (q11 - q22);
        let bb = q12;
        let r = aa.hypot(bb);
        let degenerate = |msg: &str| Error::DegenerateCone {
            x: self.x.clone(),
            msg: msg.into(),
        };
        if r == 0.0 || (c / r).abs() >= 1.0 {
            return Err(degenerate("the boundary quadratic form has no isotropic directions"));
        }
        let delta = bb.atan2(aa);
        let spread = (-c / r).acos();
        let mut rays = Vec::with_capacity(2);
        for two_beta in [delta + spread, delta - spread] {
            let beta = 0.5 * two_beta;
            let mut u = [beta.cos(), beta.sin()];
            if d[0] * u[0] + d[1] * u[1] < 0.0 {
                u = [-u[0], -u[1]];
            }
            rays.push(u[1].atan2(u[0]));
        }
        let (mut lo, mut hi) = (rays[0], rays[1]);
        let ccw = |from: f64, to: f64| (to - from).rem_euclid(2.0 * PI);
        let mid = lo + 0.5 * ccw(lo, hi);
        if self.margin(&[mid.cos(), mid.sin()]) < 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }
        if ccw(lo, hi) >= PI {
            return Err(degenerate("the cone is not pointed"));
        }
        Ok((lo, hi))
    }

    /// A direction of maximal sampled margin, used as the interior anchor
    /// for non-planar ray sampling.
    fn interior_direction(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut consider = |u: Vec<f64>| {
            let m = self.margin(&u);
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, u));
            }
        };
        consider(self.dominant.clone());
        for _ in 0..2000 {
            consider(random_unit(n, rng));
        }
        best.filter(|b| b.0 > 0.0).map(|b| {
            let l = norm(&b.1);
            b.1.iter().map(|v| v / l).collect()
        })
    }

    /// `count` unit tangents of the cone: exact boundary rays plus an
    /// interior fan in the plane, seeded boundary/interior samples otherwise.
    pub fn sample_rays(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let count = count.max(2);
        if self.dim() == 2 && self.subordinate.len() == 1 {
            let (lo, hi) = self.boundary_angles()?;
            let width = (hi - lo).rem_euclid(2.0 * PI);
            return Ok((0..count)
                .map(|k| {
                    let a = lo + width * k as f64 / (count - 1) as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = self.interior_direction(&mut rng).ok_or_else(|| Error::DegenerateCone {
            x: self.x.clone(),
            msg: "no interior direction found".into(),
        })?;
        let n = self.dim();
        let mut rays = Vec::with_capacity(count);
        let boundary = count / 2;
        while rays.len() < count {
            let v = random_unit(n, &mut rng);
            let along = |s: f64| -> Vec<f64> {
                let u: Vec<f64> = center.iter().zip(&v).map(|(c, w)| c + s * w).collect();
                let l = norm(&u);
                u.iter().map(|x| x / l).collect()
            };
            // find the exit parameter where the active constraint reaches zero
            let mut hi = 1.0;
            while self.margin(&along(hi)) >= 0.0 && hi < 1e6 {
                hi *= 2.0;
            }
            if self.margin(&along(hi)) >= 0.0 {
                continue;
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.margin(&along(mid)) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = if rays.len() < boundary { lo } else { lo * rng.gen_range(0.0..1.0) };
            rays.push(along(s));
        }
        Ok(rays)
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l = norm(&v);
        if l > 1e-3 && l <= 1.0 {
            return v.iter().map(|x| x / l).collect();
        }
    }
}

/// Source of cones along trajectories.
pub trait ConeField: Sync {
    fn dim(&self) -> usize;
    fn cone_at(&self, x: &[f64]) -> Result<ConeSample>;
    fn describe(&self) -> String;
}

impl ConeField for EigenpairSet {
    fn dim(&self) -> usize {
        EigenpairSet::dim(self)
    }

    fn cone_at(&self, x: &[f64]) -> Result<ConeSample> {
        let values = self.evaluate(x)?;
        let (mode, dominant) = match &values[0].angle_gradient {
            Some(angle) => (ConeMode::AngleDominant, angle.clone()),
            None => {
                let row = &values[0].gradient;
                let re: Vec<f64> = row.iter().map(|c| c.re).collect();
                let im: Vec<f64> = row.iter().map(|c| c.im).collect();
                let ratio = norm(&im) / norm(&re).max(f64::MIN_POSITIVE);
                if ratio > 1e-6 {
                    return Err(Error::DominantNotReal { x: x.to_vec(), ratio });
                }
                (ConeMode::RealDominant, re)
            }
        };
        let cone = ConeSample::new(
            x.to_vec(),
            mode,
            dominant,
            values[1..].iter().map(|v| v.gradient.clone()).collect(),
        );
        let condition = cone.condition();
        if !(condition < 1e10) {
            return Err(Error::NotInjective {
                x: x.to_vec(),
                condition,
            });
        }
        // row errors of this relative size can turn the cone by its whole opening
        let accuracy = values.iter().map(|v| v.residual).fold(0.0, f64::max);
        if condition * accuracy >= 1.0 {
            return Err(Error::UnresolvedCone {
                x: x.to_vec(),
                condition,
                accuracy,
            });
        }
        Ok(cone)
    }

    fn describe(&self) -> String {
        let lambdas: Vec<String> = self.pairs().iter().map(|p| format!("{}", p.lambda)).collect();
        format!("Koopman cone field of {} (lambda = {})", self.spec().name(), lambdas.join(", "))
    }
}

pub fn cone_at(field: &dyn ConeField, x: &[f64]) -> Result<ConeSample> {
    field.cone_at(x)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxiomsReport {
    pub trials: usize,
    pub convexity_violations: usize,
    pub scaling_violations: usize,
    pub pointedness_violations: usize,
    pub solid: bool,
}

impl AxiomsReport {
    pub fn passed(&self) -> bool {
        self.convexity_violations == 0
            && self.scaling_violations == 0
            && self.pointedness_violations == 0
            && self.solid
    }
}

/// Randomized check of convexity, positive homogeneity, pointedness and solidity.
pub fn cone_axioms_check(cone: &ConeSample, trials: usize, seed: u64) -> AxiomsReport {
    const TOL: f64 = 1e-12;
    let n = cone.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomsReport {
        trials,
        ..Default::default()
    };
    let mut members: Vec<Vec<f64>> = Vec::new();
    for _ in 0..trials {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = cone.margin(&u);
        if m > 0.0 {
            report.solid = true;
        }
        if m >= 0.0 {
            members.push(u.clone());
            let c = rng.gen_range(1e-3..10.0);
            let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
            if cone.margin(&scaled) < -TOL {
                report.scaling_violations += 1;
            }
        }
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        if m >= -TOL && cone.margin(&neg) >= -TOL && norm(&u) >= 1e-8 {
            report.pointedness_violations += 1;
        }
    }
    if !members.is_empty() {
        for _ in 0..trials {
            let a = &members[rng.gen_range(0..members.len())];
            let b = &members[rng.gen_range(0..members.len())];
            let s: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + q).collect();
            if norm(&s) > 1e-12 && cone.margin(&s) < -TOL * (norm(a) + norm(b)) / norm(&s) {
                report.convexity_violations += 1;
            }
        }
    }
    // the least-determined direction of the stack is the natural candidate
    // for a line inside the cone
    let (_, v) = svd(&cone.stack());
    let u = &v[n - 1];
    let neg: Vec<f64> = u.iter().map(|c| -c).collect();
    if cone.margin(u) >= -TOL && cone.margin(&neg) >= -TOL {
        report.pointedness_violations += 1;
    }
    report
}

/// Global conal order test between two states.
///
/// Uses the sign convention of the displayed characterization
/// `phi_1(x2) - phi_1(x1) + |phi_j(x2) - phi_j(x1)| > 0` for every `j >= 2`,
/// with the phase difference wrapped to `(-pi, pi]` in the angle case.
pub fn conal_order(set: &EigenpairSet, x1: &[f64], x2: &[f64]) -> Result<bool> {
    let a = set.evaluate(x1)?;
    let b = set.evaluate(x2)?;
    let dominant = if set.angle_mode() {
        let d = b[0].phi.arg() - a[0].phi.arg();
        let w = d.rem_euclid(2.0 * PI);
        if w > PI {
            w - 2.0 * PI
        } else {
            w
        }
    } else {
        b[0].phi.re - a[0].phi.re
    };
    if a.len() == 1 {
        return Ok(dominant > 0.0);
    }
    Ok(a[1..]
        .iter()
        .zip(&b[1..])
        .all(|(p, q)| dominant + (q.phi - p.phi).norm() > 0.0))
}

/// Cone-grid CSV: `x1,x2,dom_1,dom_2,sub_re_1,sub_re_2,sub_im_1,sub_im_2,boundary_angle_lo,boundary_angle_hi`.
/// Unresolved points are omitted.
pub fn write_cone_grid<W: Write>(field: &dyn ConeField, points: &[Vec<f64>], exec: Exec, mut w: W) -> Result<usize> {
    if field.dim() != 2 {
        return Err(Error::Unsupported("cone-grid export is planar".into()));
    }
    let rows: Vec<Option<String>> = exec.map(points, |_, x| {
        let cone = field.cone_at(x).ok()?;
        let (lo, hi) = cone.boundary_angles().ok()?;
        let s = &cone.subordinate[0];
        let vals = [
            x[0], x[1], cone.dominant[0], cone.dominant[1], s[0].re, s[1].re, s[0].im, s[1].im, lo, hi,
        ];
        Some(vals.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","))
    });
    let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
    writeln!(
        w,
        "x1,x2,dom_1,dom_2,sub_re_1,sub_re_2,sub_im_1,sub_im_2,boundary_angle_lo,boundary_angle_hi"
    )
    .map_err(io)?;
    let mut written = 0;
    for r in rows.into_iter().flatten() {
        writeln!(w, "{r}").map_err(io)?;
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag() -> ConeSample {
        ConeSample::new(
            vec![0.0, 0.0],
            ConeMode::RealDominant,
            vec![1.0, 0.0],
            vec![vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]],
        )
    }

    #[test]
    fn diag_membership() {
        let c = diag();
        let (inside, m) = c.membership(&[1.0, 0.5]);
        assert!(inside);
        assert!((m - 0.5 / 1.25f64.sqrt()).abs() < 1e-15);
        assert!(!c.membership(&[0.5, 1.0]).0);
        assert_eq!(c.membership(&[0.0, 0.0]), (true, 0.0));
    }

    #[test]
    fn diag_boundary_rays() {
        let (lo, hi) = diag().boundary_angles().unwrap();
        assert!((lo + PI / 4.0).abs() < 1e-14);
        assert!((hi - PI / 4.0).abs() < 1e-14);
        let rays = diag().sample_rays(16, 0).unwrap();
        assert_eq!(rays.len(), 16);
        for r in &rays {
            assert!(diag().margin(r) >= -1e-15);
        }
    }

    #[test]
    fn rotated_boundary_rays_are_ordered() {
        // cone around (-1, 0): dominant (-1, 0), subordinate (0, 0.5)
        let c = ConeSample::new(
            vec![0.0, 0.0],
            ConeMode::Tabulated,
            vec![-1.0, 0.0],
            vec![vec![Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)]],
        );
        let (lo, hi) = c.boundary_angles().unwrap();
        let mid = lo + 0.5 * (hi - lo).rem_euclid(2.0 * PI);
        assert!((mid.cos() + 1.0).abs() < 1e-12);
        assert!(c.margin(&[lo.cos(), lo.sin()]).abs() < 1e-14);
    }

    #[test]
    fn axioms_on_diag_and_degenerate() {
        assert!(cone_axioms_check(&diag(), 1000, 7).passed());
        let bad = ConeSample::new(
            vec![0.0, 0.0],
            ConeMode::Tabulated,
            vec![1.0, 0.0],
            vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]],
        );
        let r = cone_axioms_check(&bad, 1000, 7);
        assert!(r.pointedness_violations > 0);
        assert!(!r.passed());
    }

    #[test]
    fn three_dimensional_rays_sit_in_the_cone() {
        let c = ConeSample::new(
            vec![0.0; 3],
            ConeMode::Tabulated,
            vec![1.0, 0.0, 0.0],
            vec![
                vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.5)],
            ],
        );
        let rays = c.sample_rays(12, 3).unwrap();
        assert_eq!(rays.len(), 12);
        let mut boundary = 0;
        for r in &rays {
            let m = c.margin(r);
            assert!(m >= -1e-12);
            if m.abs() < 1e-9 {
                boundary += 1;
            }
        }
        assert!(boundary >= 6);
        assert_eq!(rays, c.sample_rays(12, 3).unwrap());
    }
}
