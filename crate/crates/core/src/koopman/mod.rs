//! Koopman eigenfunctions and their differentials from Laplace averages.

mod average;
mod observable;

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;

pub use average::{average_jobs, laplace_average, laplace_average_prolonged, Average, AverageConfig, Job};
pub use observable::{LinearObservable, Observable, PolarCycle, TransverseObservable};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::flow::{FixedPointModel, LimitCycleModel};
use crate::linalg::{cnorm, Matrix};
use crate::vectorfield::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    FixedPoint,
    CycleAngle,
    CycleTransverse,
}

impl PairKind {
    pub fn label(self) -> &'static str {
        match self {
            PairKind::FixedPoint => "fixed-point",
            PairKind::CycleAngle => "cycle-angle",
            PairKind::CycleTransverse => "cycle-transverse",
        }
    }
}

/// Static description of one eigenpair.
#[derive(Debug, Clone)]
pub struct KoopmanEigenpair {
    pub lambda: Complex64,
    pub kind: PairKind,
    pub observable: String,
    /// Factor applied to the raw average.
    pub scale: Complex64,
}

/// An eigenfunction evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PairValue {
    pub phi: Complex64,
    pub gradient: Vec<Complex64>,
    /// Differential of the phase, for the angle mode only.
    pub angle_gradient: Option<Vec<f64>>,
    pub horizon: f64,
    pub residual: f64,
}

impl PairValue {
    pub fn apply(&self, dx: &[f64]) -> Complex64 {
        self.gradient.iter().zip(dx).map(|(g, d)| g * d).sum()
    }
}

#[derive(Debug, Clone)]
pub enum Attractor {
    FixedPoint(FixedPointModel),
    LimitCycle(Arc<LimitCycleModel>),
}

type Cache = RwLock<HashMap<Vec<u64>, Arc<Vec<PairValue>>>>;

/// The `n` eigenpairs attached to an attractor, evaluated lazily point by
/// point along a single prolonged trajectory and memoized.
pub struct EigenpairSet {
    spec: SystemSpec,
    attractor: Attractor,
    pairs: Vec<KoopmanEigenpair>,
    observables: Vec<Box<dyn Observable>>,
    skips: Vec<Option<f64>>,
    corrections: Vec<Option<Complex64>>,
    cfg: AverageConfig,
    angle_floor: f64,
    warnings: Vec<String>,
    cache: Cache,
}

impl std::fmt::Debug for EigenpairSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EigenpairSet")
            .field("system", &self.spec.name())
            .field("pairs", &self.pairs)
            .field("warnings", &self.warnings)
            .finish()
    }
}

fn cache_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Builds the fixed-point eigenpairs `g_j = v_j^T (x - x*) / |v_j|`.
pub fn eigenpairs_fixed_point(spec: &SystemSpec, fp: &FixedPointModel, cfg: &AverageConfig) -> Result<EigenpairSet> {
    cfg.validate()?;
    let n = spec.dim();
    if fp.dim() != n {
        return Err(Error::StateLength {
            expected: n,
            found: fp.dim(),
        });
    }
    let l1 = fp.eigenvalues[0];
    let scale = fp.eigenvalues.iter().map(|l| l.norm()).fold(1.0, f64::max);
    if l1.im.abs() > 1e-12 * scale {
        return Err(Error::ComplexDominant { lambda: l1 });
    }
    if !fp.is_stable() {
        return Err(Error::NotStable(format!(
            "eigenvalues {:?} are not all in the open left half-plane",
            fp.eigenvalues
        )));
    }
    let mut warnings = Vec::new();
    for (j, lj) in fp.eigenvalues.iter().enumerate().skip(1) {
        if 2.0 * l1.re >= lj.re {
            warnings.push(format!(
                "resonance: Re(2*lambda1) = {} >= Re(lambda{}) = {}; averages may converge slowly",
                2.0 * l1.re,
                j + 1,
                lj.re
            ));
        }
    }
    let mut pairs = Vec::with_capacity(n);
    let mut observables: Vec<Box<dyn Observable>> = Vec::with_capacity(n);
    for j in 0..n {
        let v = &fp.left[j];
        let len = cnorm(v);
        let coeffs: Vec<Complex64> = v.iter().map(|c| c / len).collect();
        let g = LinearObservable::new(coeffs, fp.x.clone());
        let lambda = if j == 0 {
            Complex64::new(l1.re, 0.0)
        } else {
            fp.eigenvalues[j]
        };
        pairs.push(KoopmanEigenpair {
            lambda,
            kind: PairKind::FixedPoint,
            observable: g.describe(),
            scale: Complex64::new(1.0, 0.0),
        });
        observables.push(Box::new(g));
    }
    Ok(EigenpairSet {
        spec: spec.clone(),
        attractor: Attractor::FixedPoint(fp.clone()),
        pairs,
        observables,
        skips: vec![None; n],
        corrections: vec![None; n],
        cfg: *cfg,
        angle_floor: 0.0,
        warnings,
        cache: RwLock::new(HashMap::new()),
    })
}

/// Builds the angle and transverse eigenpairs of a planar limit cycle.
///
/// The averaging window is the period; the angle mode skips five periods.
pub fn eigenpairs_limit_cycle(spec: &SystemSpec, lc: &LimitCycleModel, cfg: &AverageConfig) -> Result<EigenpairSet> {
    cfg.validate()?;
    if spec.dim() != 2 || lc.dim() != 2 {
        return Err(Error::Unsupported("limit-cycle eigenpairs are implemented for planar systems".into()));
    }
    let l2 = lc.floquet_exponents[0];
    if !(l2.re < 0.0) || l2.im.abs() > 1e-9 {
        return Err(Error::NotStable(format!(
            "nontrivial Floquet exponent {l2} is not real and negative"
        )));
    }
    let lambda1 = Complex64::new(0.0, lc.omega);
    let lambda2 = Complex64::new(l2.re, 0.0);
    let model = PolarCycle::fit(spec, lc, 512)?;
    let angle_obs = LinearObservable::coordinate(0, 2);
    let trans_obs = TransverseObservable::new(model);
    let mut cfg = *cfg;
    cfg.window = lc.period;
    if cfg.t_max <= cfg.window {
        cfg.t_max = 30.0 * lc.period;
    }
    let skip_angle = 5.0 * lc.period;
    let mut set = EigenpairSet {
        spec: spec.clone(),
        attractor: Attractor::LimitCycle(Arc::new(lc.clone())),
        pairs: vec![
            KoopmanEigenpair {
                lambda: lambda1,
                kind: PairKind::CycleAngle,
                observable: angle_obs.describe(),
                scale: Complex64::new(1.0, 0.0),
            },
            KoopmanEigenpair {
                lambda: lambda2,
                kind: PairKind::CycleTransverse,
                observable: trans_obs.describe(),
                scale: Complex64::new(1.0, 0.0),
            },
        ],
        observables: vec![Box::new(angle_obs), Box::new(trans_obs)],
        skips: vec![Some(skip_angle), Some(0.0)],
        corrections: vec![Some(lambda2); 2],
        cfg,
        angle_floor: 0.0,
        warnings: Vec::new(),
        cache: RwLock::new(HashMap::new()),
    };
    let raw = set.raw_averages(&lc.anchor)?;
    let phase = raw[0].value / raw[0].value.norm();
    set.angle_floor = 1e-8 * raw[0].value.norm();
    set.pairs[0].scale = phase.conj();
    let xi = lc.samples[0].normal.clone().expect("planar samples carry normals");
    let along: Complex64 = raw[1].row.iter().zip(&xi).map(|(r, v)| r * v).sum();
    if along.norm() == 0.0 {
        return Err(Error::DegenerateCone {
            x: lc.anchor.clone(),
            msg: "transverse gradient vanishes at the anchor".into(),
        });
    }
    set.pairs[1].scale = Complex64::new(1.0 / along.re, 0.0);
    Ok(set)
}

impl EigenpairSet {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn pairs(&self) -> &[KoopmanEigenpair] {
        &self.pairs
    }

    pub fn attractor(&self) -> &Attractor {
        &self.attractor
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn config(&self) -> &AverageConfig {
        &self.cfg
    }

    /// True when the dominant pair is the cycle angle mode.
    pub fn angle_mode(&self) -> bool {
        self.pairs[0].kind == PairKind::CycleAngle
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    pub fn clear_cache(&self) {
        if let Ok(mut c) = self.cache.write() {
            c.clear();
        }
    }

    fn raw_averages(&self, x: &[f64]) -> Result<Vec<Average>> {
        let jobs: Vec<Job<'_>> = self
            .observables
            .iter()
            .zip(&self.pairs)
            .zip(self.skips.iter().zip(&self.corrections))
            .map(|((g, p), (skip, correction))| Job {
                observable: g.as_ref(),
                lambda: p.lambda,
                skip: *skip,
                correction: *correction,
            })
            .collect();
        let frame = Matrix::identity(self.dim());
        average_jobs(&self.spec, x, Some(&frame), &jobs, &self.cfg)
    }

    /// All eigenfunctions and differentials at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Arc<Vec<PairValue>>> {
        let key = cache_key(x);
        if let Ok(c) = self.cache.read() {
            if let Some(v) = c.get(&key) {
                return Ok(v.clone());
            }
        }
        let raw = self.raw_averages(x)?;
        let mut values = Vec::with_capacity(raw.len());
        for (pair, avg) in self.pairs.iter().zip(raw) {
            values.push(match pair.kind {
                PairKind::CycleAngle => {
                    let modulus = avg.value.norm();
                    if !(modulus > self.angle_floor) {
                        return Err(Error::AngleUndefined {
                            x: x.to_vec(),
                            modulus,
                        });
                    }
                    let phi = avg.value * pair.scale / modulus;
                    let i = Complex64::new(0.0, 1.0);
                    let angle: Vec<f64> = avg.row.iter().map(|r| (r / (i * avg.value)).re).collect();
                    PairValue {
                        phi,
                        gradient: angle.iter().map(|a| i * phi * a).collect(),
                        angle_gradient: Some(angle),
                        horizon: avg.horizon,
                        residual: avg.residual,
                    }
                }
                _ => PairValue {
                    phi: avg.value * pair.scale,
                    gradient: avg.row.iter().map(|r| r * pair.scale).collect(),
                    angle_gradient: None,
                    horizon: avg.horizon,
                    residual: avg.residual,
                },
            });
        }
        let values = Arc::new(values);
        if let Ok(mut c) = self.cache.write() {
            c.insert(key, values.clone());
        }
        Ok(values)
    }

    /// Relative generator residual of pair `j` at `x`; infinite when the
    /// eigenfunction cannot be resolved there.
    pub fn generator_residual(&self, j: usize, x: &[f64]) -> f64 {
        let Ok(values) = self.evaluate(x) else {
            return f64::INFINITY;
        };
        let Ok(f) = self.spec.eval_field(x) else {
            return f64::INFINITY;
        };
        residual_of(&values[j], self.pairs[j].lambda, &f)
    }

    /// CSV rows `pair,kind,x1..xn,Re(phi),Im(phi),Re(dphi_1),Im(dphi_1),..,residual,horizon`
    /// where `residual` is the generator residual.
    pub fn write_csv<W: Write>(&self, points: &[Vec<f64>], mut w: W) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["pair".to_string(), "kind".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("re_phi".into());
        header.push("im_phi".into());
        for i in 1..=n {
            header.push(format!("re_dphi_{i}"));
            header.push(format!("im_dphi_{i}"));
        }
        header.push("residual".into());
        header.push("horizon".into());
        let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for x in points {
            let values = match self.evaluate(x) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let f = self.spec.eval_field(x)?;
            for (j, v) in values.iter().enumerate() {
                let mut row = vec![(j + 1).to_string(), self.pairs[j].kind.label().to_string()];
                row.extend(x.iter().map(|c| fmt_f64(*c)));
                row.push(fmt_f64(v.phi.re));
                row.push(fmt_f64(v.phi.im));
                for g in &v.gradient {
                    row.push(fmt_f64(g.re));
                    row.push(fmt_f64(g.im));
                }
                row.push(fmt_f64(residual_of(v, self.pairs[j].lambda, &f)));
                row.push(fmt_f64(v.horizon));
                writeln!(w, "{}", row.join(",")).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn residual_of(v: &PairValue, lambda: Complex64, f: &[f64]) -> f64 {
    let lie = v.apply(f);
    let num = (lie - lambda * v.phi).norm();
    let grad = cnorm(&v.gradient);
    let fnorm = f.iter().map(|c| c * c).sum::<f64>().sqrt();
    // absolute resolution of the averages; keeps the ratio finite near phi = 0
    let floor = 1e-12 * grad * (lambda.norm() + fnorm) + f64::MIN_POSITIVE;
    num / (lambda.norm() * v.phi.norm() + floor)
}

/// Free-function form of [`EigenpairSet::generator_residual`].
pub fn generator_residual(set: &EigenpairSet, j: usize, x: &[f64]) -> f64 {
    set.generator_residual(j, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{find_fixed_point, NewtonConfig};

    #[test]
    fn linear_pairs_are_coordinates() {
        let spec = SystemSpec::builtin("linear-diag(-1,-2)").unwrap();
        let fp = find_fixed_point(&spec, &[1.0, 1.0], &NewtonConfig::default()).unwrap();
        let set = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap();
        let x = [0.5, 0.5];
        let v = set.evaluate(&x).unwrap();
        assert!((v[0].phi - 0.5).norm() < 1e-6);
        assert!((v[0].gradient[0] - 1.0).norm() < 1e-6 && v[0].gradient[1].norm() < 1e-6);
        assert!((v[1].gradient[1] - 1.0).norm() < 1e-6 && v[1].gradient[0].norm() < 1e-6);
        assert!(set.generator_residual(0, &x) < 1e-8);
        // lambda2 = 2 lambda1 sits exactly on the resonance boundary
        assert_eq!(set.warnings().len(), 1);
        assert_eq!(set.cache_len(), 1);
    }

    #[test]
    fn vanderpol_focus_is_refused() {
        let spec = SystemSpec::builtin("vanderpol").unwrap();
        let fp = find_fixed_point(&spec, &[0.1, -0.1], &NewtonConfig::default()).unwrap();
        let err = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ComplexDominant { .. }));
    }

    #[test]
    fn stable_focus_is_refused_with_criterion() {
        let spec = SystemSpec::parse("n=2; f1=-x1+2*x2; f2=-2*x1-x2").unwrap();
        let fp = find_fixed_point(&spec, &[0.1, 0.1], &NewtonConfig::default()).unwrap();
        let err = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ComplexDominant { .. }));
        assert!(err.to_string().contains("dominant"));
    }

    #[test]
    fn resonance_is_a_warning() {
        let spec = SystemSpec::builtin("linear-diag(-1,-3)").unwrap();
        let fp = find_fixed_point(&spec, &[1.0, 1.0], &NewtonConfig::default()).unwrap();
        let set = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap();
        assert_eq!(set.warnings().len(), 1);
        let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
        let fp = find_fixed_point(&spec, &[0.1, 0.1], &NewtonConfig::default()).unwrap();
        let set = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap();
        assert!(set.warnings().is_empty());
    }
}
