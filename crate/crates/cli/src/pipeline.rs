use conefield::flow::{find_fixed_point, find_limit_cycle, CycleConfig, FixedPointModel, NewtonConfig};
use conefield::koopman::{eigenpairs_fixed_point, eigenpairs_limit_cycle, EigenpairSet};
use conefield::{Error, Grid, SystemSpec};
use num_complex::Complex64;

use crate::config::{Mode, RunConfig};

pub struct Analysis {
    pub set: EigenpairSet,
    pub pipeline: &'static str,
    /// Human-readable description of the attractor.
    pub summary: Vec<String>,
    /// Default strictness horizon for this attractor.
    pub strict_t: f64,
    /// Why auto mode did not take the fixed-point branch.
    pub notes: Vec<String>,
}

fn fixed_point_analysis(spec: &SystemSpec, fp: FixedPointModel, cfg: &RunConfig) -> conefield::Result<Analysis> {
    let set = eigenpairs_fixed_point(spec, &fp, &cfg.averaging)?;
    let lambdas: Vec<String> = fp.eigenvalues.iter().map(|l| fmt_complex(*l)).collect();
    let summary = vec![
        format!("fixed point: {:?}", fp.x),
        format!("eigenvalues: {}", lambdas.join(", ")),
        format!("eigenbasis condition: {:.3e}", fp.condition),
    ];
    Ok(Analysis {
        set,
        pipeline: "fixed-point",
        summary,
        strict_t: 2.0,
        notes: Vec::new(),
    })
}

fn cycle_analysis(spec: &SystemSpec, start: &[f64], cfg: &RunConfig) -> conefield::Result<Analysis> {
    let lc = find_limit_cycle(spec, start, &CycleConfig::default())?;
    let set = eigenpairs_limit_cycle(spec, &lc, &cfg.averaging)?;
    let exps: Vec<String> = lc.floquet_exponents.iter().map(|l| fmt_complex(*l)).collect();
    let summary = vec![
        format!("limit cycle through {:?}", lc.anchor),
        format!("period: {:.12}", lc.period),
        format!("Floquet exponents: {}", exps.join(", ")),
        format!("closure gap: {:.3e}", lc.closure_gap),
    ];
    Ok(Analysis {
        set,
        pipeline: "limit-cycle",
        summary,
        strict_t: lc.period,
        notes: Vec::new(),
    })
}

fn fmt_complex(l: Complex64) -> String {
    if l.im == 0.0 {
        format!("{}", l.re)
    } else {
        format!("{}{:+}i", l.re, l.im)
    }
}

/// Cycle start when none is given: a quarter of the grid half-width away
/// from `base` along the first axis.
fn cycle_start(base: &[f64], grid: &Grid) -> Vec<f64> {
    let mut x = base.to_vec();
    x[0] += 0.25 * 0.5 * (grid.hi[0] - grid.lo[0]).max(1.0);
    x
}

/// Locates the attractor and builds its eigenpairs.
pub fn analyze_system(spec: &SystemSpec, grid: &Grid, cfg: &RunConfig) -> conefield::Result<Analysis> {
    let guess = cfg.guess.clone().unwrap_or_else(|| grid.center());
    if guess.len() != spec.dim() {
        return Err(Error::StateLength {
            expected: spec.dim(),
            found: guess.len(),
        });
    }
    match cfg.mode {
        Mode::FixedPoint => {
            let fp = find_fixed_point(spec, &guess, &NewtonConfig::default())?;
            fixed_point_analysis(spec, fp, cfg)
        }
        Mode::LimitCycle => {
            let start = match &cfg.guess {
                Some(g) => g.clone(),
                None => cycle_start(&guess, grid),
            };
            cycle_analysis(spec, &start, cfg)
        }
        Mode::Auto => {
            let (refusal, base) = match find_fixed_point(spec, &guess, &NewtonConfig::default()) {
                Ok(fp) => {
                    let x = fp.x.clone();
                    match fixed_point_analysis(spec, fp, cfg) {
                        Ok(a) => return Ok(a),
                        Err(e @ (Error::ComplexDominant { .. } | Error::NotStable(_))) => (e, x),
                        Err(e) => return Err(e),
                    }
                }
                Err(e) => (e, guess.clone()),
            };
            let start = cycle_start(&base, grid);
            match cycle_analysis(spec, &start, cfg) {
                Ok(mut a) => {
                    a.notes.push(format!("fixed-point pipeline not applicable: {refusal}"));
                    Ok(a)
                }
                Err(Error::NotOscillating | Error::NoClosure { .. }) => Err(refusal),
                Err(e) => Err(e),
            }
        }
    }
}
