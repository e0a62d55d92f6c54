use num_complex::Complex64;

use super::{ConeField, ConeMode, ConeSample};
use crate::error::{Error, Result};
use crate::export::split_fields;

/// Planar cone rows on a rectangular table, bilinearly interpolated.
///
/// Reads the cone-grid CSV layout; columns past the eighth are ignored.
#[derive(Debug, Clone)]
pub struct TabulatedCones {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `cells[j * xs.len() + i]` holds `[d1, d2, re1, re2, im1, im2]`.
    cells: Vec<Option<[f64; 6]>>,
}

impl TabulatedCones {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<([f64; 2], [f64; 6])> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields = split_fields(line);
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().take(8).map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                // a header line is the only non-numeric line allowed
                Err(_) if entries.is_empty() && fields[0].starts_with('x') => continue,
                Err(_) => {
                    return Err(Error::Malformed {
                        line: lineno + 1,
                        msg: format!("non-numeric field in `{line}`"),
                    })
                }
            };
            if values.len() < 8 {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    msg: format!("expected at least 8 fields, found {}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    msg: "non-finite value".into(),
                });
            }
            entries.push((
                [values[0], values[1]],
                [values[2], values[3], values[4], values[5], values[6], values[7]],
            ));
        }
        if entries.is_empty() {
            return Err(Error::Malformed {
                line: 0,
                msg: "no cone rows".into(),
            });
        }
        let axis = |k: usize| {
            let mut v: Vec<f64> = entries.iter().map(|e| e.0[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let xs = axis(0);
        let ys = axis(1);
        let mut cells = vec![None; xs.len() * ys.len()];
        for (p, rows) in entries {
            let i = xs.partition_point(|v| *v < p[0]);
            let j = ys.partition_point(|v| *v < p[1]);
            cells[j * xs.len() + i] = Some(rows);
        }
        Ok(TabulatedCones { xs, ys, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bracket(axis: &[f64], v: f64) -> Option<(usize, usize, f64)> {
        if axis.len() == 1 {
            return (v == axis[0]).then_some((0, 0, 0.0));
        }
        if v < axis[0] || v > axis[axis.len() - 1] {
            return None;
        }
        let hi = axis.partition_point(|a| *a < v).clamp(1, axis.len() - 1);
        let lo = hi - 1;
        Some((lo, hi, (v - axis[lo]) / (axis[hi] - axis[lo])))
    }
}

impl ConeField for TabulatedCones {
    fn dim(&self) -> usize {
        2
    }

    fn cone_at(&self, x: &[f64]) -> Result<ConeSample> {
        let outside = || Error::OutsideTable { x: x.to_vec() };
        if x.len() != 2 {
            return Err(Error::StateLength {
                expected: 2,
                found: x.len(),
            });
        }
        let (i0, i1, s) = Self::bracket(&self.xs, x[0]).ok_or_else(outside)?;
        let (j0, j1, t) = Self::bracket(&self.ys, x[1]).ok_or_else(outside)?;
        let nx = self.xs.len();
        let cell = |i: usize, j: usize| self.cells[j * nx + i].ok_or_else(outside);
        let (c00, c10, c01, c11) = (cell(i0, j0)?, cell(i1, j0)?, cell(i0, j1)?, cell(i1, j1)?);
        let mut r = [0.0; 6];
        for k in 0..6 {
            r[k] = (1.0 - s) * (1.0 - t) * c00[k] + s * (1.0 - t) * c10[k] + (1.0 - s) * t * c01[k] + s * t * c11[k];
        }
        Ok(ConeSample::new(
            x.to_vec(),
            ConeMode::Tabulated,
            vec![r[0], r[1]],
            vec![vec![Complex64::new(r[2], r[4]), Complex64::new(r[3], r[5])]],
        ))
    }

    fn describe(&self) -> String {
        format!("tabulated cone field ({} x {} nodes)", self.xs.len(), self.ys.len())
    }
}
