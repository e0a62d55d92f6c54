//! Rectangular sample grids and the worker pool that sweeps them.

use std::fmt;

use crate::error::{Error, Result};

/// Tensor-product grid including both endpoints on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    /// Points with norm below this radius are dropped.
    pub exclude_disk: Option<f64>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("grid bounds must pair up".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::Config(format!("grid bounds are not well ordered: {lo:?} .. {hi:?}")));
        }
        if resolution == 0 {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        Ok(Grid {
            lo,
            hi,
            resolution,
            exclude_disk: None,
        })
    }

    /// Parses `lo1:hi1:lo2:hi2:...:res`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        if parts.len() < 3 || parts.len().is_multiple_of(2) {
            return Err(Error::Config(format!("grid `{text}` must read lo1:hi1:...:res")));
        }
        let nums: Vec<f64> = parts[..parts.len() - 1]
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("grid `{text}` has a non-numeric bound")))?;
        let res: usize = parts[parts.len() - 1]
            .parse()
            .map_err(|_| Error::Config(format!("grid `{text}` has a bad resolution")))?;
        let lo = nums.iter().step_by(2).copied().collect();
        let hi = nums.iter().skip(1).step_by(2).copied().collect();
        Grid::new(lo, hi, res)
    }

    pub fn with_exclusion(mut self, radius: Option<f64>) -> Self {
        self.exclude_disk = radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn axis(&self, d: usize) -> Vec<f64> {
        let r = self.resolution;
        if r == 1 {
            return vec![0.5 * (self.lo[d] + self.hi[d])];
        }
        (0..r)
            .map(|i| self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (r - 1) as f64)
            .collect()
    }

    /// Points with the first coordinate varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|d| self.axis(d)).collect();
        let total = self.resolution.pow(self.dim() as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let p: Vec<f64> = axes
                .iter()
                .map(|ax| {
                    let v = ax[rem % self.resolution];
                    rem /= self.resolution;
                    v
                })
                .collect();
            if let Some(r) = self.exclude_disk {
                if p.iter().map(|v| v * v).sum::<f64>().sqrt() < r {
                    continue;
                }
            }
            out.push(p);
        }
        out
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, b) in self.lo.iter().zip(&self.hi) {
            write!(f, "{a}:{b}:")?;
        }
        write!(f, "{}", self.resolution)?;
        if let Some(r) = self.exclude_disk {
            write!(f, " excluding |x| < {r}")?;
        }
        Ok(())
    }
}

/// How grid sweeps are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Worker pool; `0` lets the runtime pick the size. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { workers: usize },
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel { workers: 0 }
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Order-preserving map.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match *self {
            Exec::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            Exec::Parallel { workers } => parallel_map(workers, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    if workers == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
