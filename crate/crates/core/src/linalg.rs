//! Small dense linear algebra: row-major real matrices, complex LU,
//! eigen-decomposition through the characteristic polynomial, and a
//! one-sided Jacobi SVD. Sized for state dimensions of a handful.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, o: &Matrix) -> Matrix {
        assert_eq!(self.cols, o.rows);
        let mut out = Matrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, o: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let c = to_complex(self);
        match complex_lu(&c, self.rows) {
            Some(lu) => lu.determinant().re,
            None => 0.0,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cdot(row: &[Complex64], v: &[f64]) -> Complex64 {
    row.iter().zip(v).map(|(r, x)| r * x).sum()
}

pub fn cnorm(row: &[Complex64]) -> f64 {
    row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Angle between two nonzero vectors in `[0, pi]`, accurate for small angles.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

fn to_complex(m: &Matrix) -> Vec<Complex64> {
    m.as_slice().iter().map(|v| Complex64::new(*v, 0.0)).collect()
}

/// LU factorization with partial pivoting of a row-major complex matrix.
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    sign: f64,
}

pub fn complex_lu(a: &[Complex64], n: usize) -> Option<ComplexLu> {
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|i| (i, lu[i * n + k].norm()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= 1e-300 * scale || best == 0.0 {
            return None;
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            lu[i * n + k] = f;
            for j in k + 1..n {
                let u = lu[k * n + j];
                lu[i * n + j] -= f * u;
            }
        }
    }
    Some(ComplexLu { n, lu, perm, sign })
}

impl ComplexLu {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    pub fn determinant(&self) -> Complex64 {
        let mut d = Complex64::new(self.sign, 0.0);
        for i in 0..self.n {
            d *= self.lu[i * self.n + i];
        }
        d
    }

    /// Inverse as a row-major matrix.
    pub fn inverse(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// Solves the real system `a x = b`.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let lu = complex_lu(&to_complex(a), n).ok_or(Error::Singular)?;
    let rhs: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    Ok(lu.solve(&rhs).into_iter().map(|c| c.re).collect())
}

/// Eigen-decomposition of a small real matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Sorted by descending real part, then descending imaginary part.
    pub values: Vec<Complex64>,
    /// Right eigenvectors, unit norm, largest component real positive.
    pub right: Vec<Vec<Complex64>>,
    /// Left eigenvectors normalized so that `left[i] . right[j] = delta_ij`.
    pub left: Vec<Vec<Complex64>>,
    /// 1-norm condition number of the right eigenvector matrix.
    pub condition: f64,
}

/// Monic characteristic polynomial coefficients `c[0..n]`, with
/// `p(z) = z^n + c[n-1] z^(n-1) + ... + c[0]` (Faddeev-LeVerrier).
pub fn characteristic_polynomial(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![0.0; n];
    let mut m = Matrix::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = a.mul(&m);
        for i in 0..n {
            next[(i, i)] += c_prev;
        }
        let am = a.mul(&next);
        let c = -am.trace() / k as f64;
        coeffs[n - k] = c;
        m = next;
        c_prev = c;
    }
    coeffs
}

fn eval_monic(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    // Horner for value and derivative
    let n = coeffs.len();
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for k in (0..n).rev() {
        dp = dp * z + p;
        p = p * z + coeffs[k];
    }
    (p, dp)
}

/// Roots of a real monic polynomial.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    match n {
        0 => vec![],
        1 => vec![Complex64::new(-coeffs[0], 0.0)],
        2 => {
            let (b, c) = (coeffs[1], coeffs[0]);
            let disc = b * b - 4.0 * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                let q = if b >= 0.0 { -0.5 * (b + s) } else { -0.5 * (b - s) };
                let r2 = if q != 0.0 { c / q } else { 0.0 };
                vec![Complex64::new(q, 0.0), Complex64::new(r2, 0.0)]
            } else {
                let re = -0.5 * b;
                let im = 0.5 * (-disc).sqrt();
                vec![Complex64::new(re, im), Complex64::new(re, -im)]
            }
        }
        _ => aberth(coeffs),
    }
}

fn aberth(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let bound = 1.0 + coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(0.5 * bound, 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4)
        })
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = eval_monic(coeffs, z[i]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            z[i] -= w;
            moved = moved.max(w.norm() / (1.0 + z[i].norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    // snap nearly-real roots; the polynomial is real
    for r in &mut z {
        if r.im.abs() < 1e-12 * (1.0 + r.re.abs()) {
            r.im = 0.0;
        }
    }
    z
}

fn sort_eigenvalues(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

fn normalize_phase(v: &mut [Complex64]) {
    let nrm = cnorm(v);
    let big = v
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |acc, c| if c.norm() > acc.norm() * (1.0 + 1e-12) { c } else { acc });
    if nrm == 0.0 || big.norm() == 0.0 {
        return;
    }
    let phase = big.conj() / big.norm();
    for c in v.iter_mut() {
        *c = *c * phase / nrm;
        if c.im.abs() < 1e-15 {
            c.im = 0.0;
        }
    }
}

/// Null space of a square complex matrix by Gaussian elimination with full
/// pivoting; pivots below `tol` are treated as zero.
fn null_space(a: &[Complex64], n: usize, tol: f64) -> Vec<Vec<Complex64>> {
    let mut m = a.to_vec();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for k in 0..n {
        let mut best = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                let v = m[i * n + j].norm();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (p, q, _) = best;
        for j in 0..n {
            m.swap(k * n + j, p * n + j);
        }
        for i in 0..n {
            m.swap(i * n + k, i * n + q);
        }
        col_perm.swap(k, q);
        let pivot = m[k * n + k];
        for j in 0..n {
            m[k * n + j] /= pivot;
        }
        for i in 0..n {
            if i != k {
                let f = m[i * n + k];
                if f != Complex64::new(0.0, 0.0) {
                    for j in 0..n {
                        let u = m[k * n + j];
                        m[i * n + j] -= f * u;
                    }
                }
            }
        }
        rank += 1;
    }
    // free columns rank..n
    (rank..n)
        .map(|free| {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            v[col_perm[free]] = Complex64::new(1.0, 0.0);
            for i in 0..rank {
                v[col_perm[i]] = -m[i * n + free];
            }
            v
        })
        .collect()
}

fn inverse_iteration(a: &Matrix, mu: Complex64) -> Option<Vec<Complex64>> {
    let n = a.rows();
    let scale = 1.0 + a.frobenius_norm();
    let shift = mu + Complex64::new(1e-13 * scale, 1e-13 * scale);
    let mut m = to_complex(a);
    for i in 0..n {
        m[i * n + i] -= shift;
    }
    let lu = complex_lu(&m, n)?;
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64))
        .collect();
    for _ in 0..3 {
        v = lu.solve(&v);
        let nrm = cnorm(&v);
        if !nrm.is_finite() || nrm == 0.0 {
            return None;
        }
        for c in &mut v {
            *c /= nrm;
        }
    }
    Some(v)
}

/// Eigen-decomposition through the characteristic polynomial, with
/// eigenvectors from inverse iteration (simple eigenvalues) or the null
/// space of `A - mu I` (clustered eigenvalues).
pub fn eigen(a: &Matrix) -> Result<Eigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Config("eigen-decomposition needs a square matrix".into()));
    }
    if n > 8 {
        return Err(Error::Unsupported(format!(
            "eigen-decomposition limited to dimension <= 8 (got {n})"
        )));
    }
    let scale = 1.0 + a.frobenius_norm();
    let mut roots = polynomial_roots(&characteristic_polynomial(a));
    sort_eigenvalues(&mut roots);

    // cluster nearly equal roots
    let cluster_tol = 1e-6 * scale;
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for r in &roots {
        if let Some(c) = clusters.iter_mut().find(|(c, _)| (c - r).norm() <= cluster_tol) {
            let m = c.1 as f64;
            c.0 = (c.0 * m + r) / (m + 1.0);
            c.1 += 1;
        } else {
            clusters.push((*r, 1));
        }
    }

    let mut values = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for (mu, mult) in &clusters {
        let mu = if mu.im.abs() < 1e-12 * scale {
            Complex64::new(mu.re, 0.0)
        } else {
            *mu
        };
        if *mult == 1 {
            let mut v = inverse_iteration(a, mu)
                .ok_or(Error::IllConditionedEigenbasis { condition: f64::INFINITY })?;
            normalize_phase(&mut v);
            values.push(mu);
            right.push(v);
        } else {
            let mut m = to_complex(a);
            for i in 0..n {
                m[i * n + i] -= mu;
            }
            let basis = null_space(&m, n, 1e-7 * scale);
            if basis.len() < *mult {
                return Err(Error::IllConditionedEigenbasis {
                    condition: f64::INFINITY,
                });
            }
            for mut v in basis.into_iter().take(*mult) {
                normalize_phase(&mut v);
                values.push(mu);
                right.push(v);
            }
        }
    }

    let mut r = vec![Complex64::new(0.0, 0.0); n * n];
    for (j, v) in right.iter().enumerate() {
        for i in 0..n {
            r[i * n + j] = v[i];
        }
    }
    let lu = complex_lu(&r, n).ok_or(Error::IllConditionedEigenbasis {
        condition: f64::INFINITY,
    })?;
    let inv = lu.inverse();
    let condition = one_norm(&r, n) * one_norm(&inv, n);
    let left: Vec<Vec<Complex64>> = (0..n).map(|i| inv[i * n..(i + 1) * n].to_vec()).collect();

    // Rayleigh-quotient polish of simple eigenvalues
    let ac = to_complex(a);
    for k in 0..n {
        let simple = values.iter().filter(|v| (**v - values[k]).norm() <= cluster_tol).count() == 1;
        if simple {
            let av: Vec<Complex64> = (0..n)
                .map(|i| (0..n).map(|j| ac[i * n + j] * right[k][j]).sum())
                .collect();
            let num: Complex64 = left[k].iter().zip(&av).map(|(l, x)| l * x).sum();
            let den: Complex64 = left[k].iter().zip(&right[k]).map(|(l, x)| l * x).sum();
            let mut lam = num / den;
            if values[k].im == 0.0 {
                lam.im = 0.0;
            }
            values[k] = lam;
        }
    }

    Ok(Eigen {
        values,
        right,
        left,
        condition,
    })
}

fn one_norm(m: &[Complex64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| m[i * n + j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Thin singular value decomposition of a real `m x n` matrix by one-sided
/// Jacobi rotations. Returns singular values (descending) and the matching
/// right singular vectors.
pub fn svd(a: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (m, n) = (a.rows(), a.cols());
    // work on columns of A
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = (0..m).map(|i| u[p][i] * u[q][i]).sum();
                if gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel < 1e-15 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[p][i], u[q][i]);
                    u[p][i] = c * x - s * y;
                    u[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|j| (norm(&u[j]), v[j].clone())).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    pairs.into_iter().unzip()
}
