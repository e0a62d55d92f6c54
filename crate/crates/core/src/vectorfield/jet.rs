//! Forward-mode dual numbers carrying a full gradient.

use smallvec::SmallVec;

/// A value together with its gradient with respect to the `n` state variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: SmallVec<[f64; 4]>,
}

impl Jet {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet {
            value,
            gradient: SmallVec::from_elem(0.0, n),
        }
    }

    /// The `i`-th coordinate function evaluated at `value`.
    pub fn variable(value: f64, i: usize, n: usize) -> Self {
        let mut j = Jet::constant(value, n);
        j.gradient[i] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn is_constant(&self) -> bool {
        self.gradient.iter().all(|g| *g == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }

    /// Applies a scalar function with known derivative: `(h(v), h'(v) * grad)`.
    pub fn chain(&self, value: f64, derivative: f64) -> Jet {
        Jet {
            value,
            gradient: self.gradient.iter().map(|g| derivative * g).collect(),
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a + b),
        }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value - o.value,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a - b),
        }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let (u, v) = (self.value, o.value);
        Jet {
            value: u * v,
            gradient: zip(&self.gradient, &o.gradient, |a, b| a * v + u * b),
        }
    }

    /// Quotient; the caller is responsible for rejecting a zero denominator.
    pub fn div(&self, o: &Jet) -> Jet {
        let (u, v) = (self.value, o.value);
        let inv = 1.0 / v;
        Jet {
            value: u * inv,
            gradient: zip(&self.gradient, &o.gradient, |a, b| (a * v - u * b) * inv * inv),
        }
    }

    pub fn neg(&self) -> Jet {
        self.chain(-self.value, -1.0)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s)
    }

    pub fn tan(&self) -> Jet {
        let t = self.value.tan();
        self.chain(t, 1.0 + t * t)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(&self) -> Jet {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn abs(&self) -> Jet {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(self.value.abs(), sign)
    }

    pub fn powi(&self, k: i32) -> Jet {
        let d = if k == 0 {
            0.0
        } else {
            k as f64 * self.value.powi(k - 1)
        };
        self.chain(self.value.powi(k), d)
    }

    /// `self^o` for a strictly positive base.
    pub fn powf_positive(&self, o: &Jet) -> Jet {
        let ln_u = self.value.ln();
        let p = (o.value * ln_u).exp();
        let du = o.value * self.value.powf(o.value - 1.0);
        Jet {
            value: p,
            gradient: zip(&self.gradient, &o.gradient, |a, b| du * a + p * ln_u * b),
        }
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> SmallVec<[f64; 4]> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}
