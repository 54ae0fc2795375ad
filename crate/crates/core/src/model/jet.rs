//! Second-order forward jets: value, gradient and Hessian with respect to θ.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::multiindex::MultiIndexTable;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `q × q`.
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, q: usize) -> Self {
        Jet2 {
            value,
            grad: vec![0.0; q],
            hess: vec![0.0; q * q],
        }
    }

    /// `c + Σ_k a_k θ_k`.
    pub fn affine(constant: f64, coefs: &[f64], theta: &[f64]) -> Self {
        let q = theta.len();
        let value = constant + coefs.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>();
        Jet2 {
            value,
            grad: coefs.to_vec(),
            hess: vec![0.0; q * q],
        }
    }

    pub fn q(&self) -> usize {
        self.grad.len()
    }

    /// Applies a scalar function given `g(v), g'(v), g''(v)` at `v = self.value`.
    pub fn chain(&self, g0: f64, g1: f64, g2: f64) -> Self {
        let q = self.q();
        let mut hess = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                hess[i * q + j] = g1 * self.hess[i * q + j] + g2 * self.grad[i] * self.grad[j];
            }
        }
        Jet2 {
            value: g0,
            grad: self.grad.iter().map(|d| g1 * d).collect(),
            hess,
        }
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }

    pub fn recip(&self) -> Self {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn powi2(&self) -> Self {
        self * self
    }

    pub fn scale(&self, c: f64) -> Self {
        Jet2 {
            value: c * self.value,
            grad: self.grad.iter().map(|d| c * d).collect(),
            hess: self.hess.iter().map(|d| c * d).collect(),
        }
    }

    pub fn add_const(&self, c: f64) -> Self {
        Jet2 {
            value: self.value + c,
            ..self.clone()
        }
    }

    /// Reads `D^ν` for every `ν` in a table of order at most 2, by label.
    pub fn to_derivatives(&self, table: &MultiIndexTable) -> Vec<f64> {
        debug_assert!(table.r() <= 2);
        let q = self.q();
        table
            .indices()
            .iter()
            .map(|nu| {
                let nz: Vec<(usize, u32)> = nu
                    .exponents()
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|&(_, e)| e > 0)
                    .collect();
                match nz.as_slice() {
                    [] => self.value,
                    [(k, 1)] => self.grad[*k],
                    [(k, 2)] => self.hess[k * q + k],
                    [(k, 1), (l, 1)] => self.hess[k * q + l],
                    _ => unreachable!("jet holds derivatives up to order 2"),
                }
            })
            .collect()
    }
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, o: &Jet2) -> Jet2 {
        let q = self.q();
        let mut hess = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                hess[i * q + j] = self.value * o.hess[i * q + j]
                    + o.value * self.hess[i * q + j]
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i];
            }
        }
        Jet2 {
            value: self.value * o.value,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(a, b)| self.value * b + o.value * a)
                .collect(),
            hess,
        }
    }
}

impl Div for &Jet2 {
    type Output = Jet2;
    fn div(self, o: &Jet2) -> Jet2 {
        self * &o.recip()
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}
