#![allow(dead_code)]

use mirfs::{Error, InitialLaw, Interval, Model, MultiIndexTable, Observation, Result};
use nalgebra::DMatrix;
use rand::RngCore;

/// `|a − b| / max(|b|, 1)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn obs(xs: &[f64]) -> Vec<Observation> {
    xs.iter().map(|&x| x.into()).collect()
}

/// Two states with all derivative orders available.
///
/// `p(0→1) = 0.3 + 0.2 sin θ_0`, `p(1→0) = 0.4 + 0.2 cos θ_1` (θ_0 when
/// q = 1), and `f(ξ|x) = s_x(ξ) exp(Σ_k λ_{x,k} θ_k)` with
/// `s_x(ξ) = exp(−(ξ − m_x)²/2)`. The emission is not normalized, which the
/// recursion does not care about.
pub struct SmoothModel {
    names: Vec<String>,
    bounds: Vec<Interval>,
    lambda: [[f64; 3]; 2],
    initial: InitialLaw,
}

impl SmoothModel {
    pub fn new(q: usize) -> Self {
        assert!((1..=3).contains(&q));
        SmoothModel {
            names: (0..q).map(|k| format!("s{k}")).collect(),
            bounds: vec![Interval::new(-3.0, 3.0); q],
            lambda: [[0.7, -0.4, 0.25], [-0.3, 0.5, 0.6]],
            initial: InitialLaw::Stationary,
        }
    }

    pub fn with_fixed_law(mut self, law: Vec<f64>) -> Self {
        self.initial = InitialLaw::Fixed(law);
        self
    }

    fn q(&self) -> usize {
        self.names.len()
    }
}

// d^n/dθ^n of sin / cos
fn dsin(n: u32, t: f64) -> f64 {
    match n % 4 {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

fn dcos(n: u32, t: f64) -> f64 {
    dsin(n + 1, t)
}

impl Model for SmoothModel {
    fn n_states(&self) -> usize {
        2
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn max_order(&self) -> usize {
        6
    }
    fn param_names(&self) -> &[String] {
        &self.names
    }
    fn admissible_box(&self) -> &[Interval] {
        &self.bounds
    }
    fn initial_law(&self) -> &InitialLaw {
        &self.initial
    }

    fn transition_derivatives(&self, theta: &[f64], table: &MultiIndexTable) -> Result<Vec<DMatrix<f64>>> {
        let j = if self.q() > 1 { 1 } else { 0 };
        Ok(table
            .indices()
            .iter()
            .map(|nu| {
                let e = nu.exponents();
                let only = |k: usize| e.iter().enumerate().all(|(i, &v)| i == k || v == 0);
                let mut a = 0.0;
                let mut b = 0.0;
                if only(0) {
                    a = 0.2 * dsin(e[0], theta[0]) + if e[0] == 0 { 0.3 } else { 0.0 };
                }
                if only(j) {
                    b = 0.2 * dcos(e[j], theta[j]) + if e[j] == 0 { 0.4 } else { 0.0 };
                }
                let zero = nu.is_zero();
                let one = if zero { 1.0 } else { 0.0 };
                DMatrix::from_row_slice(2, 2, &[one - a, a, b, one - b])
            })
            .collect())
    }

    fn emission_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
        state: usize,
        obs: &Observation,
        _prev: Option<&Observation>,
    ) -> Result<Vec<f64>> {
        let xi = obs.values()[0];
        if !xi.is_finite() {
            return Err(Error::Domain("non-finite observation".into()));
        }
        let m = if state == 0 { -1.0 } else { 1.0 };
        let lam = &self.lambda[state][..self.q()];
        let base = (-(xi - m) * (xi - m) / 2.0 + lam.iter().zip(theta).map(|(l, t)| l * t).sum::<f64>()).exp();
        Ok(table
            .indices()
            .iter()
            .map(|nu| {
                base * nu
                    .exponents()
                    .iter()
                    .zip(lam)
                    .map(|(&e, l)| l.powi(e as i32))
                    .product::<f64>()
            })
            .collect())
    }

    fn sample_emission(
        &self,
        _theta: &[f64],
        _state: usize,
        _prev: Option<&Observation>,
        _rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        Err(Error::InvalidArgument("SmoothModel does not simulate".into()))
    }
}

pub fn smooth_data(n: usize) -> Vec<Observation> {
    (0..n).map(|i| ((i as f64 * 0.77).sin() * 1.8).into()).collect()
}
