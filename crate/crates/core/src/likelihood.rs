//! Log-likelihood, score and observed information from the derivative stack.
//!
//! Every quantity is a ratio of masses `mass(W^ν D^μ π) / mass(W^0 π)`, which
//! is invariant to the common scale of the stack; only the log-likelihood
//! needs `log_scale`. The same end-point functionals evaluated at consecutive
//! stacks give the per-step increments `g^ν`, whose sums telescope back to
//! the end-point values.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_admissible, check_order, stationary_law_with_table, Model, Observation, StationaryLaw};
use crate::multiindex::MultiIndexTable;
use crate::recursion::{forward_pass, mass_of, DerivativeStack};

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Natural log of the joint density of `ξ_0 … ξ_n`.
    pub loglik: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<Vec<f64>>,
    /// Symmetrized.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_info: Option<Vec<Vec<f64>>>,
    /// `max |H_kl − H_lk|` before symmetrization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_asymmetry: Option<f64>,
    pub n_obs: usize,
    pub order: usize,
    #[serde(skip)]
    pub increments: Option<Increments>,
}

/// Per-step increments. Row 0 holds the initial term (the end-point
/// functionals at `W_0`); row `i ≥ 1` holds `g(W_i, W_{i−1})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Increments {
    pub q: usize,
    pub order: usize,
    pub g0: Vec<f64>,
    /// `g1[i][k]` for `ν = e_k`.
    pub g1: Vec<Vec<f64>>,
    /// `g2[i][k*q + l]` for `ν = e_k + e_l`.
    pub g2: Vec<Vec<f64>>,
}

impl Increments {
    pub fn len(&self) -> usize {
        self.g0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g0.is_empty()
    }

    pub fn sum_g0(&self) -> f64 {
        self.g0.iter().sum()
    }

    pub fn sum_g1(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.q];
        for row in &self.g1 {
            for (a, g) in acc.iter_mut().zip(row) {
                *a += g;
            }
        }
        acc
    }

    pub fn sum_g2(&self) -> Vec<Vec<f64>> {
        let q = self.q;
        let mut acc = vec![vec![0.0; q]; q];
        for row in &self.g2 {
            for k in 0..q {
                for l in 0..q {
                    acc[k][l] += row[k * q + l];
                }
            }
        }
        acc
    }

    /// CSV with header `step,g0,g1_<k>...,g2_<k>_<l>...` (upper triangle).
    pub fn to_csv(&self, names: &[String]) -> String {
        let q = self.q;
        let mut out = String::from("step,g0");
        if self.order >= 1 {
            for name in names.iter().take(q) {
                out.push_str(&format!(",g1_{name}"));
            }
        }
        if self.order >= 2 {
            for k in 0..q {
                for l in k..q {
                    out.push_str(&format!(",g2_{}_{}", names[k], names[l]));
                }
            }
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{i},{:.16e}", self.g0[i]));
            if self.order >= 1 {
                for g in &self.g1[i] {
                    out.push_str(&format!(",{g:.16e}"));
                }
            }
            if self.order >= 2 {
                for k in 0..q {
                    for l in k..q {
                        out.push_str(&format!(",{:.16e}", self.g2[i][k * q + l]));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// End-point functionals of one stack.
#[derive(Debug, Clone, PartialEq)]
pub struct EndPoint {
    /// `log_scale + ln mass(W^0 π)`.
    pub loglik: f64,
    /// `mass(W^{e_k} π + W^0 D^{e_k} π) / mass(W^0 π)`.
    pub score: Vec<f64>,
    /// First bracket of the second-derivative functional, `q × q` row-major.
    pub second_ratio: Vec<f64>,
}

impl EndPoint {
    /// `second_ratio − score ⊗ score`, row-major.
    pub fn hessian_raw(&self) -> Vec<f64> {
        let q = self.score.len();
        let mut h = self.second_ratio.clone();
        for k in 0..q {
            for l in 0..q {
                h[k * q + l] -= self.score[l] * self.score[k];
            }
        }
        h
    }
}

fn check_law(stack: &DerivativeStack, law: &StationaryLaw, order: usize) -> Result<()> {
    if stack.table().r() < order {
        return Err(Error::InvalidArgument(format!(
            "stack of order {} cannot supply derivatives of order {order}",
            stack.table().r()
        )));
    }
    if law.order() < order {
        return Err(Error::InvalidArgument(format!(
            "stationary law of order {} cannot supply derivatives of order {order}",
            law.order()
        )));
    }
    if law.pi().len() != stack.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "stationary law has {} states, stack has {}",
            law.pi().len(),
            stack.n_states()
        )));
    }
    Ok(())
}

/// Evaluates the end-point functionals up to `order` (0, 1 or 2).
pub fn end_point(stack: &DerivativeStack, law: &StationaryLaw, order: usize) -> Result<EndPoint> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!(
            "log-likelihood derivatives are assembled up to order 2, got {order}"
        )));
    }
    check_law(stack, law, order)?;
    let table = stack.table();
    let q = table.q();
    let pi = law.pi();
    let w0 = stack.block(0);
    let base = mass_of(w0, pi);
    let step = stack.step_index();
    if !base.is_finite() {
        return Err(Error::NonFinite {
            step,
            what: "likelihood mass",
        });
    }
    if base <= 0.0 {
        return Err(Error::ZeroMass { step });
    }
    let loglik = stack.log_scale() + base.ln();

    let mut score = Vec::new();
    if order >= 1 {
        score = (0..q)
            .map(|k| {
                let e = table.unit_label(k);
                (mass_of(stack.block(e), pi) + mass_of(w0, law.by_label(e))) / base
            })
            .collect();
    }

    let mut second_ratio = Vec::new();
    if order >= 2 {
        second_ratio = vec![0.0; q * q];
        for k in 0..q {
            for l in 0..q {
                // ν = ν1 + ν2 with ν1 = e_k, ν2 = e_l
                let nu = table.pair_label(k, l);
                let e1 = table.unit_label(k);
                let e2 = table.unit_label(l);
                let numer = mass_of(stack.block(nu), pi)
                    + mass_of(stack.block(e2), law.by_label(e1))
                    + mass_of(stack.block(e1), law.by_label(e2))
                    + mass_of(w0, law.by_label(nu));
                second_ratio[k * q + l] = numer / base;
            }
        }
    }

    Ok(EndPoint {
        loglik,
        score,
        second_ratio,
    })
}

/// `g⁰(W_i, W_{i−1}) = log(‖M_i π‖ / ‖M_{i−1} π‖)`.
pub fn increment_g0(
    prev: &DerivativeStack,
    next: &DerivativeStack,
    law: &StationaryLaw,
) -> Result<f64> {
    Ok(end_point(next, law, 0)?.loglik - end_point(prev, law, 0)?.loglik)
}

/// `g^ν` for `ν = e_k`.
pub fn increment_g1(
    prev: &DerivativeStack,
    next: &DerivativeStack,
    law: &StationaryLaw,
    k: usize,
) -> Result<f64> {
    check_coord(next, k)?;
    Ok(end_point(next, law, 1)?.score[k] - end_point(prev, law, 1)?.score[k])
}

/// `g^ν` for `ν = e_k + e_l`, as the difference of the two displayed brackets.
pub fn increment_g2(
    prev: &DerivativeStack,
    next: &DerivativeStack,
    law: &StationaryLaw,
    k: usize,
    l: usize,
) -> Result<f64> {
    check_coord(next, k)?;
    check_coord(next, l)?;
    let a = end_point(next, law, 2)?;
    let b = end_point(prev, law, 2)?;
    Ok(g2_from(&a, &b, k, l))
}

fn g2_from(next: &EndPoint, prev: &EndPoint, k: usize, l: usize) -> f64 {
    let q = next.score.len();
    let first = next.second_ratio[k * q + l] - prev.second_ratio[k * q + l];
    let second = next.score[l] * next.score[k] - prev.score[l] * prev.score[k];
    first - second
}

fn check_coord(stack: &DerivativeStack, k: usize) -> Result<()> {
    if k >= stack.table().q() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {k} out of range for q = {}",
            stack.table().q()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub order: usize,
    pub increments: bool,
}

impl EvalOptions {
    pub fn order(order: usize) -> Self {
        EvalOptions {
            order,
            increments: false,
        }
    }

    pub fn with_increments(mut self) -> Self {
        self.increments = true;
        self
    }
}

pub fn evaluate<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    order: usize,
) -> Result<EvalReport> {
    evaluate_with(model, theta, data, EvalOptions::order(order))
}

pub fn evaluate_with<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    opts: EvalOptions,
) -> Result<EvalReport> {
    let order = opts.order;
    if order > 2 {
        return Err(Error::InvalidArgument(format!(
            "order must be 0, 1 or 2, got {order}"
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one observation is required".into(),
        ));
    }
    check_admissible(model, theta)?;
    check_order(model, order)?;
    let q = model.n_params();
    let table = Arc::new(MultiIndexTable::new(q, order)?);
    let law = stationary_law_with_table(model, theta, &table)?;

    let mut incs = opts.increments.then(|| Increments {
        q,
        order,
        ..Default::default()
    });
    let mut last: Option<EndPoint> = None;
    let final_stack = forward_pass(model, theta, data, table.clone(), law.pi(), |stack| {
        if let Some(incs) = incs.as_mut() {
            let ep = end_point(stack, &law, order)?;
            match &last {
                None => {
                    incs.g0.push(ep.loglik);
                    incs.g1.push(ep.score.clone());
                    incs.g2.push(if order >= 2 { ep.hessian_raw() } else { Vec::new() });
                }
                Some(prev) => {
                    incs.g0.push(ep.loglik - prev.loglik);
                    incs.g1.push(ep.score.iter().zip(&prev.score).map(|(a, b)| a - b).collect());
                    let mut row = Vec::new();
                    if order >= 2 {
                        row = vec![0.0; q * q];
                        for k in 0..q {
                            for l in 0..q {
                                row[k * q + l] = g2_from(&ep, prev, k, l);
                            }
                        }
                    }
                    incs.g2.push(row);
                }
            }
            last = Some(ep);
        }
        Ok(())
    })?;

    let ep = end_point(&final_stack, &law, order)?;
    let step = final_stack.step_index();
    if !ep.loglik.is_finite() {
        return Err(Error::NonFinite {
            step,
            what: "log-likelihood",
        });
    }

    let mut report = EvalReport {
        loglik: ep.loglik,
        score: None,
        hessian: None,
        observed_info: None,
        hessian_asymmetry: None,
        n_obs: data.len(),
        order,
        increments: incs,
    };
    if order >= 1 {
        if ep.score.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite { step, what: "score" });
        }
        report.score = Some(ep.score.clone());
    }
    if order >= 2 {
        let raw = ep.hessian_raw();
        if raw.iter().any(|h| !h.is_finite()) {
            return Err(Error::NonFinite {
                step,
                what: "hessian",
            });
        }
        let mut asym: f64 = 0.0;
        let mut h = vec![vec![0.0; q]; q];
        for k in 0..q {
            for l in 0..q {
                asym = asym.max((raw[k * q + l] - raw[l * q + k]).abs());
                h[k][l] = 0.5 * (raw[k * q + l] + raw[l * q + k]);
            }
        }
        report.observed_info = Some(
            h.iter()
                .map(|row| row.iter().map(|x| -x).collect())
                .collect(),
        );
        report.hessian = Some(h);
        report.hessian_asymmetry = Some(asym);
    }
    Ok(report)
}

/// Log-likelihood only (the scaled forward algorithm).
pub fn loglik<M: Model + ?Sized>(model: &M, theta: &[f64], data: &[Observation]) -> Result<f64> {
    Ok(evaluate(model, theta, data, 0)?.loglik)
}
