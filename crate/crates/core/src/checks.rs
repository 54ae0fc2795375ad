//! Core-versus-oracle comparisons on given datasets.
//!
//! Errors are `|core − oracle| / max(|oracle|, 1)`, maximized over entries,
//! except the path-sum comparison which is relative to the likelihood itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{evaluate, evaluate_with, EvalOptions};
use crate::model::{Model, Observation};
use crate::multiindex::MultiIndexTable;
use crate::oracles::{fd_gradient, fd_jacobian, naive_unscaled_product, pathsum_loglik, OracleConfig};
use crate::recursion::forward_pass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub likelihood: f64,
    pub score: f64,
    pub hessian: f64,
    pub symmetry: f64,
    pub naive: f64,
    pub telescoping: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            likelihood: 1e-10,
            score: 1e-6,
            hessian: 1e-4,
            symmetry: 1e-8,
            naive: 1e-12,
            telescoping: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub case: usize,
    pub n: usize,
    /// `None` when the check was skipped.
    pub error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub order: usize,
    pub rows: Vec<CheckRow>,
    pub passed: bool,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let e = (a - b).abs() / b.abs().max(1.0);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

struct Rows<'a> {
    rows: &'a mut Vec<CheckRow>,
    case: usize,
    n: usize,
}

impl Rows<'_> {
    fn push(&mut self, check: &str, error: f64, tolerance: f64) {
        self.rows.push(CheckRow {
            check: check.into(),
            case: self.case,
            n: self.n,
            error: Some(error),
            tolerance,
            passed: error <= tolerance,
            note: None,
        });
    }

    fn skip(&mut self, check: &str, tolerance: f64, why: String) {
        self.rows.push(CheckRow {
            check: check.into(),
            case: self.case,
            n: self.n,
            error: None,
            tolerance,
            passed: true,
            note: Some(why),
        });
    }
}

/// Runs every comparison available at `order` on each dataset. At order 0
/// only likelihood-level checks run.
pub fn run_checks<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    datasets: &[Vec<Observation>],
    order: usize,
    tol: &Tolerances,
) -> Result<CheckReport> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!("order must be 0, 1 or 2, got {order}")));
    }
    let q = model.n_params();
    let fd = OracleConfig::richardson();
    let mut rows = Vec::new();
    for (case, data) in datasets.iter().enumerate() {
        let mut out = Rows {
            rows: &mut rows,
            case,
            n: data.len(),
        };
        let rep = evaluate_with(model, theta, data, EvalOptions::order(order).with_increments())?;

        match pathsum_loglik(model, theta, data, &OracleConfig::default()) {
            Ok(oracle) => out.push("likelihood_vs_pathsum", (rep.loglik - oracle).exp_m1().abs(), tol.likelihood),
            Err(Error::OracleLimit(why)) => out.skip("likelihood_vs_pathsum", tol.likelihood, why),
            Err(e) => return Err(e),
        }

        let table = std::sync::Arc::new(MultiIndexTable::new(q, order)?);
        match naive_unscaled_product(model, theta, data, &table) {
            Ok(naive) => {
                let law = crate::model::stationary_law_with_table(model, theta, &table)?;
                let stack = forward_pass(model, theta, data, table.clone(), law.pi(), |_| Ok(()))?;
                let err = naive
                    .iter()
                    .enumerate()
                    .map(|(l, nb)| (stack.unscaled(l) - nb).amax() / nb.amax().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                out.push("scaled_vs_naive", err, tol.naive);
            }
            Err(e @ Error::Underflow { .. }) => out.skip("scaled_vs_naive", tol.naive, e.to_string()),
            Err(e) => return Err(e),
        }

        let inc = rep.increments.as_ref().expect("increments requested");
        out.push("telescoping_loglik", rel_err(inc.sum_g0(), rep.loglik), tol.telescoping);

        if order >= 1 {
            let score = rep.score.clone().unwrap_or_default();
            out.push("telescoping_score", max_rel(&inc.sum_g1(), &score), tol.telescoping);
            let g = fd_gradient(|t| Ok(evaluate(model, t, data, 0)?.loglik), theta, &fd)?;
            out.push("score_vs_fd", max_rel(&score, &g), tol.score);
        }
        if order >= 2 {
            let h: Vec<f64> = rep.hessian.clone().unwrap_or_default().concat();
            out.push("telescoping_hessian", max_rel(&inc.sum_g2().concat(), &h), tol.telescoping);
            let jac = fd_jacobian(|t| Ok(evaluate(model, t, data, 1)?.score.unwrap_or_default()), theta, &fd)?;
            out.push("hessian_vs_fd", max_rel(&h, &jac.concat()), tol.hessian);
            out.push("hessian_symmetry", rep.hessian_asymmetry.unwrap_or(0.0), tol.symmetry);
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(CheckReport { order, rows, passed })
}
