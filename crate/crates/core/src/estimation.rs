//! Maximum-likelihood estimation by Newton–Raphson on the exact score and
//! observed information.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::evaluate;
use crate::model::{check_admissible, Interval, Model, Observation, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on `‖score‖ / n`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Distance kept from finite box edges when projecting.
    pub margin: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            margin: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub score_norm: f64,
    /// `"newton"`, `"gradient"` or `"start"`.
    pub step: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: String,
    pub grad_norm: f64,
    pub n_obs: usize,
    pub observed_info_at_mle: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl FitResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,step,loglik,score_norm");
        for name in &self.theta_hat.names {
            out.push_str(&format!(",{name}"));
        }
        out.push('\n');
        for row in &self.trace {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e}",
                row.iteration, row.step, row.loglik, row.score_norm
            ));
            for t in &row.theta {
                out.push_str(&format!(",{t:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Log-likelihood with gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub loglik: f64,
    pub score: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(theta: &mut [f64], bounds: &[Interval], margin: f64) {
    for (t, b) in theta.iter_mut().zip(bounds) {
        if b.lower.is_finite() {
            *t = t.max(b.lower + margin);
        }
        if b.upper.is_finite() {
            *t = t.min(b.upper - margin);
        }
    }
}

fn info_matrix(hessian: &[Vec<f64>]) -> DMatrix<f64> {
    let q = hessian.len();
    DMatrix::from_fn(q, q, |i, j| -hessian[i][j])
}

fn std_errors(info: &DMatrix<f64>) -> Vec<f64> {
    let q = info.nrows();
    match info.clone().try_inverse() {
        Some(inv) => (0..q)
            .map(|i| {
                let v = inv[(i, i)];
                if v > 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; q],
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

// loglik may drop by rounding noise on steps that are numerically zero
fn accept(new: f64, old: f64) -> bool {
    new >= old - 8.0 * f64::EPSILON * old.abs().max(1.0)
}

fn newton_direction(eval: &SecondOrder) -> (DVector<f64>, &'static str) {
    let info = info_matrix(&eval.hessian);
    let score = DVector::from_column_slice(&eval.score);
    if let Some(chol) = info.clone().cholesky() {
        (chol.solve(&score), "newton")
    } else {
        // gradient ascent, scaled by the largest diagonal curvature
        let scale = (0..info.nrows())
            .map(|i| info[(i, i)].abs())
            .fold(1.0, f64::max);
        (score / scale, "gradient")
    }
}

/// Newton ascent with backtracking on an arbitrary second-order objective.
/// `n_obs` scales the convergence threshold.
pub fn maximize<F>(
    objective: F,
    bounds: &[Interval],
    names: Vec<String>,
    theta_init: &[f64],
    n_obs: usize,
    opts: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Result<SecondOrder>,
{
    let q = theta_init.len();
    let scale = n_obs.max(1) as f64;
    let mut theta = theta_init.to_vec();
    project(&mut theta, bounds, opts.margin);
    let mut cur = objective(&theta)?;
    let mut trace = vec![TraceRow {
        iteration: 0,
        theta: theta.clone(),
        loglik: cur.loglik,
        score_norm: norm(&cur.score),
        step: "start",
    }];

    let mut iterations = 0;
    let mut converged = false;
    let mut reason = String::from("maximum iterations reached");

    // Tries Δ, Δ/2, …; returns the accepted point.
    let line_search = |theta: &[f64], cur: &SecondOrder, dir: &DVector<f64>| -> Option<(Vec<f64>, SecondOrder)> {
        let mut step = 1.0;
        for _ in 0..=opts.max_halvings {
            let mut trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            project(&mut trial, bounds, opts.margin);
            if trial == theta {
                return None;
            }
            if let Ok(ev) = objective(&trial) {
                if ev.loglik.is_finite() && accept(ev.loglik, cur.loglik) {
                    return Some((trial, ev));
                }
            }
            step *= 0.5;
        }
        None
    };

    while iterations < opts.max_iter {
        let gnorm = norm(&cur.score);
        if gnorm / scale <= opts.tol {
            converged = true;
            reason = String::from("score tolerance reached");
            // one polishing Newton step when it does not hurt
            let (dir, kind) = newton_direction(&cur);
            if kind == "newton" {
                let mut trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + d).collect();
                project(&mut trial, bounds, opts.margin);
                if trial != theta {
                    if let Ok(ev) = objective(&trial) {
                        if accept(ev.loglik, cur.loglik) && norm(&ev.score) <= gnorm {
                            iterations += 1;
                            theta = trial;
                            cur = ev;
                            trace.push(TraceRow {
                                iteration: iterations,
                                theta: theta.clone(),
                                loglik: cur.loglik,
                                score_norm: norm(&cur.score),
                                step: kind,
                            });
                        }
                    }
                }
            }
            break;
        }
        let (dir, kind) = newton_direction(&cur);
        match line_search(&theta, &cur, &dir) {
            Some((t, ev)) => {
                iterations += 1;
                theta = t;
                cur = ev;
                trace.push(TraceRow {
                    iteration: iterations,
                    theta: theta.clone(),
                    loglik: cur.loglik,
                    score_norm: norm(&cur.score),
                    step: kind,
                });
            }
            None => {
                reason = String::from("line search stalled");
                break;
            }
        }
    }

    let info = info_matrix(&cur.hessian);
    let grad_norm = norm(&cur.score);
    if converged && q > 0 && min_eigenvalue(&info) < -1e-8 {
        converged = false;
        reason = String::from("stationary point is not a local maximum");
    }
    Ok(FitResult {
        theta_hat: ParameterVector { names, values: theta },
        loglik: cur.loglik,
        iterations,
        converged,
        reason,
        grad_norm,
        n_obs,
        observed_info_at_mle: (0..q)
            .map(|i| (0..q).map(|j| info[(i, j)]).collect())
            .collect(),
        std_errors: std_errors(&info),
        trace,
    })
}

fn second_order<M: Model + ?Sized>(
    model: &M,
    data: &[Observation],
    theta: &[f64],
) -> Result<SecondOrder> {
    let r = evaluate(model, theta, data, 2)?;
    Ok(SecondOrder {
        loglik: r.loglik,
        score: r.score.unwrap_or_default(),
        hessian: r.hessian.unwrap_or_default(),
    })
}

pub fn fit<M: Model + ?Sized>(
    model: &M,
    data: &[Observation],
    theta_init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    check_admissible(model, theta_init)?;
    maximize(
        |t| second_order(model, data, t),
        model.admissible_box(),
        model.param_names().to_vec(),
        theta_init,
        data.len(),
        opts,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub loglik: f64,
    /// Full maximizing θ at this grid value.
    pub theta: Vec<f64>,
}

/// Maximizes over all coordinates except `coord` at each grid value, warm
/// starting from the previous grid point.
pub fn profile_loglik<M: Model + ?Sized>(
    model: &M,
    data: &[Observation],
    coord: usize,
    grid: &[f64],
    theta_rest_init: &[f64],
    opts: &FitOptions,
) -> Result<Vec<ProfilePoint>> {
    let q = model.n_params();
    if coord >= q {
        return Err(Error::InvalidArgument(format!(
            "profile coordinate {coord} out of range for q = {q}"
        )));
    }
    if theta_rest_init.len() != q - 1 {
        return Err(Error::DimensionMismatch(format!(
            "profile start has {} entries, expected {}",
            theta_rest_init.len(),
            q - 1
        )));
    }
    let full = |value: f64, rest: &[f64]| -> Vec<f64> {
        let mut t = rest.to_vec();
        t.insert(coord, value);
        t
    };
    let bounds: Vec<Interval> = model
        .admissible_box()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != coord)
        .map(|(_, b)| *b)
        .collect();
    let names: Vec<String> = model
        .param_names()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != coord)
        .map(|(_, n)| n.clone())
        .collect();

    let mut rest = theta_rest_init.to_vec();
    let mut out = Vec::with_capacity(grid.len());
    for &value in grid {
        check_admissible(model, &full(value, &rest))?;
        if q == 1 {
            let ll = evaluate(model, &[value], data, 0)?.loglik;
            out.push(ProfilePoint {
                value,
                loglik: ll,
                theta: vec![value],
            });
            continue;
        }
        let res = maximize(
            |r| {
                let so = second_order(model, data, &full(value, r))?;
                let keep: Vec<usize> = (0..q).filter(|&i| i != coord).collect();
                Ok(SecondOrder {
                    loglik: so.loglik,
                    score: keep.iter().map(|&i| so.score[i]).collect(),
                    hessian: keep
                        .iter()
                        .map(|&i| keep.iter().map(|&j| so.hessian[i][j]).collect())
                        .collect(),
                })
            },
            &bounds,
            names.clone(),
            &rest,
            data.len(),
            opts,
        )?;
        rest = res.theta_hat.values.clone();
        out.push(ProfilePoint {
            value,
            loglik: res.loglik,
            theta: full(value, &rest),
        });
    }
    Ok(out)
}
