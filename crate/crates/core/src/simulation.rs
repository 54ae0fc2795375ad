//! Path simulation and empirical ergodic probes.
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with `seed_from_u64`. Replication `r` at grid position `g` of a
//! diagnostics run uses the master seed with stream `(g << 32) | r`, so each
//! replication is reproducible on its own and independent of thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::evaluate;
use crate::model::{check_admissible, stationary_law, InitialLaw, Model, Observation};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPath {
    pub states: Vec<usize>,
    pub observations: Vec<Observation>,
    pub seed: u64,
    pub theta_used: Vec<f64>,
}

impl SimulatedPath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_index(probs: impl Iterator<Item = f64>, rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Simulates `n` observations `ξ_0 … ξ_{n−1}` with `X_0` drawn from the
/// initial law.
pub fn simulate_with_rng<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<(Vec<usize>, Vec<Observation>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be at least 1".into()));
    }
    check_admissible(model, theta)?;
    let init: Vec<f64> = match model.initial_law() {
        InitialLaw::Stationary => stationary_law(model, theta, 0)?.pi().iter().copied().collect(),
        InitialLaw::Fixed(v) => v.clone(),
    };
    let kernel = crate::model::transition_matrix(model, theta)?;

    let mut states = Vec::with_capacity(n);
    let mut obs: Vec<Observation> = Vec::with_capacity(n);
    let mut x = sample_index(init.iter().copied(), rng);
    states.push(x);
    obs.push(model.sample_emission(theta, x, None, rng)?);
    for _ in 1..n {
        x = sample_index(kernel.row(x).iter().copied(), rng);
        let xi = model.sample_emission(theta, x, obs.last(), rng)?;
        states.push(x);
        obs.push(xi);
    }
    Ok((states, obs))
}

pub fn simulate<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    n: usize,
    seed: u64,
) -> Result<SimulatedPath> {
    let mut rng = rng_for(seed, 0);
    let (states, observations) = simulate_with_rng(model, theta, n, &mut rng)?;
    Ok(SimulatedPath {
        states,
        observations,
        seed,
        theta_used: theta.to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub n: usize,
    pub replications: usize,
    pub mean_loglik_per_obs: f64,
    pub sd_loglik_per_obs: f64,
    pub mean_score_per_obs: Vec<f64>,
    /// `sqrt(mean_r ‖score_r / n‖²)`.
    pub rms_score_per_obs: f64,
    pub mean_info_per_obs: Vec<Vec<f64>>,
    pub se_info_per_obs: Vec<Vec<f64>>,
    /// Mean of `score scoreᵗ / n`.
    pub mean_outer_per_obs: Vec<Vec<f64>>,
    /// Mean of `(score scoreᵗ − observed_info) / n` and its standard error.
    pub identity_diff: Vec<Vec<f64>>,
    pub identity_se: Vec<Vec<f64>>,
    /// `max |identity_diff / identity_se|`.
    pub identity_max_z: f64,
    pub identity_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeEntry {
    pub n_from: usize,
    pub n_to: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub seed: u64,
    pub theta: Vec<f64>,
    pub replications: usize,
    pub rows: Vec<DiagnosticsRow>,
    /// Log-log slopes of `rms_score_per_obs` between consecutive grid sizes.
    pub score_slopes: Vec<SlopeEntry>,
    /// Least-squares slope over the whole grid.
    pub score_slope_fit: f64,
}

struct Replicate {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<Vec<f64>>,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// For every `n` in the grid, simulates `replications` paths at `theta_true`
/// and summarizes the per-observation log-likelihood, score and observed
/// information, plus the information identity `E[s sᵗ] = E[−H]`.
pub fn ergodic_diagnostics<M: Model + ?Sized>(
    model: &M,
    theta_true: &[f64],
    n_grid: &[usize],
    replications: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    check_admissible(model, theta_true)?;
    if replications < 2 {
        return Err(Error::InvalidArgument(
            "at least two replications are needed for standard errors".into(),
        ));
    }
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n grid must hold positive lengths".into()));
    }
    let q = model.n_params();
    let mut rows = Vec::with_capacity(n_grid.len());

    for (g, &n) in n_grid.iter().enumerate() {
        let reps: Vec<Replicate> = (0..replications)
            .into_par_iter()
            .map(|r| -> Result<Replicate> {
                let mut rng = rng_for(seed, ((g as u64) << 32) | r as u64);
                let (_, obs) = simulate_with_rng(model, theta_true, n, &mut rng)?;
                let rep = evaluate(model, theta_true, &obs, 2)?;
                Ok(Replicate {
                    loglik: rep.loglik,
                    score: rep.score.unwrap_or_default(),
                    info: rep.observed_info.unwrap_or_default(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let nf = n as f64;
        let rf = replications as f64;
        let (mean_ll, sd_ll) = mean_sd(reps.iter().map(|r| r.loglik / nf));
        let mean_score: Vec<f64> = (0..q)
            .map(|k| reps.iter().map(|r| r.score[k] / nf).sum::<f64>() / rf)
            .collect();
        let rms = (reps
            .iter()
            .map(|r| r.score.iter().map(|s| (s / nf).powi(2)).sum::<f64>())
            .sum::<f64>()
            / rf)
            .sqrt();

        let mut mean_info = vec![vec![0.0; q]; q];
        let mut se_info = vec![vec![0.0; q]; q];
        let mut mean_outer = vec![vec![0.0; q]; q];
        let mut diff = vec![vec![0.0; q]; q];
        let mut diff_se = vec![vec![0.0; q]; q];
        let mut max_z: f64 = 0.0;
        for k in 0..q {
            for l in 0..q {
                let (mi, si) = mean_sd(reps.iter().map(|r| r.info[k][l] / nf));
                mean_info[k][l] = mi;
                se_info[k][l] = si / rf.sqrt();
                mean_outer[k][l] =
                    reps.iter().map(|r| r.score[k] * r.score[l] / nf).sum::<f64>() / rf;
                let (md, sd) =
                    mean_sd(reps.iter().map(|r| (r.score[k] * r.score[l] - r.info[k][l]) / nf));
                diff[k][l] = md;
                diff_se[k][l] = sd / rf.sqrt();
                let z = if diff_se[k][l] > 0.0 {
                    md.abs() / diff_se[k][l]
                } else if md == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_z = max_z.max(z);
            }
        }
        rows.push(DiagnosticsRow {
            n,
            replications,
            mean_loglik_per_obs: mean_ll,
            sd_loglik_per_obs: sd_ll,
            mean_score_per_obs: mean_score,
            rms_score_per_obs: rms,
            mean_info_per_obs: mean_info,
            se_info_per_obs: se_info,
            mean_outer_per_obs: mean_outer,
            identity_diff: diff,
            identity_se: diff_se,
            identity_max_z: max_z,
            identity_ok: max_z <= 3.0,
        });
    }

    let score_slopes = rows
        .windows(2)
        .map(|w| SlopeEntry {
            n_from: w[0].n,
            n_to: w[1].n,
            slope: (w[1].rms_score_per_obs.ln() - w[0].rms_score_per_obs.ln())
                / ((w[1].n as f64).ln() - (w[0].n as f64).ln()),
        })
        .collect();
    let score_slope_fit = if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.rms_score_per_obs.ln()).collect();
        ols_slope(&xs, &ys)
    } else {
        f64::NAN
    };

    Ok(DiagnosticReport {
        seed,
        theta: theta_true.to_vec(),
        replications,
        rows,
        score_slopes,
        score_slope_fit,
    })
}
