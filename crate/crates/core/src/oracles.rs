//! Brute-force reference computations.
//!
//! Nothing here calls into `recursion` or `likelihood`: the path sum and the
//! naive product rebuild every quantity from the model evaluators with their
//! own arithmetic, so agreement with the core is a real check. The
//! conventions (destination-state emission, diagonal first operator) are
//! restated here rather than shared.

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialLaw, Interval, Model, Observation};
use crate::multiindex::{multinomial_coeff, MultiIndexTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    Central,
    /// Central differences at `h` and `h/2`, extrapolated as `(4 D(h/2) − D(h)) / 3`.
    Richardson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub fd_step: f64,
    pub fd_scheme: FdScheme,
    pub max_bruteforce_n: usize,
    pub max_bruteforce_d: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            fd_step: 1e-5,
            fd_scheme: FdScheme::Central,
            max_bruteforce_n: 12,
            max_bruteforce_d: 5,
        }
    }
}

const MAX_PATHS: f64 = 1e9;

impl OracleConfig {
    pub fn richardson() -> Self {
        OracleConfig {
            fd_scheme: FdScheme::Richardson,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "fd_step must be positive, got {}",
                self.fd_step
            )));
        }
        let paths = (self.max_bruteforce_d as f64).powi(self.max_bruteforce_n as i32);
        if paths >= MAX_PATHS {
            return Err(Error::InvalidArgument(format!(
                "brute-force limits allow {paths:e} paths, more than {MAX_PATHS:e}"
            )));
        }
        Ok(())
    }
}

fn log_sum_exp_push(max: &mut f64, acc: &mut f64, x: f64) {
    if x == f64::NEG_INFINITY {
        return;
    }
    if x <= *max {
        *acc += (x - *max).exp();
    } else {
        *acc = *acc * (*max - x).exp() + 1.0;
        *max = x;
    }
}

// Stationary law of K by power iteration on the lazy chain (I + K) / 2.
fn power_iteration_law(kernel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = kernel.nrows();
    let mut pi = vec![1.0 / d as f64; d];
    for _ in 0..200_000 {
        let mut next = vec![0.0; d];
        for y in 0..d {
            for x in 0..d {
                next[x] += 0.5 * pi[y] * kernel[(y, x)];
            }
            next[y] += 0.5 * pi[y];
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        let diff = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if diff < 1e-16 {
            return Ok(pi);
        }
    }
    // converged to rounding noise rather than the threshold
    Ok(pi)
}

/// Log of `Σ_{x_0..x_n} π(x_0) f(ξ_0|x_0) Π_{j≥1} p(x_{j−1} → x_j) f(ξ_j|x_j, ξ_{j−1})`,
/// by explicit enumeration of all `D^{n+1}` hidden paths.
pub fn pathsum_loglik<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    config: &OracleConfig,
) -> Result<f64> {
    config.validate()?;
    let d = model.n_states();
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty data".into()));
    }
    if n > config.max_bruteforce_n || d > config.max_bruteforce_d {
        return Err(Error::OracleLimit(format!(
            "path sum over {n} observations and {d} states exceeds limits ({}, {})",
            config.max_bruteforce_n, config.max_bruteforce_d
        )));
    }
    let table = MultiIndexTable::new(model.n_params(), 0)?;
    let kernel = model.transition_derivatives(theta, &table)?.swap_remove(0);
    let init: Vec<f64> = match model.initial_law() {
        InitialLaw::Stationary => power_iteration_law(&kernel)?,
        InitialLaw::Fixed(v) => v.clone(),
    };

    let mut log_f = vec![vec![0.0; d]; n];
    for (j, xi) in data.iter().enumerate() {
        let prev = if j == 0 { None } else { Some(&data[j - 1]) };
        for (x, lf) in log_f[j].iter_mut().enumerate() {
            *lf = model.emission_derivatives(theta, &table, x, xi, prev)?[0].ln();
        }
    }
    let log_p = kernel.map(f64::ln);
    let log_init: Vec<f64> = init.iter().map(|p| p.ln()).collect();

    let mut path = vec![0usize; n];
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    loop {
        let mut lw = log_init[path[0]] + log_f[0][path[0]];
        for j in 1..n {
            lw += log_p[(path[j - 1], path[j])] + log_f[j][path[j]];
        }
        if lw.is_nan() {
            return Err(Error::Domain("NaN path weight".into()));
        }
        log_sum_exp_push(&mut max, &mut acc, lw);

        // odometer
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(max + acc.ln());
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < d {
                break;
            }
            path[pos] = 0;
        }
    }
}

pub fn pathsum_likelihood<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    config: &OracleConfig,
) -> Result<f64> {
    Ok(pathsum_loglik(model, theta, data, config)?.exp())
}

fn shifted(theta: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    t[k] += h;
    t
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("non-finite value in {what}")))
    }
}

/// Central (or Richardson-extrapolated) difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, theta: &[f64], config: &OracleConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    config.validate()?;
    let central = |k: usize, h: f64| -> Result<f64> {
        let up = finite(f(&shifted(theta, k, h))?, "fd_gradient")?;
        let dn = finite(f(&shifted(theta, k, -h))?, "fd_gradient")?;
        Ok((up - dn) / (2.0 * h))
    };
    (0..theta.len())
        .map(|k| {
            let h = config.fd_step;
            match config.fd_scheme {
                FdScheme::Central => central(k, h),
                FdScheme::Richardson => Ok((4.0 * central(k, h / 2.0)? - central(k, h)?) / 3.0),
            }
        })
        .collect()
}

/// `J[i][k] = ∂f_i / ∂θ_k` by differences of a vector-valued function.
pub fn fd_jacobian<F>(f: F, theta: &[f64], config: &OracleConfig) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let q = theta.len();
    let central = |k: usize, h: f64| -> Result<Vec<f64>> {
        let up = f(&shifted(theta, k, h))?;
        let dn = f(&shifted(theta, k, -h))?;
        up.iter()
            .zip(&dn)
            .map(|(a, b)| finite((a - b) / (2.0 * h), "fd_jacobian"))
            .collect()
    };
    let mut cols = Vec::with_capacity(q);
    for k in 0..q {
        let h = config.fd_step;
        let col = match config.fd_scheme {
            FdScheme::Central => central(k, h)?,
            FdScheme::Richardson => {
                let half = central(k, h / 2.0)?;
                let full = central(k, h)?;
                half.iter()
                    .zip(&full)
                    .map(|(a, b)| (4.0 * a - b) / 3.0)
                    .collect()
            }
        };
        cols.push(col);
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok((0..m).map(|i| (0..q).map(|k| cols[k][i]).collect()).collect())
}

/// Second central differences of a scalar function, symmetrized. Uses step
/// `10 · fd_step`, since the rounding error scales with `1 / h²`.
pub fn fd_hessian<F>(f: F, theta: &[f64], config: &OracleConfig) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    config.validate()?;
    let q = theta.len();
    let eval = |dk: (usize, f64), dl: (usize, f64)| -> Result<f64> {
        let mut t = theta.to_vec();
        t[dk.0] += dk.1;
        t[dl.0] += dl.1;
        finite(f(&t)?, "fd_hessian")
    };
    let second = |k: usize, l: usize, h: f64| -> Result<f64> {
        Ok((eval((k, h), (l, h))? - eval((k, h), (l, -h))? - eval((k, -h), (l, h))?
            + eval((k, -h), (l, -h))?)
            / (4.0 * h * h))
    };
    let h = 10.0 * config.fd_step;
    let mut out = vec![vec![0.0; q]; q];
    for k in 0..q {
        for l in k..q {
            let v = match config.fd_scheme {
                FdScheme::Central => second(k, l, h)?,
                FdScheme::Richardson => (4.0 * second(k, l, h / 2.0)? - second(k, l, h)?) / 3.0,
            };
            out[k][l] = v;
            out[l][k] = v;
        }
    }
    Ok(out)
}

/// The literal unnormalized product `W_n = A_n ∘ ⋯ ∘ A_1 ∘ W_0`, built as a
/// dense `(K·D) × (K·D)` matrix per step. Returns the `K` blocks of `W_n`.
/// Fails with [`Error::Underflow`] once the likelihood-bearing block leaves
/// the normal floating-point range.
pub fn naive_unscaled_product<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    table: &MultiIndexTable,
) -> Result<Vec<DMatrix<f64>>> {
    let d = model.n_states();
    let k = table.len();
    let (first, rest) = data
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty data".into()))?;
    let kernels = model.transition_derivatives(theta, table)?;

    let emissions = |xi: &Observation, prev: Option<&Observation>| -> Result<Vec<Vec<f64>>> {
        (0..d)
            .map(|x| model.emission_derivatives(theta, table, x, xi, prev))
            .collect()
    };

    // stacked W: (K·D) × D
    let f0 = emissions(first, None)?;
    let mut w = DMatrix::zeros(k * d, d);
    for nu in 0..k {
        for x in 0..d {
            w[(nu * d + x, x)] = f0[x][nu];
        }
    }

    let mut prev = first;
    for (step, xi) in rest.iter().enumerate() {
        let f = emissions(xi, Some(prev))?;
        // D^μ P(ξ)(x, y) = Σ_{α ≤ μ} C(μ, α) D^α f(ξ|x) D^{μ−α} p(y → x)
        let mut ops = vec![DMatrix::zeros(d, d); k];
        for (mu_label, mu) in table.indices().iter().enumerate() {
            for (a_label, alpha) in table.indices().iter().enumerate() {
                if let Some(beta) = mu.checked_sub(alpha) {
                    let c = multinomial_coeff(mu, alpha)? as f64;
                    let b_label = table.try_label(&beta)?;
                    for x in 0..d {
                        for y in 0..d {
                            ops[mu_label][(x, y)] +=
                                c * f[x][a_label] * kernels[b_label][(y, x)];
                        }
                    }
                }
            }
        }
        let mut big = DMatrix::zeros(k * d, k * d);
        for (i, nu_i) in table.indices().iter().enumerate() {
            for (j, nu_j) in table.indices().iter().enumerate() {
                if let Some(nu_k) = nu_i.checked_sub(nu_j) {
                    let c = multinomial_coeff(nu_i, &nu_k)? as f64;
                    let op = &ops[table.try_label(&nu_k)?];
                    big.view_mut((i * d, j * d), (d, d)).copy_from(&(op * c));
                }
            }
        }
        w = big * w;
        let m = w.view((0, 0), (d, d)).sum();
        if !m.is_finite() {
            return Err(Error::NonFinite {
                step: step + 1,
                what: "unscaled product",
            });
        }
        if m < f64::MIN_POSITIVE {
            return Err(Error::Underflow { step: step + 1 });
        }
        prev = xi;
    }
    Ok((0..k)
        .map(|nu| w.view((nu * d, 0), (d, d)).into_owned())
        .collect())
}

/// Wraps a model and adds `delta` to every first-order emission derivative.
/// Used to check that the oracle comparisons catch a wrong derivative.
pub struct FaultyModel<M> {
    pub inner: M,
    pub delta: f64,
}

impl<M: Model> Model for FaultyModel<M> {
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    fn param_names(&self) -> &[String] {
        self.inner.param_names()
    }

    fn admissible_box(&self) -> &[Interval] {
        self.inner.admissible_box()
    }

    fn initial_law(&self) -> &InitialLaw {
        self.inner.initial_law()
    }

    fn transition_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
    ) -> Result<Vec<DMatrix<f64>>> {
        self.inner.transition_derivatives(theta, table)
    }

    fn emission_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
        state: usize,
        obs: &Observation,
        prev: Option<&Observation>,
    ) -> Result<Vec<f64>> {
        let mut out = self
            .inner
            .emission_derivatives(theta, table, state, obs, prev)?;
        for (label, v) in out.iter_mut().enumerate() {
            if table.index(label).order() == 1 {
                *v += self.delta;
            }
        }
        Ok(out)
    }

    fn sample_emission(
        &self,
        theta: &[f64],
        state: usize,
        prev: Option<&Observation>,
        rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        self.inner.sample_emission(theta, state, prev, rng)
    }
}
