//! Finite-state models: transition kernel, emission density, their
//! θ-derivatives, and the stationary law with its derivatives.
//!
//! Conventions used throughout the crate:
//!
//! * The transition kernel is returned row-stochastic, `K[y][x] = p_θ(y → x)`.
//! * The step operator for observation `ξ_j` has entry
//!   `(x, y) = p_θ(y → x) · f(ξ_j; θ | x, ξ_{j−1})`, i.e. the emission
//!   conditions on the destination state.
//! * Observations are indexed `ξ_0 … ξ_n`. The first one has no predecessor
//!   and is scored with the family's marginal emission; its operator is the
//!   diagonal `diag(f(ξ_0; θ | x))` applied to the initial law.

mod affine;
mod builtin;
pub mod jet;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{MultiIndex, MultiIndexTable};

pub use affine::{AffineExpr, ExprSpec};
pub use builtin::{
    builtin_model, BuiltinModel, DiscreteEmissionSpec, Family, GaussianEmissionSpec,
    InitialLawSpec, ModelSpec, ParamSpec, SwitchingArEmissionSpec,
};

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() || values.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter names for {} values",
                names.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter {} is not finite",
                names[k]
            )));
        }
        Ok(ParameterVector { names, values })
    }

    pub fn for_model<M: Model + ?Sized>(model: &M, values: Vec<f64>) -> Result<Self> {
        ParameterVector::new(model.param_names().to_vec(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One observation `ξ_j ∈ R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn scalar(x: f64) -> Self {
        Observation(vec![x])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<f64> for Observation {
    fn from(x: f64) -> Self {
        Observation::scalar(x)
    }
}

/// Law that weights the hidden state at the first observation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// `π_θ`, which moves with θ.
    Stationary,
    /// A θ-free probability vector; all its derivatives vanish.
    Fixed(Vec<f64>),
}

/// A finite-state state-space model with θ-derivatives of its kernel and
/// emission density.
///
/// Evaluators are pure functions of their arguments and do not check the
/// admissible box; the free functions in this module do.
pub trait Model: Send + Sync {
    fn n_states(&self) -> usize;

    fn obs_dim(&self) -> usize;

    /// Highest derivative order the evaluators can supply.
    fn max_order(&self) -> usize;

    fn param_names(&self) -> &[String];

    fn admissible_box(&self) -> &[Interval];

    fn initial_law(&self) -> &InitialLaw;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// `out[label] = D^ν K(θ)` for every index of `table`, with
    /// `K[y][x] = p_θ(y → x)`.
    fn transition_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
    ) -> Result<Vec<DMatrix<f64>>>;

    /// `out[label] = D^ν f(ξ; θ | state, ξ_prev)`. `prev` is `None` only for
    /// the first observation.
    fn emission_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
        state: usize,
        obs: &Observation,
        prev: Option<&Observation>,
    ) -> Result<Vec<f64>>;

    /// Draws `ξ ~ f(·; θ | state, ξ_prev)`.
    fn sample_emission(
        &self,
        theta: &[f64],
        state: usize,
        prev: Option<&Observation>,
        rng: &mut dyn RngCore,
    ) -> Result<Observation>;
}

/// Rejects θ of the wrong length or outside the admissible box.
pub fn check_admissible<M: Model + ?Sized>(model: &M, theta: &[f64]) -> Result<()> {
    if theta.len() != model.n_params() {
        return Err(Error::DimensionMismatch(format!(
            "θ has {} entries, model expects {}",
            theta.len(),
            model.n_params()
        )));
    }
    for (coord, (&value, iv)) in theta.iter().zip(model.admissible_box()).enumerate() {
        if !value.is_finite() || !iv.contains(value) {
            return Err(Error::Inadmissible {
                coord,
                name: model.param_names()[coord].clone(),
                value,
                lower: iv.lower,
                upper: iv.upper,
            });
        }
    }
    Ok(())
}

pub fn check_order<M: Model + ?Sized>(model: &M, r: usize) -> Result<()> {
    if r > model.max_order() {
        return Err(Error::OrderTooHigh {
            requested: r,
            max: model.max_order(),
        });
    }
    Ok(())
}

/// Center of the admissible box, with infinite sides replaced by a unit offset.
pub fn box_midpoint<M: Model + ?Sized>(model: &M) -> Vec<f64> {
    model
        .admissible_box()
        .iter()
        .map(|iv| match (iv.lower.is_finite(), iv.upper.is_finite()) {
            (true, true) => 0.5 * (iv.lower + iv.upper),
            (true, false) => iv.lower + 1.0,
            (false, true) => iv.upper - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

fn single_index_table(q: usize, nu: &MultiIndex) -> Result<(MultiIndexTable, usize)> {
    if nu.dim() != q {
        return Err(Error::DimensionMismatch(format!(
            "multi-index {nu} has {} components, model has {q} parameters",
            nu.dim()
        )));
    }
    let table = MultiIndexTable::new(q, nu.order())?;
    let label = table.try_label(nu)?;
    Ok((table, label))
}

/// `D^ν K(θ)` with `K[y][x] = p_θ(y → x)`; for `ν = 0` rows sum to one.
pub fn transition_derivative<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    nu: &MultiIndex,
) -> Result<DMatrix<f64>> {
    check_admissible(model, theta)?;
    check_order(model, nu.order())?;
    let (table, label) = single_index_table(model.n_params(), nu)?;
    let mut all = model.transition_derivatives(theta, &table)?;
    Ok(all.swap_remove(label))
}

/// `D^ν f(ξ; θ | state, ξ_prev)`.
pub fn emission_derivative<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    nu: &MultiIndex,
    state: usize,
    obs: &Observation,
    prev: Option<&Observation>,
) -> Result<f64> {
    check_admissible(model, theta)?;
    check_order(model, nu.order())?;
    if state >= model.n_states() {
        return Err(Error::InvalidArgument(format!(
            "state {state} out of range for {} states",
            model.n_states()
        )));
    }
    let (table, label) = single_index_table(model.n_params(), nu)?;
    Ok(model.emission_derivatives(theta, &table, state, obs, prev)?[label])
}

/// Row-stochastic kernel at θ.
pub fn transition_matrix<M: Model + ?Sized>(model: &M, theta: &[f64]) -> Result<DMatrix<f64>> {
    transition_derivative(model, theta, &MultiIndex::zero(model.n_params()))
}

/// The stationary law `π_θ` (or the fixed initial law) and its derivatives
/// `D^ν π` for all `|ν| ≤ r`, stored by label.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    indices: Vec<MultiIndex>,
    derivs: Vec<DVector<f64>>,
}

impl StationaryLaw {
    pub fn pi(&self) -> &DVector<f64> {
        &self.derivs[0]
    }

    pub fn by_label(&self, label: usize) -> &DVector<f64> {
        &self.derivs[label]
    }

    pub fn dpi(&self, nu: &MultiIndex) -> Option<&DVector<f64>> {
        self.indices
            .iter()
            .position(|m| m == nu)
            .map(|i| &self.derivs[i])
    }

    pub fn order(&self) -> usize {
        self.indices.last().map_or(0, |m| m.order())
    }

    pub fn len(&self) -> usize {
        self.derivs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.derivs.is_empty()
    }
}

/// Whether some power of the kernel has all entries positive.
pub fn is_primitive(kernel: &DMatrix<f64>) -> bool {
    let d = kernel.nrows();
    let adj: Vec<Vec<bool>> = (0..d)
        .map(|i| (0..d).map(|j| kernel[(i, j)] > 0.0).collect())
        .collect();
    let mut reach = adj.clone();
    // Wielandt: a primitive d×d matrix has A^k > 0 for k = (d−1)² + 1
    let bound = (d - 1) * (d - 1) + 1;
    for _ in 1..bound {
        if reach.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; d]; d];
        for i in 0..d {
            for k in 0..d {
                if reach[i][k] {
                    for j in 0..d {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        reach = next;
    }
    reach.iter().all(|row| row.iter().all(|&b| b))
}

pub fn stationary_law<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    r: usize,
) -> Result<StationaryLaw> {
    let table = MultiIndexTable::new(model.n_params(), r)?;
    stationary_law_with_table(model, theta, &table)
}

/// Solves `π = Kᵗπ, 1ᵗπ = 1`, then for each `ν ≠ 0` in label order
/// `(I − Kᵗ) D^ν π = Σ_{0<μ≤ν} C(ν,μ) (D^μ K)ᵗ D^{ν−μ} π` with `1ᵗ D^ν π = 0`.
/// The last balance equation is replaced by the normalization row.
pub fn stationary_law_with_table<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    table: &MultiIndexTable,
) -> Result<StationaryLaw> {
    check_admissible(model, theta)?;
    check_order(model, table.r())?;
    let d = model.n_states();
    let indices = table.indices().to_vec();

    if let InitialLaw::Fixed(v) = model.initial_law() {
        let mut derivs = vec![DVector::zeros(d); table.len()];
        derivs[0] = DVector::from_column_slice(v);
        return Ok(StationaryLaw { indices, derivs });
    }

    let kernels = model.transition_derivatives(theta, table)?;
    let kernel = &kernels[0];
    if !is_primitive(kernel) {
        return Err(Error::Reducible(
            "transition kernel is not irreducible and aperiodic at θ".into(),
        ));
    }

    let mut system = DMatrix::<f64>::identity(d, d) - kernel.transpose();
    for j in 0..d {
        system[(d - 1, j)] = 1.0;
    }
    let lu = system.clone().lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..d).map(|i| u[(i, i)].abs()).collect();
    let max_pivot = pivots.iter().cloned().fold(0.0, f64::max);
    let min_pivot = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * max_pivot) {
        return Err(Error::Reducible(format!(
            "deflated stationarity system is singular (pivot ratio {:.3e})",
            min_pivot / max_pivot
        )));
    }

    let solve = |rhs: DVector<f64>| -> Result<DVector<f64>> {
        let mut x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Reducible("deflated stationarity system is singular".into()))?;
        // one step of iterative refinement
        let resid = &rhs - &system * &x;
        if let Some(dx) = lu.solve(&resid) {
            x += dx;
        }
        Ok(x)
    };

    let mut derivs: Vec<DVector<f64>> = Vec::with_capacity(table.len());
    let mut e_last = DVector::zeros(d);
    e_last[d - 1] = 1.0;
    derivs.push(solve(e_last)?);

    for label in 1..table.len() {
        let mut rhs = DVector::zeros(d);
        for s in table.splits(label) {
            if s.mu == 0 {
                continue;
            }
            rhs += kernels[s.mu].tr_mul(&derivs[s.rest]) * s.coeff as f64;
        }
        rhs[d - 1] = 0.0;
        derivs.push(solve(rhs)?);
    }

    if derivs.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Reducible(
            "non-finite stationary law derivative".into(),
        ));
    }
    Ok(StationaryLaw { indices, derivs })
}

#[derive(Debug, Clone, Serialize)]
pub struct C10Entry {
    pub index: Vec<u32>,
    /// `max |D^ν f|` over grid points, observation pairs and states.
    pub sup: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct C10Report {
    pub entries: Vec<C10Entry>,
    pub passed: bool,
}

/// Evenly spaced grid over the closed admissible box, `points` per axis.
/// Infinite sides are replaced by a span of 10 around the finite end.
pub fn box_grid<M: Model + ?Sized>(model: &M, points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = model
        .admissible_box()
        .iter()
        .map(|iv| {
            let (lo, hi) = match (iv.lower.is_finite(), iv.upper.is_finite()) {
                (true, true) => (iv.lower, iv.upper),
                (true, false) => (iv.lower, iv.lower + 10.0),
                (false, true) => (iv.upper - 10.0, iv.upper),
                (false, false) => (-10.0, 10.0),
            };
            if points <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..points)
                    .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut p = p.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    grid
}

/// Suprema of `|D^ν f|` over a parameter grid, observation pairs and states.
/// Grid points are not required to be admissible; evaluation errors and
/// non-finite values count as failures.
pub fn validate_c10<M: Model + ?Sized>(
    model: &M,
    grid: &[Vec<f64>],
    obs_pairs: &[(Observation, Option<Observation>)],
    r: usize,
) -> Result<C10Report> {
    check_order(model, r)?;
    let table = MultiIndexTable::new(model.n_params(), r)?;
    let mut sup = vec![0.0f64; table.len()];
    let mut finite = vec![true; table.len()];
    for theta in grid {
        for (obs, prev) in obs_pairs {
            for state in 0..model.n_states() {
                match model.emission_derivatives(theta, &table, state, obs, prev.as_ref()) {
                    Ok(vals) => {
                        for (i, v) in vals.iter().enumerate() {
                            if v.is_finite() {
                                sup[i] = sup[i].max(v.abs());
                            } else {
                                finite[i] = false;
                                sup[i] = f64::INFINITY;
                            }
                        }
                    }
                    Err(_) => finite.iter_mut().for_each(|f| *f = false),
                }
            }
        }
    }
    let entries: Vec<C10Entry> = table
        .indices()
        .iter()
        .zip(sup.iter().zip(&finite))
        .map(|(nu, (&s, &f))| C10Entry {
            index: nu.exponents().to_vec(),
            sup: s,
            finite: f,
        })
        .collect();
    let passed = entries.iter().all(|e| e.finite);
    Ok(C10Report { entries, passed })
}
