//! The derivative-augmented forward recursion `W_n = A_n ∘ W_{n−1}`.
//!
//! `W_n` holds one `D × D` block per multi-index `ν` with `|ν| ≤ r`; block
//! `ν` is `D^ν M_n` where `M_n` is the product of step operators up to
//! observation `n`. The step block `A_n` is the `K × K` array whose entry
//! `(i, j)` is `C(ν_i, ν_i − ν_j) · D^{ν_i − ν_j} P_θ(ξ_n)` whenever
//! `ν_j ≤ ν_i` and a structural zero otherwise. Only the nonzero entries are
//! stored, as the list of step-operator derivatives plus the table's splits.
//!
//! The stack is kept normalized: after every step all blocks are divided by
//! the likelihood mass `1ᵗ W^0 π` and its log is added to `log_scale`, so the
//! true `W_n^ν` is `exp(log_scale) · blocks[ν]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_admissible, check_order, Model, Observation};
use crate::multiindex::MultiIndexTable;

/// `Σ_x v(x)`. Signed, so it is linear on derivative vectors.
pub fn mass(v: &DVector<f64>) -> f64 {
    v.sum()
}

/// `mass(W v)` without forming `W v`.
pub fn mass_of(w: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (j, vj) in v.iter().enumerate() {
        total += w.column(j).sum() * vj;
    }
    total
}

/// Per-observation block `A_n`, stored as `D^μ P_θ(ξ_n)` for every label μ.
#[derive(Debug, Clone)]
pub struct StepBlock {
    table: Arc<MultiIndexTable>,
    operators: Vec<DMatrix<f64>>,
}

impl StepBlock {
    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    /// `D^ν P_θ(ξ)` for the index with the given label.
    pub fn operator(&self, label: usize) -> &DMatrix<f64> {
        &self.operators[label]
    }

    pub fn is_structural_zero(&self, i: usize, j: usize) -> bool {
        !self.table.index(j).le(self.table.index(i))
    }

    /// Entry `a^{ij}`, or `None` for a structural zero.
    pub fn block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        self.table
            .splits(i)
            .iter()
            .find(|s| s.rest == j)
            .map(|s| &self.operators[s.mu] * s.coeff as f64)
    }

    /// The full `(K·D) × (K·D)` matrix with structural zeros filled in.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.table.len();
        let d = self.operators[0].nrows();
        let mut out = DMatrix::zeros(k * d, k * d);
        for i in 0..k {
            for s in self.table.splits(i) {
                out.view_mut((i * d, s.rest * d), (d, d))
                    .copy_from(&(&self.operators[s.mu] * s.coeff as f64));
            }
        }
        out
    }
}

/// Normalized `W_n`.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    table: Arc<MultiIndexTable>,
    blocks: Vec<DMatrix<f64>>,
    log_scale: f64,
    step_index: usize,
}

impl DerivativeStack {
    pub fn new(
        table: Arc<MultiIndexTable>,
        blocks: Vec<DMatrix<f64>>,
        log_scale: f64,
        step_index: usize,
    ) -> Result<Self> {
        if blocks.len() != table.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for a table of {} indices",
                blocks.len(),
                table.len()
            )));
        }
        Ok(DerivativeStack {
            table,
            blocks,
            log_scale,
            step_index,
        })
    }

    /// `blocks[0] = I`, all derivative blocks zero.
    pub fn identity(table: Arc<MultiIndexTable>, d: usize) -> Self {
        let mut blocks = vec![DMatrix::zeros(d, d); table.len()];
        blocks[0] = DMatrix::identity(d, d);
        DerivativeStack {
            table,
            blocks,
            log_scale: 0.0,
            step_index: 0,
        }
    }

    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    pub fn shared_table(&self) -> &Arc<MultiIndexTable> {
        &self.table
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, label: usize) -> &DMatrix<f64> {
        &self.blocks[label]
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn n_states(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// `exp(log_scale) · blocks[label]`; overflows or underflows for long runs.
    pub fn unscaled(&self, label: usize) -> DMatrix<f64> {
        &self.blocks[label] * self.log_scale.exp()
    }

    /// Multiplies every block by `c > 0` and compensates in `log_scale`.
    pub fn rescale(&mut self, c: f64) {
        for b in &mut self.blocks {
            *b *= c;
        }
        self.log_scale -= c.ln();
    }

    /// Divides all blocks by `s = mass(blocks[0] · pi)` and returns `ln s`.
    pub fn normalize(&mut self, pi: &DVector<f64>) -> Result<f64> {
        let s = mass_of(&self.blocks[0], pi);
        let step = self.step_index;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: "likelihood mass",
            });
        }
        if s <= 0.0 {
            return Err(Error::ZeroMass { step });
        }
        let inv = 1.0 / s;
        for b in &mut self.blocks {
            *b *= inv;
        }
        if self
            .blocks
            .iter()
            .any(|b| b.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite {
                step,
                what: "derivative blocks",
            });
        }
        let ln_s = s.ln();
        self.log_scale += ln_s;
        Ok(ln_s)
    }
}

/// Builds step blocks for one model at one θ. The kernel derivatives depend
/// only on θ and are computed once.
pub struct StepBuilder<'a, M: Model + ?Sized> {
    model: &'a M,
    theta: &'a [f64],
    table: Arc<MultiIndexTable>,
    // D^ν Kᵗ by label: entry (x, y) = D^ν p_θ(y → x)
    kernels_t: Vec<DMatrix<f64>>,
}

impl<'a, M: Model + ?Sized> StepBuilder<'a, M> {
    pub fn new(model: &'a M, theta: &'a [f64], table: Arc<MultiIndexTable>) -> Result<Self> {
        check_admissible(model, theta)?;
        check_order(model, table.r())?;
        if table.q() != model.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "table has q = {}, model has {} parameters",
                table.q(),
                model.n_params()
            )));
        }
        let kernels_t = model
            .transition_derivatives(theta, &table)?
            .into_iter()
            .map(|k| k.transpose())
            .collect();
        Ok(StepBuilder {
            model,
            theta,
            table,
            kernels_t,
        })
    }

    pub fn table(&self) -> &Arc<MultiIndexTable> {
        &self.table
    }

    fn check_obs(&self, obs: &Observation) -> Result<()> {
        if obs.dim() != self.model.obs_dim() {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} components, model expects {}",
                obs.dim(),
                self.model.obs_dim()
            )));
        }
        Ok(())
    }

    // emissions[x][label] = D^ν f(ξ; θ | x, ξ_prev)
    fn emissions(&self, xi: &Observation, prev: Option<&Observation>) -> Result<Vec<Vec<f64>>> {
        self.check_obs(xi)?;
        (0..self.model.n_states())
            .map(|x| {
                self.model
                    .emission_derivatives(self.theta, &self.table, x, xi, prev)
            })
            .collect()
    }

    /// `D^μ P_θ(ξ)` for every label, by the product rule over `p` and `f`:
    /// `Σ_{α ≤ μ} C(μ, α) diag(D^α f) (D^{μ−α} K)ᵗ`.
    pub fn step_operators(
        &self,
        xi: &Observation,
        prev: &Observation,
    ) -> Result<Vec<DMatrix<f64>>> {
        let f = self.emissions(xi, Some(prev))?;
        let d = self.model.n_states();
        let mut ops = Vec::with_capacity(self.table.len());
        for mu in 0..self.table.len() {
            let mut op = DMatrix::zeros(d, d);
            for s in self.table.splits(mu) {
                let kt = &self.kernels_t[s.rest];
                let c = s.coeff as f64;
                for x in 0..d {
                    let fx = c * f[x][s.mu];
                    if fx != 0.0 {
                        for y in 0..d {
                            op[(x, y)] += fx * kt[(x, y)];
                        }
                    }
                }
            }
            ops.push(op);
        }
        Ok(ops)
    }

    /// `D^μ P_θ(ξ_0) = diag(D^μ f(ξ_0; θ | ·))`.
    pub fn initial_operators(&self, xi0: &Observation) -> Result<Vec<DMatrix<f64>>> {
        let f = self.emissions(xi0, None)?;
        let d = self.model.n_states();
        Ok((0..self.table.len())
            .map(|mu| DMatrix::from_fn(d, d, |x, y| if x == y { f[x][mu] } else { 0.0 }))
            .collect())
    }

    pub fn step_block(&self, xi: &Observation, prev: &Observation) -> Result<StepBlock> {
        Ok(StepBlock {
            table: self.table.clone(),
            operators: self.step_operators(xi, prev)?,
        })
    }

    /// `W_0^ν = D^ν P_θ(ξ_0)`, unnormalized.
    pub fn init_stack(&self, xi0: &Observation) -> Result<DerivativeStack> {
        Ok(DerivativeStack {
            table: self.table.clone(),
            blocks: self.initial_operators(xi0)?,
            log_scale: 0.0,
            step_index: 0,
        })
    }

    /// Builds the block for `ξ`, composes, then renormalizes against `pi`.
    pub fn advance(
        &self,
        stack: &DerivativeStack,
        xi: &Observation,
        prev: &Observation,
        pi: &DVector<f64>,
    ) -> Result<DerivativeStack> {
        let block = self.step_block(xi, prev)?;
        let mut next = compose(&block, stack)?;
        next.normalize(pi)?;
        Ok(next)
    }
}

/// `W ↦ A ∘ W`: `new[i] = Σ_j a^{ij} · W[j]` over the nonzero entries.
pub fn compose(block: &StepBlock, stack: &DerivativeStack) -> Result<DerivativeStack> {
    let table = &block.table;
    if table.len() != stack.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "step block has K = {}, stack has K = {}",
            table.len(),
            stack.blocks.len()
        )));
    }
    let d = block.operators[0].nrows();
    if stack.n_states() != d {
        return Err(Error::DimensionMismatch(format!(
            "step block is {d}×{d}, stack blocks are {0}×{0}",
            stack.n_states()
        )));
    }
    let mut blocks = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        let mut acc = DMatrix::zeros(d, d);
        for s in table.splits(i) {
            acc.gemm(
                s.coeff as f64,
                &block.operators[s.mu],
                &stack.blocks[s.rest],
                1.0,
            );
        }
        blocks.push(acc);
    }
    Ok(DerivativeStack {
        table: stack.table.clone(),
        blocks,
        log_scale: stack.log_scale,
        step_index: stack.step_index + 1,
    })
}

pub fn build_step_block<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    table: Arc<MultiIndexTable>,
    xi: &Observation,
    prev: &Observation,
) -> Result<StepBlock> {
    StepBuilder::new(model, theta, table)?.step_block(xi, prev)
}

pub fn init_stack<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    table: Arc<MultiIndexTable>,
    xi0: &Observation,
) -> Result<DerivativeStack> {
    StepBuilder::new(model, theta, table)?.init_stack(xi0)
}

pub fn advance<M: Model + ?Sized>(
    stack: &DerivativeStack,
    model: &M,
    theta: &[f64],
    xi: &Observation,
    prev: &Observation,
    pi: &DVector<f64>,
) -> Result<DerivativeStack> {
    StepBuilder::new(model, theta, stack.table.clone())?.advance(stack, xi, prev, pi)
}

/// Runs the normalized recursion over `data`, calling `visit` on every stack
/// `W_0, W_1, …, W_n`, and returns the last one.
pub fn forward_pass<M, F>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    table: Arc<MultiIndexTable>,
    pi: &DVector<f64>,
    mut visit: F,
) -> Result<DerivativeStack>
where
    M: Model + ?Sized,
    F: FnMut(&DerivativeStack) -> Result<()>,
{
    let (first, rest) = data
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("at least one observation is required".into()))?;
    let builder = StepBuilder::new(model, theta, table)?;
    let mut stack = builder.init_stack(first)?;
    stack.normalize(pi)?;
    visit(&stack)?;
    let mut prev = first;
    for xi in rest {
        stack = builder.advance(&stack, xi, prev, pi)?;
        visit(&stack)?;
        prev = xi;
    }
    Ok(stack)
}
