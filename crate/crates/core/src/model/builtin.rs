use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::affine::{AffineExpr, ExprSpec};
use super::jet::Jet2;
use super::{InitialLaw, Interval, Model, Observation};
use crate::error::{Error, Result};
use crate::multiindex::MultiIndexTable;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DiscreteHmm,
    GaussianHmm,
    SwitchingAr1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default = "neg_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf")]
    pub upper: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLawSpec {
    #[default]
    Stationary,
    Fixed(Vec<f64>),
}

/// Model file contents. See `docs/model-spec.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub states: usize,
    #[serde(default = "one")]
    pub obs_dim: usize,
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub initial_law: InitialLawSpec,
    pub transition: Vec<Vec<ExprSpec>>,
    pub emission: serde_json::Value,
}

/// Categorical emission over `symbols` symbols; observations are symbol indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteEmissionSpec {
    pub probs: Vec<Vec<ExprSpec>>,
}

/// `N(mean_x, sd_x²)` per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianEmissionSpec {
    pub mean: Vec<ExprSpec>,
    pub sd: Vec<ExprSpec>,
}

/// `ξ_n | x, ξ_{n−1} ~ N(coef_x ξ_{n−1} + intercept_x, sd_x²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingArEmissionSpec {
    pub coef: Vec<ExprSpec>,
    pub intercept: Vec<ExprSpec>,
    pub sd: Vec<ExprSpec>,
}

#[derive(Debug, Clone)]
enum Emission {
    Discrete { probs: Vec<Vec<AffineExpr>> },
    Gaussian { mean: Vec<AffineExpr>, sd: Vec<AffineExpr> },
    SwitchingAr { coef: Vec<AffineExpr>, intercept: Vec<AffineExpr>, sd: Vec<AffineExpr> },
}

/// One of the three built-in families, with every model quantity affine in θ.
/// Analytic derivatives are supplied up to order 2.
#[derive(Debug, Clone)]
pub struct BuiltinModel {
    family: Family,
    states: usize,
    obs_dim: usize,
    names: Vec<String>,
    bounds: Vec<Interval>,
    initial: InitialLaw,
    transition: Vec<Vec<AffineExpr>>,
    emission: Emission,
}

/// Parses and validates a model file.
pub fn builtin_model(spec: &ModelSpec) -> Result<BuiltinModel> {
    BuiltinModel::from_spec(spec)
}

fn parse_exprs(row: &[ExprSpec], names: &[String]) -> Result<Vec<AffineExpr>> {
    row.iter().map(|e| AffineExpr::from_spec(e, names)).collect()
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidSpec(format!(
            "{what} has {got} entries, expected {want}"
        )));
    }
    Ok(())
}

// Rows must sum to one identically in θ and be nonnegative over the box.
fn check_stochastic(what: &str, rows: &[Vec<AffineExpr>], bounds: &[Interval]) -> Result<()> {
    let q = bounds.len();
    for (i, row) in rows.iter().enumerate() {
        let total = row
            .iter()
            .fold(AffineExpr::constant(0.0, q), |acc, e| &acc + e);
        if (total.constant - 1.0).abs() > SUM_TOL || total.coefs.iter().any(|c| c.abs() > SUM_TOL)
        {
            return Err(Error::InvalidSpec(format!(
                "{what} row {i} does not sum to 1 for all θ"
            )));
        }
        for (j, e) in row.iter().enumerate() {
            let (lo, _) = e.range(bounds);
            if lo < -SUM_TOL {
                return Err(Error::InvalidSpec(format!(
                    "{what} entry ({i}, {j}) can be negative in the admissible box (min {lo})"
                )));
            }
        }
    }
    Ok(())
}

fn check_positive(what: &str, exprs: &[AffineExpr], bounds: &[Interval]) -> Result<()> {
    for (i, e) in exprs.iter().enumerate() {
        let (lo, hi) = e.range(bounds);
        if lo < 0.0 || hi <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "{what}[{i}] is not positive on the admissible box (range [{lo}, {hi}])"
            )));
        }
    }
    Ok(())
}

impl BuiltinModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let d = spec.states;
        if d == 0 {
            return Err(Error::InvalidSpec("states must be at least 1".into()));
        }
        if spec.params.is_empty() {
            return Err(Error::InvalidSpec("at least one parameter is required".into()));
        }
        let names: Vec<String> = spec.params.iter().map(|p| p.name.clone()).collect();
        for (i, p) in spec.params.iter().enumerate() {
            if p.name.is_empty() || p.name.parse::<f64>().is_ok() {
                return Err(Error::InvalidSpec(format!("invalid parameter name {:?}", p.name)));
            }
            if names[..i].contains(&p.name) {
                return Err(Error::InvalidSpec(format!("duplicate parameter {:?}", p.name)));
            }
            if p.lower.is_nan() || p.upper.is_nan() || p.lower >= p.upper {
                return Err(Error::InvalidSpec(format!(
                    "parameter {:?} has empty admissible interval ({}, {})",
                    p.name, p.lower, p.upper
                )));
            }
        }
        let bounds: Vec<Interval> = spec
            .params
            .iter()
            .map(|p| Interval::new(p.lower, p.upper))
            .collect();

        check_len("transition", spec.transition.len(), d)?;
        let transition = spec
            .transition
            .iter()
            .map(|row| {
                check_len("transition row", row.len(), d)?;
                parse_exprs(row, &names)
            })
            .collect::<Result<Vec<_>>>()?;
        check_stochastic("transition", &transition, &bounds)?;

        let initial = match &spec.initial_law {
            InitialLawSpec::Stationary => InitialLaw::Stationary,
            InitialLawSpec::Fixed(v) => {
                check_len("initial_law.fixed", v.len(), d)?;
                if v.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
                    || (v.iter().sum::<f64>() - 1.0).abs() > SUM_TOL
                {
                    return Err(Error::InvalidSpec(
                        "fixed initial law must be a probability vector".into(),
                    ));
                }
                InitialLaw::Fixed(v.clone())
            }
        };

        let bad_emission =
            |e: serde_json::Error| Error::InvalidSpec(format!("emission for {:?}: {e}", spec.family));
        let emission = match spec.family {
            Family::DiscreteHmm => {
                let e: DiscreteEmissionSpec =
                    serde_json::from_value(spec.emission.clone()).map_err(bad_emission)?;
                check_len("emission.probs", e.probs.len(), d)?;
                let symbols = e.probs.first().map_or(0, |r| r.len());
                if symbols == 0 {
                    return Err(Error::InvalidSpec("emission.probs needs at least one symbol".into()));
                }
                let probs = e
                    .probs
                    .iter()
                    .map(|row| {
                        check_len("emission.probs row", row.len(), symbols)?;
                        parse_exprs(row, &names)
                    })
                    .collect::<Result<Vec<_>>>()?;
                check_stochastic("emission.probs", &probs, &bounds)?;
                Emission::Discrete { probs }
            }
            Family::GaussianHmm => {
                let e: GaussianEmissionSpec =
                    serde_json::from_value(spec.emission.clone()).map_err(bad_emission)?;
                check_len("emission.mean", e.mean.len(), d)?;
                check_len("emission.sd", e.sd.len(), d)?;
                let sd = parse_exprs(&e.sd, &names)?;
                check_positive("emission.sd", &sd, &bounds)?;
                Emission::Gaussian {
                    mean: parse_exprs(&e.mean, &names)?,
                    sd,
                }
            }
            Family::SwitchingAr1 => {
                let e: SwitchingArEmissionSpec =
                    serde_json::from_value(spec.emission.clone()).map_err(bad_emission)?;
                check_len("emission.coef", e.coef.len(), d)?;
                check_len("emission.intercept", e.intercept.len(), d)?;
                check_len("emission.sd", e.sd.len(), d)?;
                let coef = parse_exprs(&e.coef, &names)?;
                for (i, c) in coef.iter().enumerate() {
                    let (lo, hi) = c.range(&bounds);
                    if lo < -1.0 || hi > 1.0 || (c.is_constant() && c.constant.abs() >= 1.0) {
                        return Err(Error::InvalidSpec(format!(
                            "emission.coef[{i}] must stay inside (-1, 1) on the admissible box"
                        )));
                    }
                }
                let sd = parse_exprs(&e.sd, &names)?;
                check_positive("emission.sd", &sd, &bounds)?;
                Emission::SwitchingAr {
                    coef,
                    intercept: parse_exprs(&e.intercept, &names)?,
                    sd,
                }
            }
        };
        if spec.obs_dim != 1 {
            return Err(Error::InvalidSpec(format!(
                "family {:?} has scalar observations (obs_dim = 1), got {}",
                spec.family, spec.obs_dim
            )));
        }

        Ok(BuiltinModel {
            family: spec.family,
            states: d,
            obs_dim: spec.obs_dim,
            names,
            bounds,
            initial,
            transition,
            emission,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("model file: {e}")))?;
        BuiltinModel::from_spec(&spec)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of symbols of a discrete emission.
    pub fn symbols(&self) -> Option<usize> {
        match &self.emission {
            Emission::Discrete { probs } => Some(probs[0].len()),
            _ => None,
        }
    }

    fn scalar_obs(&self, obs: &Observation) -> Result<f64> {
        match obs.values() {
            [x] if x.is_finite() => Ok(*x),
            [x] => Err(Error::Domain(format!("non-finite observation {x}"))),
            v => Err(Error::Domain(format!(
                "expected a scalar observation, got {} components",
                v.len()
            ))),
        }
    }

    fn symbol(&self, obs: &Observation, symbols: usize) -> Result<usize> {
        let x = self.scalar_obs(obs)?;
        if x.fract() != 0.0 || x < 0.0 || x >= symbols as f64 {
            return Err(Error::Domain(format!(
                "observation {x} is not a symbol index in 0..{symbols}"
            )));
        }
        Ok(x as usize)
    }

    // Mean and standard deviation jets of the Gaussian emission for `state`.
    fn gaussian_params(
        &self,
        theta: &[f64],
        state: usize,
        prev: Option<&Observation>,
    ) -> Result<(Jet2, Jet2)> {
        match &self.emission {
            Emission::Gaussian { mean, sd } => Ok((mean[state].jet(theta), sd[state].jet(theta))),
            Emission::SwitchingAr { coef, intercept, sd } => {
                let a = coef[state].jet(theta);
                let c = intercept[state].jet(theta);
                let s = sd[state].jet(theta);
                match prev {
                    Some(p) => {
                        let p = self.scalar_obs(p)?;
                        Ok((&a.scale(p) + &c, s))
                    }
                    None => {
                        // stationary AR(1) marginal: N(c / (1 − a), s² / (1 − a²))
                        let one_minus_a = (-&a).add_const(1.0);
                        let one_minus_a2 = (-&(&a * &a)).add_const(1.0);
                        Ok((&c / &one_minus_a, &s / &one_minus_a2.sqrt()))
                    }
                }
            }
            Emission::Discrete { .. } => unreachable!("discrete emission has no Gaussian parameters"),
        }
    }
}

fn gaussian_density(x: f64, mean: &Jet2, sd: &Jet2) -> Jet2 {
    let z = &mean.scale(-1.0).add_const(x) / sd;
    let log_density = &(&z * &z).scale(-0.5) - &sd.ln();
    log_density.add_const(-0.5 * (2.0 * PI).ln()).exp()
}

impl Model for BuiltinModel {
    fn n_states(&self) -> usize {
        self.states
    }

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn max_order(&self) -> usize {
        2
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

    fn transition_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
    ) -> Result<Vec<DMatrix<f64>>> {
        super::check_order(self, table.r())?;
        let d = self.states;
        Ok(table
            .indices()
            .iter()
            .map(|nu| match nu.order() {
                0 => DMatrix::from_fn(d, d, |y, x| self.transition[y][x].eval(theta)),
                1 => {
                    let k = nu.exponents().iter().position(|&e| e == 1).unwrap();
                    DMatrix::from_fn(d, d, |y, x| self.transition[y][x].coefs[k])
                }
                _ => DMatrix::zeros(d, d),
            })
            .collect())
    }

    fn emission_derivatives(
        &self,
        theta: &[f64],
        table: &MultiIndexTable,
        state: usize,
        obs: &Observation,
        prev: Option<&Observation>,
    ) -> Result<Vec<f64>> {
        super::check_order(self, table.r())?;
        let jet = match &self.emission {
            Emission::Discrete { probs } => {
                let s = self.symbol(obs, probs[0].len())?;
                probs[state][s].jet(theta)
            }
            Emission::Gaussian { .. } | Emission::SwitchingAr { .. } => {
                let x = self.scalar_obs(obs)?;
                let (mean, sd) = self.gaussian_params(theta, state, prev)?;
                gaussian_density(x, &mean, &sd)
            }
        };
        Ok(jet.to_derivatives(table))
    }

    fn sample_emission(
        &self,
        theta: &[f64],
        state: usize,
        prev: Option<&Observation>,
        rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        match &self.emission {
            Emission::Discrete { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let row = &probs[state];
                for (s, p) in row.iter().enumerate() {
                    acc += p.eval(theta);
                    if u < acc {
                        return Ok(Observation::scalar(s as f64));
                    }
                }
                Ok(Observation::scalar((row.len() - 1) as f64))
            }
            _ => {
                let (mean, sd) = self.gaussian_params(theta, state, prev)?;
                let z: f64 = rng.sample(StandardNormal);
                Ok(Observation::scalar(mean.value + sd.value * z))
            }
        }
    }
}
