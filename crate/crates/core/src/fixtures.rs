//! Randomized and canonical built-in models for tests, checks and benches.
//!
//! Random fixtures keep every parameter in `(0, 1)` and every stochastic
//! entry at least `0.05` away from zero over the whole closed box, so any
//! point of the box is a valid evaluation point.

use rand::Rng;
use serde_json::{json, Value};

use crate::error::Result;
use crate::model::{BuiltinModel, Family, Observation};
use crate::simulation::{rng_for, simulate};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub model: BuiltinModel,
    pub theta: Vec<f64>,
}

impl Fixture {
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<Observation>> {
        Ok(simulate(&self.model, &self.theta, n, seed)?.observations)
    }
}

// constant + Σ coefs[k] θ_k, accumulated before printing
#[derive(Clone)]
struct Acc {
    constant: f64,
    coefs: Vec<f64>,
}

impl Acc {
    fn new(constant: f64, q: usize) -> Self {
        Acc {
            constant,
            coefs: vec![0.0; q],
        }
    }

    // adds c·(θ_k − 1/2), which vanishes at the box centre
    fn centred(&mut self, k: usize, c: f64) {
        self.coefs[k] += c;
        self.constant -= 0.5 * c;
    }

    fn text(&self) -> Value {
        let mut s = format!("{:e}", self.constant);
        for (k, c) in self.coefs.iter().enumerate() {
            if *c != 0.0 {
                let sign = if *c < 0.0 { '-' } else { '+' };
                s.push_str(&format!(" {sign} {:e}*t{k}", c.abs()));
            }
        }
        Value::String(s)
    }
}

fn stochastic_row<R: Rng>(rng: &mut R, len: usize, q: usize) -> Vec<Acc> {
    let w: Vec<f64> = (0..len).map(|_| 1.0 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| Acc::new(x / total, q)).collect()
}

fn texts(row: &[Acc]) -> Value {
    Value::Array(row.iter().map(Acc::text).collect())
}

/// A random model of `family` with `states` hidden states and `q`
/// parameters `t0 … t{q−1}`, each ranging over `(0, 1)`, plus a random
/// interior θ.
pub fn random_model<R: Rng>(
    family: Family,
    states: usize,
    q: usize,
    rng: &mut R,
) -> Result<(BuiltinModel, Vec<f64>)> {
    let d = states;
    let params: Vec<Value> = (0..q)
        .map(|k| json!({"name": format!("t{k}"), "lower": 0.0, "upper": 1.0}))
        .collect();

    // each parameter moves mass between two entries of one row by at most
    // 0.05, and at most two parameters share a row when q ≤ 3
    let mut trans: Vec<Vec<Acc>> = (0..d).map(|_| stochastic_row(rng, d, q)).collect();
    if d > 1 {
        for k in 0..q {
            let row = k % d;
            let (a, b) = (k % d, (k + 1) % d);
            let c = 0.03 + 0.07 * rng.random::<f64>();
            trans[row][a].centred(k, c);
            trans[row][b].centred(k, -c);
        }
    }
    let transition = Value::Array(trans.iter().map(|r| texts(r)).collect());

    let emission = match family {
        Family::DiscreteHmm => {
            let m = 3;
            let mut probs: Vec<Vec<Acc>> = (0..d).map(|_| stochastic_row(rng, m, q)).collect();
            for k in 0..q {
                let c = 0.05 + 0.1 * rng.random::<f64>();
                probs[k % d][k % m].centred(k, c);
                probs[k % d][(k + 1) % m].centred(k, -c);
            }
            json!({"probs": probs.iter().map(|r| texts(r)).collect::<Vec<_>>()})
        }
        Family::GaussianHmm => {
            let mut mean: Vec<Acc> = (0..d)
                .map(|x| Acc::new(-2.0 + 4.0 * (x as f64 + rng.random::<f64>()) / d as f64, q))
                .collect();
            let mut sd: Vec<Acc> = (0..d).map(|_| Acc::new(0.6 + 0.8 * rng.random::<f64>(), q)).collect();
            for k in 0..q {
                let c = (0.5 + rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                mean[k % d].centred(k, c);
                sd[(k + 1) % d].centred(k, 0.3 * rng.random::<f64>());
            }
            json!({
                "mean": mean.iter().map(Acc::text).collect::<Vec<_>>(),
                "sd": sd.iter().map(Acc::text).collect::<Vec<_>>(),
            })
        }
        Family::SwitchingAr1 => {
            let mut coef: Vec<Acc> = (0..d).map(|_| Acc::new(-0.4 + 0.8 * rng.random::<f64>(), q)).collect();
            let mut intercept: Vec<Acc> = (0..d).map(|_| Acc::new(-1.0 + 2.0 * rng.random::<f64>(), q)).collect();
            let mut sd: Vec<Acc> = (0..d).map(|_| Acc::new(0.5 + 0.8 * rng.random::<f64>(), q)).collect();
            for k in 0..q {
                coef[k % d].centred(k, 0.2 + 0.2 * rng.random::<f64>());
                intercept[(k + 1) % d].centred(k, 0.5 + rng.random::<f64>());
                sd[k % d].centred(k, 0.2 * rng.random::<f64>());
            }
            json!({
                "coef": coef.iter().map(Acc::text).collect::<Vec<_>>(),
                "intercept": intercept.iter().map(Acc::text).collect::<Vec<_>>(),
                "sd": sd.iter().map(Acc::text).collect::<Vec<_>>(),
            })
        }
    };

    let spec = json!({
        "family": family,
        "states": d,
        "params": params,
        "transition": transition,
        "emission": emission,
    });
    let model = BuiltinModel::from_json(&spec.to_string())?;
    let theta = (0..q).map(|_| 0.15 + 0.7 * rng.random::<f64>()).collect();
    Ok((model, theta))
}

/// `count` fixtures cycling through the three families, with state counts in
/// `1..=max_states` and parameter counts in `1..=max_q`.
pub fn fixture_set(count: usize, max_states: usize, max_q: usize, seed: u64) -> Result<Vec<Fixture>> {
    let families = [Family::DiscreteHmm, Family::GaussianHmm, Family::SwitchingAr1];
    let mut rng = rng_for(seed, u64::MAX);
    (0..count)
        .map(|i| {
            let family = families[i % 3];
            let states = 1 + (i / 3) % max_states;
            let q = 1 + rng.random_range(0..max_q);
            let (model, theta) = random_model(family, states, q, &mut rng)?;
            Ok(Fixture {
                name: format!("{family:?}-d{states}-q{q}-{i}"),
                model,
                theta,
            })
        })
        .collect()
}

pub const BERNOULLI: &str = r#"{
  "family": "discrete_hmm",
  "states": 1,
  "params": [{"name": "p", "lower": 0, "upper": 1}],
  "transition": [[1]],
  "emission": {"probs": [["1 - p", "p"]]}
}"#;

/// Two hidden states, two symbols; θ = (a, b, e1, e2) with switch
/// probabilities `a`, `b` and emission probabilities of symbol 1.
pub const TWO_STATE_DISCRETE: &str = r#"{
  "family": "discrete_hmm",
  "states": 2,
  "params": [
    {"name": "a", "lower": 0, "upper": 1},
    {"name": "b", "lower": 0, "upper": 1},
    {"name": "e1", "lower": 0, "upper": 1},
    {"name": "e2", "lower": 0, "upper": 1}
  ],
  "transition": [["1 - a", "a"], ["b", "1 - b"]],
  "emission": {"probs": [["1 - e1", "e1"], ["1 - e2", "e2"]]}
}"#;

pub const TWO_STATE_DISCRETE_THETA: [f64; 4] = [0.1, 0.2, 0.2, 0.8];

/// Two-state Gaussian HMM; θ = (a, b, mu1, mu2) with unit and 1.5 sd.
pub const TWO_STATE_GAUSSIAN: &str = r#"{
  "family": "gaussian_hmm",
  "states": 2,
  "params": [
    {"name": "a", "lower": 0, "upper": 1},
    {"name": "b", "lower": 0, "upper": 1},
    {"name": "mu1"},
    {"name": "mu2"}
  ],
  "transition": [["1 - a", "a"], ["b", "1 - b"]],
  "emission": {"mean": ["mu1", "mu2"], "sd": [1.0, 1.5]}
}"#;

pub const TWO_STATE_GAUSSIAN_THETA: [f64; 4] = [0.1, 0.2, -1.0, 1.0];

/// Single-state Gaussian with unknown mean and sd 2.
pub const SINGLE_GAUSSIAN: &str = r#"{
  "family": "gaussian_hmm",
  "states": 1,
  "params": [{"name": "mu"}],
  "transition": [[1]],
  "emission": {"mean": ["mu"], "sd": [2.0]}
}"#;

pub fn builtin(text: &str) -> BuiltinModel {
    BuiltinModel::from_json(text).expect("canonical fixture parses")
}
