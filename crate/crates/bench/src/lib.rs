//! Fixtures shared by the criterion benches.

use mirfs::{simulate, BuiltinModel, Observation};

/// Two-state Gaussian HMM with free means and switching probabilities.
pub fn gaussian_two_state() -> BuiltinModel {
    BuiltinModel::from_json(
        r#"{
            "family": "gaussian_hmm",
            "states": 2,
            "params": [
                {"name": "p12", "lower": 0, "upper": 1},
                {"name": "p21", "lower": 0, "upper": 1},
                {"name": "mu1", "lower": -10, "upper": 10},
                {"name": "mu2", "lower": -10, "upper": 10}
            ],
            "transition": [["1 - p12", "p12"], ["p21", "1 - p21"]],
            "emission": {"mean": ["mu1", "mu2"], "sd": [1.0, 1.5]}
        }"#,
    )
    .expect("valid fixture")
}

pub const GAUSSIAN_THETA: [f64; 4] = [0.1, 0.2, -1.0, 1.0];

pub fn gaussian_data(n: usize) -> Vec<Observation> {
    simulate(&gaussian_two_state(), &GAUSSIAN_THETA, n, 7)
        .expect("simulation")
        .observations
}
