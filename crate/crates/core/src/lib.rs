//! Exact log-likelihood, score and observed information for finite-state
//! hidden Markov and Markov-switching models.
//!
//! The derivatives of the likelihood operator `M_n = P_θ(ξ_n) ∘ ⋯ ∘ P_θ(ξ_0)`
//! up to order `r` are carried as a stack of `K = (r+q)!/(r!q!)` blocks and
//! advanced with one lower-triangular block step per observation. The
//! log-likelihood and its first two derivatives are ratios of masses of
//! those blocks, and their per-step differences form additive functionals.
//!
//! ```
//! use mirfs::{evaluate, BuiltinModel, Observation};
//!
//! let model = BuiltinModel::from_json(r#"{
//!     "family": "discrete_hmm",
//!     "states": 1,
//!     "params": [{"name": "p", "lower": 0, "upper": 1}],
//!     "transition": [[1.0]],
//!     "emission": {"probs": [["1 - p", "p"]]}
//! }"#).unwrap();
//! let data: Vec<Observation> = [1.0, 0.0, 1.0].iter().map(|&x| x.into()).collect();
//! let report = evaluate(&model, &[0.5], &data, 2).unwrap();
//! assert!((report.loglik - 3.0 * 0.5f64.ln()).abs() < 1e-12);
//! ```

pub mod checks;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod likelihood;
pub mod model;
pub mod multiindex;
pub mod oracles;
pub mod recursion;
pub mod simulation;

pub use error::{Error, ErrorKind, Result};
pub use estimation::{fit, profile_loglik, FitOptions, FitResult};
pub use likelihood::{evaluate, evaluate_with, EvalOptions, EvalReport, Increments};
pub use model::{
    builtin_model, stationary_law, BuiltinModel, InitialLaw, Interval, Model, ModelSpec,
    Observation, ParameterVector, StationaryLaw,
};
pub use multiindex::{build_table, MultiIndex, MultiIndexTable};
pub use recursion::{DerivativeStack, StepBlock, StepBuilder};
pub use simulation::{ergodic_diagnostics, simulate, DiagnosticReport, SimulatedPath};
