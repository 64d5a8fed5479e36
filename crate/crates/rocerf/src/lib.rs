//! Recourse that survives data deletion.
//!
//! A trained classifier denies someone a loan; a counterfactual explanation
//! tells them the cheapest feature change that would flip the decision. If the
//! model is later retrained because training points were deleted (for example
//! under right-to-be-forgotten requests), that explanation can silently stop
//! working. This crate generates counterfactuals that remain valid under
//! *every* retraining obtained by deleting up to `k` training points, without
//! retraining a single extra model at generation time.
//!
//! The machinery, bottom up:
//!
//! - [`data`]: CSV loading against a declared schema, z-score / one-hot
//!   preprocessing, deterministic splits, and a synthetic two-Gaussian
//!   generator used throughout the verification suite.
//! - [`models`]: regularized logistic regression trained by exact Newton
//!   iteration, a small feed-forward network trained by SGD, and a
//!   [`HessianFactor`](models::HessianFactor) that solves against the training
//!   Hessian (dense Cholesky for linear models, damped conjugate gradient on
//!   Hessian-vector products for the network).
//! - [`unlearn`]: the leave-k-out machinery. Precomputed influence vectors
//!   `H⁻¹gᵢ` give a first-order estimate of the parameters retrained without
//!   any subset of points; the bottom-k partial sort turns the combinatorial
//!   "valid under all C(n,k) removals" constraint into a single inequality on
//!   a robust score. An exact-retraining oracle backs every approximation.
//! - [`recourse`]: the counterfactual generators. [`recourse::scfe`] is the
//!   plain gradient-based baseline; [`recourse::rocerf`] minimizes distance
//!   subject to the robust score clearing a margin, via a quadratic penalty
//!   with binary search on the multiplier.
//! - [`surrogate`]: local linear approximation of a black-box model around one
//!   input, so the efficient linear path applies to the network too.
//! - [`harness`]: the evaluation protocol. Random-removal trials, an
//!   exhaustive removal oracle at desk scale, margin estimation from simulated
//!   removals, and cost-bound scaling checks.
//! - [`cli`]: the `rocerf` binary tying the pipeline together
//!   (`preprocess`, `train`, `explain`, `evaluate`, `oracle`, `sweep-k`,
//!   `estimate-delta`, `verify`).
//!
//! The runnable examples under `examples/` are the best starting point; each
//! one exercises a single capability end to end:
//!
//! ```bash
//! cargo run --release -p rocerf --example synthetic_end_to_end
//! cargo run --release -p rocerf --example influence_vs_retraining
//! cargo run --release -p rocerf --example bottom_k_and_robust_score
//! cargo run --release -p rocerf --example removal_trials
//! cargo run --release -p rocerf --example margin_estimation
//! cargo run --release -p rocerf --example surrogate_recourse
//! cargo run --release -p rocerf --example csv_pipeline
//! ```
//!
//! Every source of randomness is an explicitly seeded ChaCha8 stream, so all
//! results are reproducible within this implementation.

pub mod cli;
pub mod data;
pub mod harness;
pub(crate) mod ioutil;
pub mod linalg;
pub mod models;
pub mod recourse;
pub mod rng;
pub mod surrogate;
pub mod unlearn;

pub use data::{Dataset, Preprocessor, RawDataset, Schema, SplitSpec};
pub use models::{
    Classifier, HessianFactor, LinearClassifier, MlpClassifier, Model, ModelSpec,
};
pub use recourse::{CfeResult, RocerfConfig};
pub use unlearn::{InfluenceCache, RemovalMask};
