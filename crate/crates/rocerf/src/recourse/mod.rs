//! Counterfactual generation.
//!
//! Both generators minimize `‖x − x₀‖₂` subject to a score clearing a
//! threshold, via the same quadratic-penalty machinery: [`scfe`] constrains
//! the plain score `f(x) ≥ 0`, [`rocerf`] constrains the robust score
//! `f_A(x) ≥ δ` so the answer survives every deletion of up to k training
//! points. The penalty problem
//!
//! ```text
//! J(x) = λ·max(δ − c(x), 0)² + √(‖x − x₀‖² + ε)
//! ```
//!
//! is solved for a sequence of multipliers: halve λ while the minimizer is
//! feasible, double until it is feasible (capped), then binary-search the
//! bracket; the final answer is re-solved at the left endpoint and falls back
//! to the last feasible iterate if that solve lands infeasible. Every inner
//! minimization is plain gradient descent with a backtracking line search,
//! warm-started from x₀ so the outer iterations stay independent.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm1, norm2};
use crate::models::{Classifier, ModelError};
use crate::unlearn::{robust_score, robust_score_gradient, InfluenceCache, UnlearnError};

#[derive(Debug, Error)]
pub enum RecourseError {
    #[error("input is not a negative sample (score {score:.6})")]
    NotNegativeSample { score: f64 },
    #[error("the robust method needs an influence cache")]
    MissingCache,
    #[error("surrogate fit failed: {detail}")]
    SurrogateFit { detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Inner/outer optimizer settings shared by both generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Binary-search iterations on the penalty multiplier.
    pub binary_search_iters: usize,
    /// Cap on inner descent steps per minimization.
    pub inner_max_steps: usize,
    /// Stop the inner descent once the objective improves by less than this.
    pub inner_tol: f64,
    /// Starting penalty multiplier.
    pub lambda_init: f64,
    /// Give up (infeasible) after this many doublings of the multiplier.
    pub doubling_cap: u32,
    /// Smoothing added under the distance square root so the objective is
    /// differentiable at x₀. Reported costs always use the true norm.
    pub norm_epsilon: f64,
    /// Optional per-feature box bounds, clamped after every descent step.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            binary_search_iters: 20,
            inner_max_steps: 1000,
            inner_tol: 1e-6,
            lambda_init: 0.1,
            doubling_cap: 60,
            norm_epsilon: 1e-12,
            bounds: None,
        }
    }
}

/// Robust-generation configuration: removal budget, margin, solver knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocerfConfig {
    /// Removal budget k: the answer must clear the margin under the worst
    /// size-k deletion.
    pub k: usize,
    /// Margin δ ≥ 0 absorbing the leave-k-out approximation error; 0 works
    /// well in practice, `harness::estimate_delta` gives a validated value.
    pub delta: f64,
    pub solver: SolverSettings,
}

impl RocerfConfig {
    pub fn new(k: usize, delta: f64) -> Self {
        Self {
            k,
            delta,
            solver: SolverSettings::default(),
        }
    }
}

/// One binary-search step: the bracket before the step and the verdict at
/// its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lambda_mid: f64,
    pub mid_feasible: bool,
}

/// A generated counterfactual with its audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct CfeResult {
    pub x_cf: Array1<f64>,
    pub cost_l2: f64,
    pub cost_l1: f64,
    /// Whether `constraint_value ≥ threshold` held at the returned point.
    pub feasible: bool,
    /// The constraint (plain or robust score) evaluated at `x_cf`.
    pub constraint_value: f64,
    /// The threshold the constraint was held against (0 for the baseline,
    /// δ for the robust method).
    pub threshold: f64,
    /// Total inner descent steps across all minimizations.
    pub inner_iterations: usize,
    /// Number of inner minimizations run.
    pub outer_solves: usize,
    /// Multiplier of the solve that produced `x_cf`.
    pub lambda_final: f64,
    /// Bracket history of the binary search.
    pub trace: Vec<BisectionStep>,
}

/// Outcome slot for batch generation; per-sample failures are recorded, not
/// fatal.
pub type CfeOutcome = Result<CfeResult, RecourseError>;

// ---------------------------------------------------------------------------
// Constraint abstraction
// ---------------------------------------------------------------------------

/// The inequality side of the problem: a scalar function and its x-gradient.
/// Dimensions are validated before the solver starts, so evaluation is
/// infallible inside the loop.
trait ConstraintFn: Sync {
    fn value(&self, x: ArrayView1<f64>) -> f64;
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64>;
}

struct PlainScore<'a> {
    model: &'a dyn Classifier,
}

impl ConstraintFn for PlainScore<'_> {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.model.score(x).expect("dimension validated upfront")
    }
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.model
            .input_gradient(x)
            .expect("dimension validated upfront")
    }
}

struct RobustConstraint<'a> {
    model: &'a dyn Classifier,
    cache: &'a InfluenceCache,
    k: usize,
}

impl ConstraintFn for RobustConstraint<'_> {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        robust_score(self.cache, self.model, x, self.k).expect("validated upfront")
    }
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        robust_score_gradient(self.cache, self.model, x, self.k).expect("validated upfront")
    }
}

// ---------------------------------------------------------------------------
// Penalty machinery
// ---------------------------------------------------------------------------

/// The penalty term `φ(z) = max(z, 0)²`.
pub fn penalty(z: f64) -> f64 {
    let zp = z.max(0.0);
    zp * zp
}

fn clamp_to_bounds(x: &mut Array1<f64>, bounds: &Option<Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b.iter()) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Minimize `J(x) = λ·φ(δ − c(x)) + √(‖x − x₀‖² + ε)` from `x₀` by gradient
/// descent with a backtracking line search. The step size carries over
/// between iterations (doubled after an acceptance, halved on failure) with
/// the very first trial at 1.0. Returns the best iterate and the number of
/// descent steps taken.
fn inner_minimize(
    constraint: &dyn ConstraintFn,
    x0: ArrayView1<f64>,
    lambda: f64,
    delta: f64,
    settings: &SolverSettings,
) -> (Array1<f64>, usize) {
    let eps = settings.norm_epsilon;
    let objective = |x: &Array1<f64>| -> f64 {
        let dist = {
            let diff = x - &x0;
            (diff.dot(&diff) + eps).sqrt()
        };
        lambda * penalty(delta - constraint.value(x.view())) + dist
    };
    let gradient = |x: &Array1<f64>| -> Array1<f64> {
        let diff = x - &x0;
        let dist = (diff.dot(&diff) + eps).sqrt();
        let mut g = &diff / dist;
        let slack = delta - constraint.value(x.view());
        if slack > 0.0 {
            let cg = constraint.grad(x.view());
            g.scaled_add(-2.0 * lambda * slack, &cg);
        }
        g
    };

    let mut x = x0.to_owned();
    clamp_to_bounds(&mut x, &settings.bounds);
    let mut j_current = objective(&x);
    let mut best = x.clone();
    let mut j_best = j_current;
    let mut step = 1.0_f64;
    let mut steps_taken = 0usize;
    for _ in 0..settings.inner_max_steps {
        let g = gradient(&x);
        let mut accepted = false;
        for _ in 0..120 {
            let mut candidate = &x - &(&g * step);
            clamp_to_bounds(&mut candidate, &settings.bounds);
            let j_candidate = objective(&candidate);
            if j_candidate < j_current {
                let improvement = j_current - j_candidate;
                x = candidate;
                j_current = j_candidate;
                steps_taken += 1;
                if j_current < j_best {
                    best = x.clone();
                    j_best = j_current;
                }
                accepted = true;
                step *= 2.0;
                if improvement < settings.inner_tol {
                    return (best, steps_taken);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (best, steps_taken)
}

struct SolveOutcome {
    x: Array1<f64>,
    feasible: bool,
    constraint_value: f64,
    lambda_final: f64,
    inner_iterations: usize,
    outer_solves: usize,
    trace: Vec<BisectionStep>,
}

/// The multiplier search: halve while feasible, double until feasible
/// (capped), binary-search the bracket, then re-solve at the left endpoint
/// and post-verify.
fn solve_penalty(
    constraint: &dyn ConstraintFn,
    x0: ArrayView1<f64>,
    delta: f64,
    settings: &SolverSettings,
) -> SolveOutcome {
    let mut inner_total = 0usize;
    let mut outer = 0usize;
    let solve = |lambda: f64, inner_total: &mut usize, outer: &mut usize| -> Array1<f64> {
        let (x, steps) = inner_minimize(constraint, x0, lambda, delta, settings);
        *inner_total += steps;
        *outer += 1;
        x
    };
    let feasible_at = |x: &Array1<f64>| constraint.value(x.view()) >= delta;

    let mut lambda = settings.lambda_init;
    let mut x = solve(lambda, &mut inner_total, &mut outer);

    // Left endpoint: halve while the minimizer is feasible. The loop must
    // terminate because x₀ itself is infeasible and the λ→0 minimizer is x₀;
    // the count cap is purely defensive.
    let mut halvings = 0u32;
    while feasible_at(&x) && halvings < 200 {
        lambda /= 2.0;
        x = solve(lambda, &mut inner_total, &mut outer);
        halvings += 1;
    }

    // Right endpoint: double until the minimizer is feasible.
    let mut lambda_hi = lambda;
    let mut doublings = 0u32;
    while !feasible_at(&x) {
        if doublings >= settings.doubling_cap {
            let constraint_value = constraint.value(x.view());
            return SolveOutcome {
                x,
                feasible: false,
                constraint_value,
                lambda_final: lambda_hi,
                inner_iterations: inner_total,
                outer_solves: outer,
                trace: Vec::new(),
            };
        }
        lambda_hi *= 2.0;
        x = solve(lambda_hi, &mut inner_total, &mut outer);
        doublings += 1;
    }
    let mut x_feasible = x;

    // Binary search the bracket: λ infeasible, λ_hi feasible throughout.
    let mut trace = Vec::with_capacity(settings.binary_search_iters);
    for _ in 0..settings.binary_search_iters {
        let lambda_mid = 0.5 * (lambda + lambda_hi);
        let x_mid = solve(lambda_mid, &mut inner_total, &mut outer);
        let mid_feasible = feasible_at(&x_mid);
        trace.push(BisectionStep {
            lambda_lo: lambda,
            lambda_hi,
            lambda_mid,
            mid_feasible,
        });
        if mid_feasible {
            lambda_hi = lambda_mid;
            x_feasible = x_mid;
        } else {
            lambda = lambda_mid;
        }
    }

    // Final solve at the left endpoint, post-verified; fall back to the last
    // feasible iterate when it lands infeasible (the usual case).
    let x_final = solve(lambda, &mut inner_total, &mut outer);
    let (x, lambda_final) = if feasible_at(&x_final) {
        (x_final, lambda)
    } else {
        (x_feasible, lambda_hi)
    };
    let constraint_value = constraint.value(x.view());
    SolveOutcome {
        feasible: constraint_value >= delta,
        constraint_value,
        lambda_final,
        inner_iterations: inner_total,
        outer_solves: outer,
        trace,
        x,
    }
}

fn finish(outcome: SolveOutcome, x0: ArrayView1<f64>, threshold: f64) -> CfeResult {
    let diff = &outcome.x - &x0;
    CfeResult {
        cost_l2: norm2(diff.view()),
        cost_l1: norm1(diff.view()),
        feasible: outcome.feasible,
        constraint_value: outcome.constraint_value,
        threshold,
        inner_iterations: outcome.inner_iterations,
        outer_solves: outcome.outer_solves,
        lambda_final: outcome.lambda_final,
        trace: outcome.trace,
        x_cf: outcome.x,
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// The gradient-based baseline: minimum-cost x with `f(x) ≥ 0`, no
/// robustness. Identical machinery to [`rocerf`] with k = 0 and δ = 0.
pub fn scfe(model: &dyn Classifier, x0: ArrayView1<f64>) -> Result<CfeResult, RecourseError> {
    scfe_with(model, x0, &SolverSettings::default())
}

pub fn scfe_with(
    model: &dyn Classifier,
    x0: ArrayView1<f64>,
    settings: &SolverSettings,
) -> Result<CfeResult, RecourseError> {
    let score = model.score(x0)?;
    if score >= 0.0 {
        return Err(RecourseError::NotNegativeSample { score });
    }
    let constraint = PlainScore { model };
    Ok(finish(solve_penalty(&constraint, x0, 0.0, settings), x0, 0.0))
}

/// Robust generation: minimum-cost x with the robust score clearing δ, so the
/// answer stays valid under every deletion of up to `cfg.k` training points
/// (up to the leave-k-out approximation the margin absorbs).
pub fn rocerf(
    model: &dyn Classifier,
    cache: &InfluenceCache,
    x0: ArrayView1<f64>,
    cfg: &RocerfConfig,
) -> Result<CfeResult, RecourseError> {
    if cfg.k > cache.n() {
        return Err(UnlearnError::KTooLarge {
            k: cfg.k,
            n: cache.n(),
        }
        .into());
    }
    if model.param_dim() != cache.p() {
        return Err(UnlearnError::SizeMismatch {
            expected: cache.p(),
            got: model.param_dim(),
        }
        .into());
    }
    let score = model.score(x0)?;
    if score >= 0.0 {
        return Err(RecourseError::NotNegativeSample { score });
    }
    let constraint = RobustConstraint {
        model,
        cache,
        k: cfg.k,
    };
    Ok(finish(
        solve_penalty(&constraint, x0, cfg.delta, &cfg.solver),
        x0,
        cfg.delta,
    ))
}

/// Which generator a batch run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Scfe,
    Rocerf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Scfe => "scfe",
            Method::Rocerf => "rocerf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scfe" => Some(Method::Scfe),
            "rocerf" => Some(Method::Rocerf),
            _ => None,
        }
    }
}

/// Generate counterfactuals for a batch of negative samples, order-preserving
/// and independent per sample; failures occupy their slot rather than
/// aborting the batch.
pub fn batch_explain(
    model: &dyn Classifier,
    cache: Option<&InfluenceCache>,
    negatives: &[Array1<f64>],
    method: Method,
    cfg: &RocerfConfig,
) -> Result<Vec<CfeOutcome>, RecourseError> {
    if method == Method::Rocerf && cache.is_none() {
        return Err(RecourseError::MissingCache);
    }
    Ok(negatives
        .par_iter()
        .map(|x0| match method {
            Method::Scfe => scfe_with(model, x0.view(), &cfg.solver),
            Method::Rocerf => rocerf(model, cache.unwrap(), x0.view(), cfg),
        })
        .collect())
}

/// Write a batch as CSV: `sample_id, method, feasible, cost_l2, cost_l1,
/// constraint_value, iterations`. Errored slots write `false` with NaN costs.
pub fn write_cfe_csv(
    method: &str,
    outcomes: &[CfeOutcome],
    path: impl AsRef<std::path::Path>,
) -> Result<(), RecourseError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "sample_id",
            "method",
            "feasible",
            "cost_l2",
            "cost_l1",
            "constraint_value",
            "iterations",
        ])?;
        for (i, outcome) in outcomes.iter().enumerate() {
            match outcome {
                Ok(r) => w.write_record([
                    i.to_string(),
                    method.to_string(),
                    r.feasible.to_string(),
                    format!("{}", r.cost_l2),
                    format!("{}", r.cost_l1),
                    format!("{}", r.constraint_value),
                    r.inner_iterations.to_string(),
                ])?,
                Err(_) => w.write_record([
                    i.to_string(),
                    method.to_string(),
                    "false".to_string(),
                    "NaN".to_string(),
                    "NaN".to_string(),
                    "NaN".to_string(),
                    "0".to_string(),
                ])?,
            }
        }
        w.flush()?;
    }
    crate::ioutil::atomic_write(path.as_ref(), &buf)?;
    Ok(())
}
