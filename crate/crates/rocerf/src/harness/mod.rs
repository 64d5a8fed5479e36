//! The evaluation protocol and desk-scale verification machinery.
//!
//! [`run_removal_trials`] is the headline experiment: delete a random α
//! fraction of the training set, retrain exactly, and ask whether previously
//! issued counterfactuals still come out positive — repeated M times with
//! mean ± standard error. [`exhaustive_validity_oracle`] replaces sampling
//! with *every* size-k removal when C(n,k) is small enough, which turns the
//! worst-case validity claim into a checkable fact rather than an estimate.
//! [`estimate_delta`] calibrates the robust margin from simulated removals,
//! and [`cost_bound_check`] measures the extra cost of robustness against
//! its k/n scaling law.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::linalg::norm2;
use crate::models::{Classifier, Model, ModelError, ModelSpec};
use crate::recourse::{CfeOutcome, RecourseError};
use crate::rng::{derive_seed, seeded};
use crate::unlearn::{approx_score, retrain_exact, InfluenceCache, RemovalMask, UnlearnError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("C(n={n}, k={k}) = {combos} exceeds the oracle cap {cap}")]
    CombinatoricsTooLarge {
        n: usize,
        k: usize,
        combos: u128,
        cap: u128,
    },
    #[error("unpaired results: {left} vs {right} samples")]
    UnpairedResults { left: usize, right: usize },
    #[error("trial {trial} kept drawing degenerate removals after {retries} retries")]
    DegenerateTrial { trial: usize, retries: usize },
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One method's precomputed counterfactuals, aligned to the negative test
/// samples.
pub struct MethodCfes {
    pub method: String,
    pub outcomes: Vec<CfeOutcome>,
}

/// Removal-trial specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSpec {
    /// Fraction of training rows removed per trial; the mask size is ⌈α·n⌉.
    pub alpha: f64,
    /// Number of independent removal trials (M).
    pub trials: usize,
    pub seed: u64,
    /// How to retrain after each removal; identical hyperparameters to the
    /// original model.
    pub model: ModelSpec,
    /// Degenerate removals (single-class survivors) are redrawn up to this
    /// many times before the trial errors out.
    pub max_degenerate_retries: usize,
}

impl TrialSpec {
    pub fn new(alpha: f64, trials: usize, seed: u64, model: ModelSpec) -> Self {
        Self {
            alpha,
            trials,
            seed,
            model,
            max_degenerate_retries: 10,
        }
    }

    pub fn mask_size(&self, n: usize) -> usize {
        ((self.alpha * n as f64).ceil() as usize).max(1)
    }
}

/// Per-(method, α) aggregate with the raw per-trial series kept for
/// recomputation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEntry {
    pub method: String,
    pub alpha: f64,
    pub validity_mean: f64,
    /// Standard error of the mean across trials.
    pub validity_se: f64,
    pub cost_l2_mean: f64,
    pub cost_l2_se: f64,
    pub cost_l1_mean: f64,
    pub cost_l1_se: f64,
    pub per_trial_validity: Vec<f64>,
}

/// The full evaluation report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn cost_stats(outcomes: &[CfeOutcome]) -> ((f64, f64), (f64, f64)) {
    let l2: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().map(|r| r.cost_l2))
        .collect();
    let l1: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().map(|r| r.cost_l1))
        .collect();
    (mean_se(&l2), mean_se(&l1))
}

/// Draw the trial's mask, redrawing while the survivors are single-class.
/// The mask depends only on (seed, trial, retry), never on scheduling.
fn draw_trial_mask(
    train: &Dataset,
    size: usize,
    seed: u64,
    trial: usize,
    max_retries: usize,
) -> Result<RemovalMask, HarnessError> {
    for retry in 0..=max_retries {
        let stream = derive_seed(derive_seed(seed, trial as u64), retry as u64);
        let mut rng = seeded(stream);
        let mask = RemovalMask::sample(train.n(), size, &mut rng)?;
        let survivors_both = {
            let mut pos = false;
            let mut neg = false;
            for i in mask.surviving() {
                match train.y(i) {
                    1 => pos = true,
                    _ => neg = true,
                }
            }
            pos && neg
        };
        if survivors_both {
            return Ok(mask);
        }
    }
    Err(HarnessError::DegenerateTrial {
        trial,
        retries: max_retries,
    })
}

/// Fraction of the counterfactuals the given model classifies positive.
/// Errored slots stay in the denominator and count as invalid.
pub fn validity_under(model: &Model, outcomes: &[CfeOutcome]) -> f64 {
    if outcomes.is_empty() {
        return f64::NAN;
    }
    let valid = outcomes
        .iter()
        .filter(|o| {
            o.as_ref()
                .map(|r| model.score(r.x_cf.view()).expect("dims fixed") >= 0.0)
                .unwrap_or(false)
        })
        .count();
    valid as f64 / outcomes.len() as f64
}

/// The removal/retrain/re-evaluate protocol: M independent trials, validity
/// per trial averaged over all counterfactuals, costs aggregated once
/// (they do not depend on removals).
pub fn run_removal_trials(
    train: &Dataset,
    spec: &TrialSpec,
    methods: &[MethodCfes],
) -> Result<EvalReport, HarnessError> {
    let size = spec.mask_size(train.n());
    // validity[m][method]
    let per_trial: Vec<Vec<f64>> = (0..spec.trials)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>, HarnessError> {
            let mask = draw_trial_mask(train, size, spec.seed, m, spec.max_degenerate_retries)?;
            let retrained = retrain_exact(train, &mask, &spec.model)?;
            Ok(methods
                .iter()
                .map(|mc| validity_under(&retrained, &mc.outcomes))
                .collect())
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::with_capacity(methods.len());
    for (j, mc) in methods.iter().enumerate() {
        let series: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
        let (validity_mean, validity_se) = mean_se(&series);
        let ((cost_l2_mean, cost_l2_se), (cost_l1_mean, cost_l1_se)) = cost_stats(&mc.outcomes);
        entries.push(EvalEntry {
            method: mc.method.clone(),
            alpha: spec.alpha,
            validity_mean,
            validity_se,
            cost_l2_mean,
            cost_l2_se,
            cost_l1_mean,
            cost_l1_se,
            per_trial_validity: series,
        });
    }
    Ok(EvalReport { entries })
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

/// Default cap on the number of exhaustive retrains.
pub const DEFAULT_ORACLE_CAP: u128 = 20_000;

/// C(n, k), saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All size-k subsets of 0..n in lexicographic order.
pub fn enumerate_masks(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    if k == 0 {
        out.push(combo);
        return out;
    }
    if k > n {
        return out;
    }
    loop {
        out.push(combo.clone());
        // Rightmost position that can still advance.
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if combo[pos] != n - k + pos {
                break;
            }
        }
        combo[pos] += 1;
        for later in pos + 1..k {
            combo[later] = combo[later - 1] + 1;
        }
    }
}

/// Worst case over every size-k removal for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub method: String,
    /// Minimum over all masks of the per-mask validity.
    pub worst_validity: f64,
    /// Lexicographically first mask achieving the minimum.
    pub witness: Vec<usize>,
    /// Number of models retrained (C(n,k)).
    pub models_retrained: usize,
}

/// Retrain under **all** C(n,k) removals and report each method's worst-case
/// validity with the witness mask. Errors out above `cap` retrains.
pub fn exhaustive_validity_oracle(
    train: &Dataset,
    spec: &ModelSpec,
    k: usize,
    methods: &[MethodCfes],
    cap: u128,
) -> Result<Vec<OracleReport>, HarnessError> {
    let combos = binomial(train.n(), k);
    if combos > cap {
        return Err(HarnessError::CombinatoricsTooLarge {
            n: train.n(),
            k,
            combos,
            cap,
        });
    }
    let masks = enumerate_masks(train.n(), k);
    // validity[mask][method]
    let grid: Vec<Vec<f64>> = masks
        .par_iter()
        .map(|combo| -> Result<Vec<f64>, HarnessError> {
            let mask = RemovalMask::new(combo.clone(), train.n())?;
            let retrained = retrain_exact(train, &mask, spec)?;
            Ok(methods
                .iter()
                .map(|mc| validity_under(&retrained, &mc.outcomes))
                .collect())
        })
        .collect::<Result<_, _>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(j, mc)| {
            let mut worst = f64::INFINITY;
            let mut witness = 0usize;
            for (m, row) in grid.iter().enumerate() {
                if row[j] < worst {
                    worst = row[j];
                    witness = m;
                }
            }
            OracleReport {
                method: mc.method.clone(),
                worst_validity: worst,
                witness: masks[witness].clone(),
                models_retrained: masks.len(),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Margin estimation
// ---------------------------------------------------------------------------

/// Default multiplier on the largest simulated approximation error.
pub const DELTA_SAFETY_FACTOR: f64 = 1.5;

/// Estimate the margin δ from simulated removals: retrain exactly on
/// `n_sim` random size-k masks and take the largest over-estimate
/// `f̃_w(x) − f_w(x)` across validation points, clamped at 0, times a safety
/// factor.
#[allow(clippy::too_many_arguments)]
pub fn estimate_delta(
    train: &Dataset,
    val: &Dataset,
    model: &Model,
    cache: &InfluenceCache,
    spec: &ModelSpec,
    k: usize,
    n_sim: usize,
    seed: u64,
    safety: f64,
) -> Result<f64, HarnessError> {
    assert!(n_sim >= 1);
    let worst: Vec<f64> = (0..n_sim)
        .into_par_iter()
        .map(|sim| -> Result<f64, HarnessError> {
            let mask = draw_trial_mask(train, k, seed, sim, 10)?;
            let retrained = retrain_exact(train, &mask, spec)?;
            let mut w = 0.0f64;
            for i in 0..val.n() {
                let x = val.x(i);
                let approx = approx_score(cache, model, &mask, x)?;
                let exact = retrained.score(x)?;
                w = w.max(approx - exact);
            }
            Ok(w)
        })
        .collect::<Result<_, _>>()?;
    let max_err = worst.into_iter().fold(0.0f64, f64::max);
    Ok(max_err * safety)
}

// ---------------------------------------------------------------------------
// Cost-bound slack
// ---------------------------------------------------------------------------

/// Distribution of the extra cost of robustness and the constant it implies
/// in the `k·C/(n·‖θ‖)` bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostBoundReport {
    pub pairs: usize,
    pub mean_extra_cost: f64,
    pub max_extra_cost: f64,
    /// Δ·n·‖θ̂‖/k per sample (zero when k = 0).
    pub implied_c_mean: f64,
    pub implied_c_max: f64,
    pub k: usize,
    pub n: usize,
    pub theta_norm: f64,
}

/// Pair baseline and robust results on identical negatives and report the
/// extra-cost distribution.
pub fn cost_bound_check(
    scfe_outcomes: &[CfeOutcome],
    rocerf_outcomes: &[CfeOutcome],
    model: &Model,
    k: usize,
    n: usize,
) -> Result<CostBoundReport, HarnessError> {
    if scfe_outcomes.len() != rocerf_outcomes.len() {
        return Err(HarnessError::UnpairedResults {
            left: scfe_outcomes.len(),
            right: rocerf_outcomes.len(),
        });
    }
    let theta_norm = norm2(model.flat_params().view());
    let mut deltas = Vec::new();
    for (s, r) in scfe_outcomes.iter().zip(rocerf_outcomes) {
        if let (Ok(s), Ok(r)) = (s, r) {
            deltas.push(r.cost_l2 - s.cost_l2);
        }
    }
    let pairs = deltas.len();
    let (mean_extra_cost, _) = mean_se(&deltas);
    let max_extra_cost = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if k == 0 {
        0.0
    } else {
        n as f64 * theta_norm / k as f64
    };
    let implied: Vec<f64> = deltas.iter().map(|d| d * scale).collect();
    let (implied_c_mean, _) = mean_se(&implied);
    let implied_c_max = implied.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CostBoundReport {
        pairs,
        mean_extra_cost,
        max_extra_cost,
        implied_c_mean,
        implied_c_max,
        k,
        n,
        theta_norm,
    })
}

// ---------------------------------------------------------------------------
// k-sensitivity sweep
// ---------------------------------------------------------------------------

/// Validity grid over (k, α) plus the "protected below the budget" pattern
/// verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k_values: Vec<usize>,
    pub alphas: Vec<f64>,
    /// validity[k_index][alpha_index]
    pub validity: Vec<Vec<f64>>,
    /// Per k: does every α with ⌈α·n⌉ ≤ k dominate every α with ⌈α·n⌉ > k,
    /// within the tolerance?
    pub pattern_holds: Vec<bool>,
    pub tolerance: f64,
}

/// Soft-assert tolerance for the sweep pattern.
pub const SWEEP_TOLERANCE: f64 = 0.02;

/// Generate robust counterfactuals per k (δ = 0) and evaluate each across the
/// α grid with [`run_removal_trials`].
pub fn k_sensitivity_sweep(
    train: &Dataset,
    negatives: &[Array1<f64>],
    model: &Model,
    cache: &InfluenceCache,
    k_values: &[usize],
    alphas: &[f64],
    trials: usize,
    seed: u64,
    model_spec: &ModelSpec,
) -> Result<SweepGrid, HarnessError> {
    use crate::recourse::{batch_explain, Method, RocerfConfig};
    let mut validity = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let cfg = RocerfConfig::new(k, 0.0);
        let method = [MethodCfes {
            method: format!("rocerf_k{k}"),
            outcomes: batch_explain(model, Some(cache), negatives, Method::Rocerf, &cfg)?,
        }];
        let mut row = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let spec = TrialSpec::new(alpha, trials, seed, *model_spec);
            let report = run_removal_trials(train, &spec, &method)?;
            row.push(report.entries[0].validity_mean);
        }
        validity.push(row);
    }
    let n = train.n() as f64;
    let pattern_holds = k_values
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let covered: Vec<f64> = alphas
                .iter()
                .enumerate()
                .filter(|(_, &a)| (a * n).ceil() as usize <= k)
                .map(|(ai, _)| validity[ki][ai])
                .collect();
            let uncovered: Vec<f64> = alphas
                .iter()
                .enumerate()
                .filter(|(_, &a)| (a * n).ceil() as usize > k)
                .map(|(ai, _)| validity[ki][ai])
                .collect();
            match (covered.iter().copied().reduce(f64::min), uncovered.iter().copied().reduce(f64::max)) {
                (Some(cmin), Some(umax)) => cmin >= umax - SWEEP_TOLERANCE,
                _ => true, // one side empty: vacuously holds
            }
        })
        .collect();
    Ok(SweepGrid {
        k_values: k_values.to_vec(),
        alphas: alphas.to_vec(),
        validity,
        pattern_holds,
        tolerance: SWEEP_TOLERANCE,
    })
}

// ---------------------------------------------------------------------------
// Report persistence
// ---------------------------------------------------------------------------

/// Full report as JSON.
pub fn write_report_json(
    report: &EvalReport,
    path: impl AsRef<std::path::Path>,
) -> Result<(), HarnessError> {
    let bytes = serde_json::to_vec_pretty(report)?;
    crate::ioutil::atomic_write(path.as_ref(), &bytes)?;
    Ok(())
}

/// Flat plot-ready CSV: one row per (method, α).
pub fn write_report_csv(
    report: &EvalReport,
    path: impl AsRef<std::path::Path>,
) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "method",
            "alpha",
            "validity_mean",
            "validity_se",
            "cost_l2_mean",
            "cost_l2_se",
            "cost_l1_mean",
            "cost_l1_se",
        ])?;
        for e in &report.entries {
            w.write_record([
                e.method.clone(),
                format!("{}", e.alpha),
                format!("{}", e.validity_mean),
                format!("{}", e.validity_se),
                format!("{}", e.cost_l2_mean),
                format!("{}", e.cost_l2_se),
                format!("{}", e.cost_l1_mean),
                format!("{}", e.cost_l1_se),
            ])?;
        }
        w.flush()?;
    }
    crate::ioutil::atomic_write(path.as_ref(), &buf)?;
    Ok(())
}
