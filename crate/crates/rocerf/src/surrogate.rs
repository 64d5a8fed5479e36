//! Local linear approximation of a black-box classifier.
//!
//! Fits a logistic regression to the black box's hard labels on Gaussian
//! perturbations around one input, then runs the efficient linear robust path
//! against that surrogate: per-sample gradients and Hessians use the
//! logistic-regression formulas evaluated at the surrogate parameters over
//! the *original* training points, so deletions of real training rows keep
//! their per-point influence terms. Validity is always judged against the
//! black box (or its exact retrains), never against the surrogate.
//!
//! The surrogate has no separate intercept; run it on feature spaces that
//! carry a bias column (the preprocessor appends one by default,
//! [`crate::data::Dataset::with_bias_column`] retrofits one) so its
//! through-the-origin hyperplanes can represent affine local boundaries.

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::models::{
    build_hessian_factor, predicted_label, train_logreg, Classifier, LinearClassifier, Model,
    ModelError,
};
use crate::recourse::{rocerf, CfeResult, RecourseError, RocerfConfig};
use crate::rng;
use crate::unlearn::{build_influence_cache, UnlearnError};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("all {n_perturb} perturbations landed in class {class}; widen the noise")]
    DegenerateLabels { class: i8, n_perturb: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Perturbation-fit settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateSettings {
    /// Number of Gaussian perturbations around the input.
    pub n_perturb: usize,
    /// Noise scale parameter.
    pub noise: f64,
    /// When true (default) `noise` is a variance, per the N(mean, variance)
    /// reading; when false it is used directly as the standard deviation.
    pub noise_is_variance: bool,
    /// Ridge strength of the local logistic fit (also used in its influence
    /// formulas); keeps the fit finite when the local labels are separable.
    pub gamma: f64,
    pub seed: u64,
    /// Results whose sign-agreement accuracy falls below this carry the
    /// low-fidelity flag.
    pub fidelity_floor: f64,
    /// On all-one-class perturbations, double σ and refit up to this many
    /// times before giving up. 0 keeps the strict single-shot contract.
    #[serde(default)]
    pub widen_attempts: usize,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            n_perturb: 10_000,
            noise: 0.1,
            noise_is_variance: true,
            gamma: 1e-3,
            seed: 0,
            fidelity_floor: 0.8,
            widen_attempts: 0,
        }
    }
}

impl SurrogateSettings {
    pub fn sigma(&self) -> f64 {
        if self.noise_is_variance {
            self.noise.sqrt()
        } else {
            self.noise
        }
    }
}

/// A fitted local linear stand-in for the black box around one input.
#[derive(Debug, Clone)]
pub struct LocalSurrogate {
    pub theta_local: Array1<f64>,
    pub center: Array1<f64>,
    /// Fraction of perturbations where the surrogate's sign matches the
    /// black box's.
    pub fit_accuracy: f64,
    /// The σ the accepted fit actually used (larger than the configured one
    /// when widening kicked in).
    pub sigma_used: f64,
}

/// Fit a surrogate at `x0` from hard black-box labels on
/// `x0 + σ·N(0, I)` perturbations, uniform weights.
pub fn fit_local_surrogate(
    blackbox: &dyn Classifier,
    x0: ArrayView1<f64>,
    settings: &SurrogateSettings,
) -> Result<LocalSurrogate, SurrogateError> {
    let d = blackbox.feature_dim();
    if x0.len() != d {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            got: x0.len(),
        }
        .into());
    }
    let mut sigma = settings.sigma();
    let mut rng = rng::seeded(settings.seed);
    let mut last_class = 0i8;
    for _attempt in 0..=settings.widen_attempts {
        let mut features = Array2::<f64>::zeros((settings.n_perturb, d));
        let mut labels = Vec::with_capacity(settings.n_perturb);
        for j in 0..settings.n_perturb {
            for c in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                features[(j, c)] = x0[c] + sigma * z;
            }
            let score = blackbox.score(features.row(j))?;
            labels.push(predicted_label(score));
        }
        if labels.iter().all(|&y| y == labels[0]) {
            last_class = labels[0];
            sigma *= 2.0;
            continue;
        }
        let names = (0..d).map(|c| format!("x{c}")).collect();
        let ds = Dataset::new(features, labels, names)?;
        let fit = train_logreg(&ds, settings.gamma, 1e-10, 100)?;
        let agree = (0..ds.n())
            .filter(|&j| predicted_label(fit.score(ds.x(j)).unwrap()) == ds.y(j))
            .count();
        return Ok(LocalSurrogate {
            theta_local: fit.theta,
            center: x0.to_owned(),
            fit_accuracy: agree as f64 / settings.n_perturb as f64,
            sigma_used: sigma,
        });
    }
    Err(SurrogateError::DegenerateLabels {
        class: last_class,
        n_perturb: settings.n_perturb,
    })
}

/// Provenance of a surrogate-path counterfactual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateInfo {
    pub fit_accuracy: f64,
    pub n_perturb: usize,
    /// The configured σ.
    pub sigma: f64,
    /// The σ the fit actually used after any widening.
    pub sigma_used: f64,
    pub noise_is_variance: bool,
    /// Set when `fit_accuracy` fell below the configured floor.
    pub low_fidelity: bool,
}

/// A counterfactual generated against a local surrogate, with the fit's
/// provenance attached.
#[derive(Debug, Clone)]
pub struct SurrogateCfe {
    pub result: CfeResult,
    pub surrogate: SurrogateInfo,
}

/// Run the linear robust path against a per-input surrogate of a black box.
///
/// Influence terms come from the logistic formulas at the surrogate
/// parameters over the original training rows; θ_local is not that set's
/// minimizer, so this is a modeling choice, recorded in the provenance.
pub fn rocerf_via_surrogate(
    blackbox: &dyn Classifier,
    train: &Dataset,
    x0: ArrayView1<f64>,
    cfg: &RocerfConfig,
    settings: &SurrogateSettings,
) -> Result<SurrogateCfe, SurrogateError> {
    let score = blackbox.score(x0)?;
    if score >= 0.0 {
        return Err(RecourseError::NotNegativeSample { score }.into());
    }
    let surrogate = fit_local_surrogate(blackbox, x0, settings)?;
    let model = Model::Linear(LinearClassifier {
        theta: surrogate.theta_local.clone(),
        gamma: settings.gamma,
    });
    let factor = build_hessian_factor(&model, train, 0.0)?;
    let cache = build_influence_cache(&model, train, &factor)?;
    let result = rocerf(&model, &cache, x0, cfg)?;
    Ok(SurrogateCfe {
        result,
        surrogate: SurrogateInfo {
            fit_accuracy: surrogate.fit_accuracy,
            n_perturb: settings.n_perturb,
            sigma: settings.sigma(),
            sigma_used: surrogate.sigma_used,
            noise_is_variance: settings.noise_is_variance,
            low_fidelity: surrogate.fit_accuracy < settings.fidelity_floor,
        },
    })
}
