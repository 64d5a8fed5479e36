//! Classifiers and their derivative surface.
//!
//! Everything downstream needs five things from a trained model: the score
//! `f(x)`, the parameter gradient `β(x) = ∂f/∂θ`, per-sample loss gradients
//! `gᵢ(θ̂)`, Hessian access via [`HessianFactor`], and (for recourse) input
//! gradients. [`Model`] wraps both families behind the [`Classifier`] trait.

mod hessian;
mod linear;
mod mlp;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::linalg::LinalgError;

pub use hessian::{build_hessian_factor, HessianFactor, DEFAULT_MLP_DAMPING, SOLVE_REL_TOL};
pub use linear::{train_logreg, LinearClassifier, DEFAULT_NEWTON_MAX_ITERS, DEFAULT_NEWTON_TOL};
pub use mlp::{mlp_param_dim, train_mlp, MlpClassifier, MlpHyper};


#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training index {index} out of range for n={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(
        "Newton did not converge: gradient norm {grad_norm:.3e} after {iters} iterations (tol {tol:.1e})"
    )]
    NonConvergence {
        grad_norm: f64,
        iters: usize,
        tol: f64,
    },
    #[error("training loss diverged to NaN/Inf at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("both classes must be present to train")]
    DegenerateLabels,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("model file: {detail}")]
    BadModelFile { detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Predicted label under the `f ≥ 0 ↦ +1` convention.
pub fn predicted_label(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// The derivative surface shared by both model families.
pub trait Classifier: Send + Sync {
    /// Input dimension d.
    fn feature_dim(&self) -> usize;
    /// Parameter dimension p (d for linear models).
    fn param_dim(&self) -> usize;
    fn gamma(&self) -> f64;
    fn score(&self, x: ArrayView1<f64>) -> Result<f64, ModelError>;
    /// β(x) = ∂f/∂θ at the trained parameters. For linear models this is `x`
    /// itself, returned without any differentiation pass.
    fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError>;
    /// ∂f/∂x at the trained parameters.
    fn input_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError>;
    /// ∂/∂x (β(x)ᵀc) for a fixed parameter-space vector `c`. For linear
    /// models β(x)ᵀc = xᵀc, so this is `c`.
    fn mixed_input_gradient(
        &self,
        x: ArrayView1<f64>,
        c: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError>;
    /// Per-sample loss gradient g(θ̂) at a labeled point, including the γθ term.
    fn loss_gradient(&self, x: ArrayView1<f64>, y: i8) -> Result<Array1<f64>, ModelError>;
    /// Per-sample loss Hessian–vector product at the trained parameters.
    fn loss_hvp(
        &self,
        x: ArrayView1<f64>,
        y: i8,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError>;
    /// Trained parameters, flattened.
    fn flat_params(&self) -> Array1<f64>;
}

impl Classifier for LinearClassifier {
    fn feature_dim(&self) -> usize {
        self.d()
    }
    fn param_dim(&self) -> usize {
        self.d()
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn score(&self, x: ArrayView1<f64>) -> Result<f64, ModelError> {
        LinearClassifier::score(self, x)
    }
    fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        Ok(x.to_owned())
    }
    fn input_gradient(&self, _x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        Ok(self.theta.clone())
    }
    fn mixed_input_gradient(
        &self,
        _x: ArrayView1<f64>,
        c: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        if c.len() != self.d() {
            return Err(ModelError::DimensionMismatch {
                expected: self.d(),
                got: c.len(),
            });
        }
        Ok(c.to_owned())
    }
    fn loss_gradient(&self, x: ArrayView1<f64>, y: i8) -> Result<Array1<f64>, ModelError> {
        LinearClassifier::loss_gradient(self, x, y)
    }
    fn loss_hvp(
        &self,
        x: ArrayView1<f64>,
        _y: i8,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        LinearClassifier::loss_hvp(self, x, v)
    }
    fn flat_params(&self) -> Array1<f64> {
        self.theta.clone()
    }
}

impl Classifier for MlpClassifier {
    fn feature_dim(&self) -> usize {
        self.d
    }
    fn param_dim(&self) -> usize {
        MlpClassifier::param_dim(self)
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn score(&self, x: ArrayView1<f64>) -> Result<f64, ModelError> {
        MlpClassifier::score(self, x)
    }
    fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        MlpClassifier::param_gradient(self, x)
    }
    fn input_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        MlpClassifier::input_gradient(self, x)
    }
    fn mixed_input_gradient(
        &self,
        x: ArrayView1<f64>,
        c: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        MlpClassifier::mixed_input_gradient(self, x, c)
    }
    fn loss_gradient(&self, x: ArrayView1<f64>, y: i8) -> Result<Array1<f64>, ModelError> {
        MlpClassifier::loss_gradient(self, x, y)
    }
    fn loss_hvp(
        &self,
        x: ArrayView1<f64>,
        y: i8,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        MlpClassifier::loss_hvp(self, x, y, v)
    }
    fn flat_params(&self) -> Array1<f64> {
        self.params.clone()
    }
}

/// A trained model of either family.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearClassifier),
    Mlp(MlpClassifier),
}

impl Model {
    pub fn as_classifier(&self) -> &dyn Classifier {
        match self {
            Model::Linear(m) => m,
            Model::Mlp(m) => m,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Mlp(_) => "mlp",
        }
    }
}

impl Classifier for Model {
    fn feature_dim(&self) -> usize {
        self.as_classifier().feature_dim()
    }
    fn param_dim(&self) -> usize {
        self.as_classifier().param_dim()
    }
    fn gamma(&self) -> f64 {
        self.as_classifier().gamma()
    }
    fn score(&self, x: ArrayView1<f64>) -> Result<f64, ModelError> {
        self.as_classifier().score(x)
    }
    fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.as_classifier().param_gradient(x)
    }
    fn input_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.as_classifier().input_gradient(x)
    }
    fn mixed_input_gradient(
        &self,
        x: ArrayView1<f64>,
        c: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        self.as_classifier().mixed_input_gradient(x, c)
    }
    fn loss_gradient(&self, x: ArrayView1<f64>, y: i8) -> Result<Array1<f64>, ModelError> {
        self.as_classifier().loss_gradient(x, y)
    }
    fn loss_hvp(
        &self,
        x: ArrayView1<f64>,
        y: i8,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        self.as_classifier().loss_hvp(x, y, v)
    }
    fn flat_params(&self) -> Array1<f64> {
        self.as_classifier().flat_params()
    }
}

/// Training recipe, sufficient to retrain identically on any dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Logreg {
        gamma: f64,
        newton_tol: f64,
        max_iters: usize,
    },
    Mlp {
        gamma: f64,
        hyper: MlpHyper,
    },
}

impl ModelSpec {
    pub fn logreg_default(gamma: f64) -> Self {
        ModelSpec::Logreg {
            gamma,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_iters: DEFAULT_NEWTON_MAX_ITERS,
        }
    }

    pub fn train(&self, train: &Dataset) -> Result<Model, ModelError> {
        match *self {
            ModelSpec::Logreg {
                gamma,
                newton_tol,
                max_iters,
            } => Ok(Model::Linear(train_logreg(
                train, gamma, newton_tol, max_iters,
            )?)),
            ModelSpec::Mlp { gamma, hyper } => Ok(Model::Mlp(train_mlp(train, hyper, gamma)?)),
        }
    }
}

/// gᵢ(θ̂) for training row `i`.
pub fn per_sample_gradient(
    model: &dyn Classifier,
    train: &Dataset,
    i: usize,
) -> Result<Array1<f64>, ModelError> {
    if i >= train.n() {
        return Err(ModelError::IndexOutOfRange {
            index: i,
            n: train.n(),
        });
    }
    model.loss_gradient(train.x(i), train.y(i))
}

/// β(x) at the trained parameters.
pub fn param_gradient(
    model: &dyn Classifier,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>, ModelError> {
    model.param_gradient(x)
}

/// Fraction of rows whose predicted label matches.
pub fn accuracy(model: &dyn Classifier, ds: &Dataset) -> f64 {
    let correct = (0..ds.n())
        .filter(|&i| {
            let f = model.score(ds.x(i)).expect("dataset dims match model");
            predicted_label(f) == ds.y(i)
        })
        .count();
    correct as f64 / ds.n() as f64
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    family: String,
    feature_dim: usize,
    gamma: f64,
    /// Flattened parameters, full precision via shortest-round-trip decimal.
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyper: Option<MlpHyper>,
}

/// Serialize a model to the versioned JSON document.
pub fn save_model(model: &Model, path: impl AsRef<std::path::Path>) -> Result<(), ModelError> {
    let file = match model {
        Model::Linear(m) => ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            family: "linear".into(),
            feature_dim: m.d(),
            gamma: m.gamma,
            params: m.theta.to_vec(),
            hyper: None,
        },
        Model::Mlp(m) => ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            family: "mlp".into(),
            feature_dim: m.d,
            gamma: m.gamma,
            params: m.params.to_vec(),
            hyper: Some(m.hyper),
        },
    };
    let bytes = serde_json::to_vec_pretty(&file)?;
    crate::ioutil::atomic_write(path.as_ref(), &bytes)?;
    Ok(())
}

/// Load a model saved by [`save_model`].
pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<Model, ModelError> {
    let bytes = std::fs::read(path.as_ref())?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelError::BadModelFile {
            detail: format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            ),
        });
    }
    match file.family.as_str() {
        "linear" => {
            if file.params.len() != file.feature_dim {
                return Err(ModelError::BadModelFile {
                    detail: "parameter count differs from feature_dim".into(),
                });
            }
            Ok(Model::Linear(LinearClassifier {
                theta: Array1::from_vec(file.params),
                gamma: file.gamma,
            }))
        }
        "mlp" => {
            if file.params.len() != mlp_param_dim(file.feature_dim) {
                return Err(ModelError::BadModelFile {
                    detail: "parameter count differs from the architectural formula".into(),
                });
            }
            Ok(Model::Mlp(MlpClassifier {
                d: file.feature_dim,
                params: Array1::from_vec(file.params),
                gamma: file.gamma,
                hyper: file.hyper.unwrap_or_default(),
            }))
        }
        other => Err(ModelError::BadModelFile {
            detail: format!("unknown family '{other}'"),
        }),
    }
}
