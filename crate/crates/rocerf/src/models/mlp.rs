//! Small feed-forward classifier: three hidden layers of width 2d with
//! centered-softplus activation `a(z) = log(1+eᶻ) − log 2` and a scalar
//! linear head, trained by minibatch SGD on the logistic loss.
//!
//! The forward and backward passes are written once, generic over a scalar
//! type. Instantiated at `f64` they give the score, the parameter gradient
//! β(x) = ∂f/∂θ, and the input gradient ∂f/∂x. Instantiated at a dual number
//! whose tangent is seeded with a parameter direction they additionally give
//! Hessian-vector products of the loss and the mixed derivative
//! ∂/∂x (β(x)ᵀc), both exact to machine precision — no second tape needed.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use super::linear::{sigmoid, softplus};
use super::ModelError;
use crate::data::Dataset;
use crate::rng;

const LN_2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Scalar abstraction
// ---------------------------------------------------------------------------

pub(crate) trait Scalar: Copy {
    fn from_f64(v: f64) -> Self;
    fn add(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn neg(self) -> Self;
    /// Centered softplus `log(1+eᶻ) − log 2`.
    fn centered_softplus(self) -> Self;
    /// Logistic function (the derivative of softplus).
    fn sigmoid(self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn neg(self) -> Self {
        -self
    }
    fn centered_softplus(self) -> Self {
        softplus(self) - LN_2
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
}

/// Forward-mode dual number: value plus tangent along one direction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Self {
        Dual { v, t: 0.0 }
    }
    fn add(self, o: Self) -> Self {
        Dual {
            v: self.v + o.v,
            t: self.t + o.t,
        }
    }
    fn mul(self, o: Self) -> Self {
        Dual {
            v: self.v * o.v,
            t: self.v * o.t + self.t * o.v,
        }
    }
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            t: -self.t,
        }
    }
    fn centered_softplus(self) -> Self {
        Dual {
            v: softplus(self.v) - LN_2,
            t: self.t * sigmoid(self.v),
        }
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.v);
        Dual {
            v: s,
            t: self.t * s * (1.0 - s),
        }
    }
}

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MlpHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Layer sizes for input dimension `d`: three hidden layers of width 2d and a
/// scalar head.
fn layer_sizes(d: usize) -> [(usize, usize); 4] {
    let h = 2 * d;
    [(h, d), (h, h), (h, h), (1, h)]
}

/// Total parameter count: `10d² + 8d + 1`.
pub fn mlp_param_dim(d: usize) -> usize {
    layer_sizes(d).iter().map(|(o, i)| o * (i + 1)).sum()
}

/// Trained feed-forward network. Parameters are stored flattened as
/// `[W₁ row-major, b₁, W₂, b₂, W₃, b₃, W₄, b₄]`.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub d: usize,
    pub params: Array1<f64>,
    pub gamma: f64,
    pub hyper: MlpHyper,
}

/// Offsets of each layer's weight block and bias block in the flat vector.
fn layer_offsets(d: usize) -> [(usize, usize); 4] {
    let mut out = [(0usize, 0usize); 4];
    let mut cursor = 0;
    for (l, (rows, cols)) in layer_sizes(d).iter().enumerate() {
        out[l] = (cursor, cursor + rows * cols);
        cursor += rows * (cols + 1);
    }
    out
}

/// One generic forward + backward pass.
///
/// Returns the score, and when `want_grads` is set, `∂f/∂θ` (flat layout) and
/// `∂f/∂x`.
fn score_pass<S: Scalar>(
    d: usize,
    params: &[S],
    x: &[S],
    want_grads: bool,
) -> (S, Option<(Vec<S>, Vec<S>)>) {
    let sizes = layer_sizes(d);
    let offsets = layer_offsets(d);
    let zero = S::from_f64(0.0);

    // Forward, keeping pre-activations for the backward pass.
    let mut activations: Vec<Vec<S>> = Vec::with_capacity(5);
    activations.push(x.to_vec());
    let mut preacts: Vec<Vec<S>> = Vec::with_capacity(4);
    for (l, &(rows, cols)) in sizes.iter().enumerate() {
        let (w_off, b_off) = offsets[l];
        let input = &activations[l];
        let mut z = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut acc = params[b_off + r];
            let row = &params[w_off + r * cols..w_off + (r + 1) * cols];
            for c in 0..cols {
                acc = acc.add(row[c].mul(input[c]));
            }
            z.push(acc);
        }
        let a = if l < 3 {
            z.iter().map(|v| v.centered_softplus()).collect()
        } else {
            z.clone()
        };
        preacts.push(z);
        activations.push(a);
    }
    let score = activations[4][0];
    if !want_grads {
        return (score, None);
    }

    // Backward from the scalar head.
    let mut grad_params = vec![zero; params.len()];
    let mut delta: Vec<S> = vec![S::from_f64(1.0)];
    for l in (0..4).rev() {
        let (rows, cols) = sizes[l];
        let (w_off, b_off) = offsets[l];
        let input = &activations[l];
        for r in 0..rows {
            grad_params[b_off + r] = delta[r];
            for c in 0..cols {
                grad_params[w_off + r * cols + c] = delta[r].mul(input[c]);
            }
        }
        // Propagate to the layer below: δ_prev = Wᵀδ ⊙ act'(z_prev).
        let mut below = vec![zero; cols];
        for c in 0..cols {
            let mut acc = zero;
            for r in 0..rows {
                acc = acc.add(params[w_off + r * cols + c].mul(delta[r]));
            }
            below[c] = acc;
        }
        if l > 0 {
            let z_prev = &preacts[l - 1];
            for c in 0..cols {
                below[c] = below[c].mul(z_prev[c].sigmoid());
            }
        }
        delta = below;
    }
    let grad_x = delta;
    (score, Some((grad_params, grad_x)))
}

impl MlpClassifier {
    pub fn param_dim(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn check_dim(&self, x: ArrayView1<f64>) -> Result<(), ModelError> {
        if x.len() != self.d {
            return Err(ModelError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn score(&self, x: ArrayView1<f64>) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        let xs: Vec<f64> = x.to_vec();
        Ok(score_pass(self.d, self.params.as_slice().unwrap(), &xs, false).0)
    }

    /// β(x) = ∂f/∂θ at the trained parameters.
    pub fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        let xs: Vec<f64> = x.to_vec();
        let (_, grads) = score_pass(self.d, self.params.as_slice().unwrap(), &xs, true);
        Ok(Array1::from_vec(grads.unwrap().0))
    }

    /// ∂f/∂x at the trained parameters.
    pub fn input_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        let xs: Vec<f64> = x.to_vec();
        let (_, grads) = score_pass(self.d, self.params.as_slice().unwrap(), &xs, true);
        Ok(Array1::from_vec(grads.unwrap().1))
    }

    /// Mixed derivative `∂/∂x (β(x)ᵀ c)` for a fixed parameter direction `c`:
    /// a dual pass with the parameter tangent seeded at `c`, reading off the
    /// tangent of ∂f/∂x.
    pub fn mixed_input_gradient(
        &self,
        x: ArrayView1<f64>,
        c: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        if c.len() != self.param_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.param_dim(),
                got: c.len(),
            });
        }
        let params: Vec<Dual> = self
            .params
            .iter()
            .zip(c.iter())
            .map(|(&v, &t)| Dual { v, t })
            .collect();
        let xs: Vec<Dual> = x.iter().map(|&v| Dual { v, t: 0.0 }).collect();
        let (_, grads) = score_pass(self.d, &params, &xs, true);
        Ok(Array1::from_vec(
            grads.unwrap().1.into_iter().map(|g| g.t).collect(),
        ))
    }

    /// Per-sample loss gradient: `−σ(−y f(x))·y·β(x) + γθ`.
    pub fn loss_gradient(&self, x: ArrayView1<f64>, y: i8) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        let xs: Vec<f64> = x.to_vec();
        let (score, grads) = score_pass(self.d, self.params.as_slice().unwrap(), &xs, true);
        let beta = Array1::from_vec(grads.unwrap().0);
        let y = f64::from(y);
        let coeff = -sigmoid(-y * score) * y;
        Ok(&beta * coeff + &(&self.params * self.gamma))
    }

    /// Per-sample loss Hessian–vector product via one dual pass: tangent of
    /// the loss gradient along the parameter direction `v`.
    pub fn loss_hvp(
        &self,
        x: ArrayView1<f64>,
        y: i8,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>, ModelError> {
        self.check_dim(x)?;
        if v.len() != self.param_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.param_dim(),
                got: v.len(),
            });
        }
        let params: Vec<Dual> = self
            .params
            .iter()
            .zip(v.iter())
            .map(|(&pv, &t)| Dual { v: pv, t })
            .collect();
        let xs: Vec<Dual> = x.iter().map(|&xv| Dual { v: xv, t: 0.0 }).collect();
        let (score, grads) = score_pass(self.d, &params, &xs, true);
        let beta = grads.unwrap().0;
        let y = f64::from(y);
        let yd = Dual { v: y, t: 0.0 };
        let coeff = yd.mul(score).neg().sigmoid().mul(yd).neg();
        let gamma = Dual {
            v: self.gamma,
            t: 0.0,
        };
        let out: Vec<f64> = beta
            .into_iter()
            .zip(params.iter())
            .map(|(b, p)| coeff.mul(b).add(gamma.mul(*p)).t)
            .collect();
        Ok(Array1::from_vec(out))
    }

    /// Mean logistic loss plus the γ-regularizer over a dataset.
    pub fn mean_loss(&self, ds: &Dataset) -> f64 {
        let n = ds.n() as f64;
        let data: f64 = (0..ds.n())
            .map(|i| {
                let f = self.score(ds.x(i)).expect("dimensions fixed");
                softplus(-f64::from(ds.y(i)) * f)
            })
            .sum();
        data / n + 0.5 * self.gamma * self.params.dot(&self.params)
    }
}

/// Train by minibatch SGD; deterministic under `hyper.seed`.
pub fn train_mlp(train: &Dataset, hyper: MlpHyper, gamma: f64) -> Result<MlpClassifier, ModelError> {
    if !train.has_both_classes() {
        return Err(ModelError::DegenerateLabels);
    }
    assert!(gamma >= 0.0);
    let d = train.d();
    let mut rng = rng::seeded(hyper.seed);

    // Xavier-uniform weights, zero biases.
    let p = mlp_param_dim(d);
    let mut params = Array1::<f64>::zeros(p);
    let offsets = layer_offsets(d);
    for (l, (rows, cols)) in layer_sizes(d).iter().enumerate() {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let (w_off, _) = offsets[l];
        for k in 0..rows * cols {
            params[w_off + k] = rng.random_range(-limit..limit);
        }
    }

    let mut model = MlpClassifier {
        d,
        params,
        gamma,
        hyper,
    };
    let n = train.n();
    let batch = hyper.batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..hyper.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grad = Array1::<f64>::zeros(model.param_dim());
            for &i in chunk {
                let xs: Vec<f64> = train.x(i).to_vec();
                let (score, grads) =
                    score_pass(model.d, model.params.as_slice().unwrap(), &xs, true);
                let beta = Array1::from_vec(grads.unwrap().0);
                let y = f64::from(train.y(i));
                grad.scaled_add(-sigmoid(-y * score) * y / chunk.len() as f64, &beta);
            }
            grad.scaled_add(gamma, &model.params);
            model.params.scaled_add(-hyper.learning_rate, &grad);
        }
        let loss = model.mean_loss(train);
        if !loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch });
        }
    }
    Ok(model)
}
