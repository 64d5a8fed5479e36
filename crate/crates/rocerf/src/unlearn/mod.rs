//! Leave-k-out machinery.
//!
//! Deleting training point i moves the optimum by roughly `(1/n)·H⁻¹gᵢ(θ̂)`,
//! the classical influence step. This module precomputes those n vectors once
//! per trained model ([`build_influence_cache`]); after that, the parameters
//! retrained without any index set, the corresponding approximate score, and
//! the worst case over *all* C(n,k) deletions of size k are each a cheap
//! linear computation:
//!
//! - [`approx_params`]: `θ̃_w = θ̂ + (1/n)·Σ_{i removed} H⁻¹gᵢ`
//! - [`approx_score`]:  `f̃_w(x) = f(x) + (1/n)·Σ_{i removed} β(x)ᵀH⁻¹gᵢ`
//! - [`robust_score`]:  `f(x) + (1/n)·(sum of the k smallest β(x)ᵀH⁻¹gᵢ)`,
//!   which equals the minimum of `f̃_w(x)` over every size-k removal — the
//!   combinatorial constraint collapses to one bottom-k partial sort.
//!
//! [`retrain_exact`] is the ground-truth oracle the approximations are
//! validated against; nothing in this module is trusted without it.

mod cache_io;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::models::{Classifier, HessianFactor, Model, ModelError, ModelSpec};

pub use cache_io::{load_cache, save_cache};

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("k={k} exceeds the number of candidates n={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid removal mask: {detail}")]
    InvalidMask { detail: String },
    #[error("influence solve failed for training index {index}: {source}")]
    CacheBuild { index: usize, source: ModelError },
    #[error("removal leaves a single class; cannot retrain")]
    DegenerateLabels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cache file: {detail}")]
    CacheFile { detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Removal masks
// ---------------------------------------------------------------------------

/// A set of deleted training indices; the weight vector w∈{0,1}ⁿ with zeros
/// exactly at these indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalMask {
    removed: Vec<usize>,
    n: usize,
}

impl RemovalMask {
    pub fn new(mut removed: Vec<usize>, n: usize) -> Result<Self, UnlearnError> {
        removed.sort_unstable();
        if removed.windows(2).any(|w| w[0] == w[1]) {
            return Err(UnlearnError::InvalidMask {
                detail: "duplicate index".into(),
            });
        }
        if let Some(&last) = removed.last() {
            if last >= n {
                return Err(UnlearnError::InvalidMask {
                    detail: format!("index {last} out of range for n={n}"),
                });
            }
        }
        Ok(Self { removed, n })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            removed: Vec::new(),
            n,
        }
    }

    /// Uniform size-k sample without replacement, deterministic under the rng.
    pub fn sample(n: usize, k: usize, rng: &mut impl rand::Rng) -> Result<Self, UnlearnError> {
        if k > n {
            return Err(UnlearnError::KTooLarge { k, n });
        }
        let removed = rand::seq::index::sample(rng, n, k).into_vec();
        Self::new(removed, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.removed.len()
    }

    pub fn removed(&self) -> &[usize] {
        &self.removed
    }

    pub fn contains(&self, i: usize) -> bool {
        self.removed.binary_search(&i).is_ok()
    }

    /// Surviving indices, ascending.
    pub fn surviving(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.contains(*i)).collect()
    }

    /// Union of two disjoint masks over the same n.
    pub fn union(&self, other: &RemovalMask) -> Result<Self, UnlearnError> {
        if self.n != other.n {
            return Err(UnlearnError::SizeMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut all = self.removed.clone();
        all.extend_from_slice(&other.removed);
        Self::new(all, self.n)
    }
}

// ---------------------------------------------------------------------------
// Influence cache
// ---------------------------------------------------------------------------

/// The n precomputed vectors `H⁻¹gᵢ(θ̂)` plus the parameters they were taken
/// at. Built once per trained model; immutable afterwards.
#[derive(Debug, Clone)]
pub struct InfluenceCache {
    vectors: Array2<f64>,
    theta_hat: Array1<f64>,
    damping: f64,
}

impl InfluenceCache {
    pub fn from_parts(vectors: Array2<f64>, theta_hat: Array1<f64>, damping: f64) -> Self {
        assert_eq!(vectors.ncols(), theta_hat.len());
        Self {
            vectors,
            theta_hat,
            damping,
        }
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    /// Parameter dimension.
    pub fn p(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn theta_hat(&self) -> &Array1<f64> {
        &self.theta_hat
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

/// Solve `H⁻¹gᵢ(θ̂)` for every training row.
pub fn build_influence_cache(
    model: &dyn Classifier,
    train: &Dataset,
    factor: &HessianFactor,
) -> Result<InfluenceCache, UnlearnError> {
    let p = model.param_dim();
    if factor.dim() != p {
        return Err(UnlearnError::SizeMismatch {
            expected: p,
            got: factor.dim(),
        });
    }
    let rows: Vec<Array1<f64>> = (0..train.n())
        .into_par_iter()
        .map(|i| {
            let g = model
                .loss_gradient(train.x(i), train.y(i))
                .map_err(|source| UnlearnError::CacheBuild { index: i, source })?;
            factor
                .solve(g.view())
                .map_err(|source| UnlearnError::CacheBuild { index: i, source })
        })
        .collect::<Result<_, _>>()?;
    let mut vectors = Array2::<f64>::zeros((train.n(), p));
    for (i, row) in rows.into_iter().enumerate() {
        vectors.row_mut(i).assign(&row);
    }
    Ok(InfluenceCache {
        vectors,
        theta_hat: model.flat_params(),
        damping: factor.damping(),
    })
}

// ---------------------------------------------------------------------------
// Leave-k-out estimates
// ---------------------------------------------------------------------------

/// `θ̃_w = θ̂ + (1/n)·Σ_{i removed} H⁻¹gᵢ`.
pub fn approx_params(
    cache: &InfluenceCache,
    mask: &RemovalMask,
) -> Result<Array1<f64>, UnlearnError> {
    if mask.n() != cache.n() {
        return Err(UnlearnError::SizeMismatch {
            expected: cache.n(),
            got: mask.n(),
        });
    }
    let mut shift = Array1::<f64>::zeros(cache.p());
    for &i in mask.removed() {
        shift += &cache.vectors.row(i);
    }
    Ok(&cache.theta_hat + &(&shift / cache.n() as f64))
}

/// `f̃_w(x) = f(x) + (1/n)·Σ_{i removed} β(x)ᵀH⁻¹gᵢ`. For linear models this
/// equals `θ̃_wᵀx` exactly, since β(x) = x.
pub fn approx_score(
    cache: &InfluenceCache,
    model: &dyn Classifier,
    mask: &RemovalMask,
    x: ArrayView1<f64>,
) -> Result<f64, UnlearnError> {
    if mask.n() != cache.n() {
        return Err(UnlearnError::SizeMismatch {
            expected: cache.n(),
            got: mask.n(),
        });
    }
    check_cache_model(cache, model)?;
    let score = model.score(x)?;
    if mask.k() == 0 {
        return Ok(score);
    }
    let beta = model.param_gradient(x)?;
    let inv_n = 1.0 / cache.n() as f64;
    let shift: f64 = mask
        .removed()
        .iter()
        .map(|&i| beta.dot(&cache.vectors.row(i)))
        .sum();
    Ok(score + shift * inv_n)
}

fn check_cache_model(cache: &InfluenceCache, model: &dyn Classifier) -> Result<(), UnlearnError> {
    if model.param_dim() != cache.p() {
        return Err(UnlearnError::SizeMismatch {
            expected: cache.p(),
            got: model.param_dim(),
        });
    }
    Ok(())
}

/// The per-point deletion effects on the score at `x`:
/// entry i is `β(x)ᵀH⁻¹gᵢ(θ̂)`. One β evaluation and n dot products.
pub fn influence_set(
    cache: &InfluenceCache,
    model: &dyn Classifier,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>, UnlearnError> {
    check_cache_model(cache, model)?;
    let beta = model.param_gradient(x)?;
    Ok(cache.vectors.dot(&beta))
}

// ---------------------------------------------------------------------------
// Bottom-k selection
// ---------------------------------------------------------------------------

#[derive(PartialEq)]
struct HeapEntry {
    value: f64,
    index: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on (value, index): among equal values the larger index is
        // "greater" and gets evicted first, so ties keep the lowest index.
        self.value
            .total_cmp(&other.value)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum and positions of the k smallest entries, ties broken by lowest index.
/// O(n log k) via a bounded max-heap; the returned indices are ascending and
/// the sum is accumulated in that order.
pub fn bottom_k_sum(values: ArrayView1<f64>, k: usize) -> Result<(f64, Vec<usize>), UnlearnError> {
    let n = values.len();
    if k > n {
        return Err(UnlearnError::KTooLarge { k, n });
    }
    if k == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
    for (index, &value) in values.iter().enumerate() {
        if heap.len() < k {
            heap.push(HeapEntry { value, index });
        } else if let Some(top) = heap.peek() {
            if (HeapEntry { value, index }) < *top {
                heap.pop();
                heap.push(HeapEntry { value, index });
            }
        }
    }
    let mut indices: Vec<usize> = heap.into_iter().map(|e| e.index).collect();
    indices.sort_unstable();
    let sum = indices.iter().map(|&i| values[i]).sum();
    Ok((sum, indices))
}

/// The robust decision function
/// `f_A(x) = f(x) + (1/n)·min over size-k subsets of Σ β(x)ᵀH⁻¹gᵢ`.
///
/// With k = 0 this is exactly the plain score, same arithmetic path.
pub fn robust_score(
    cache: &InfluenceCache,
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    k: usize,
) -> Result<f64, UnlearnError> {
    if k > cache.n() {
        return Err(UnlearnError::KTooLarge { k, n: cache.n() });
    }
    if k == 0 {
        return Ok(model.score(x)?);
    }
    let set = influence_set(cache, model, x)?;
    let (sum, _) = bottom_k_sum(set.view(), k)?;
    Ok(model.score(x)? + sum / cache.n() as f64)
}

/// Gradient of the robust score at `x`, holding the selected bottom-k set
/// fixed (a valid subgradient; the exact gradient wherever the k-th and
/// (k+1)-th smallest influence values differ).
///
/// Linear models: `θ̂ + (1/n)·Σ_{selected} H⁻¹gᵢ`, the parameters of the
/// worst-case removal. Networks need one extra dual differentiation pass.
pub fn robust_score_gradient(
    cache: &InfluenceCache,
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    k: usize,
) -> Result<Array1<f64>, UnlearnError> {
    if k > cache.n() {
        return Err(UnlearnError::KTooLarge { k, n: cache.n() });
    }
    if k == 0 {
        return Ok(model.input_gradient(x)?);
    }
    let set = influence_set(cache, model, x)?;
    let (_, selected) = bottom_k_sum(set.view(), k)?;
    let mut c = Array1::<f64>::zeros(cache.p());
    for &i in &selected {
        c += &cache.vectors.row(i);
    }
    let mixed = model.mixed_input_gradient(x, c.view())?;
    Ok(model.input_gradient(x)? + &(&mixed / cache.n() as f64))
}

/// Train from scratch on the surviving rows with identical hyperparameters.
pub fn retrain_exact(
    train: &Dataset,
    mask: &RemovalMask,
    spec: &ModelSpec,
) -> Result<Model, UnlearnError> {
    if mask.n() != train.n() {
        return Err(UnlearnError::SizeMismatch {
            expected: train.n(),
            got: mask.n(),
        });
    }
    let survivors = mask.surviving();
    let reduced = train.subset(&survivors);
    if !reduced.has_both_classes() {
        return Err(UnlearnError::DegenerateLabels);
    }
    Ok(spec.train(&reduced)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_gaussians;
    use crate::linalg::norm2;
    use crate::models::{build_hessian_factor, train_logreg};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn trained_setup(
        n_per_class: usize,
        d: usize,
        seed: u64,
    ) -> (Dataset, Model, InfluenceCache) {
        let ds = make_synthetic_gaussians(n_per_class, d, 3.0, seed);
        let model = Model::Linear(train_logreg(&ds, 0.1, 1e-10, 100).unwrap());
        let factor = build_hessian_factor(&model, &ds, 0.0).unwrap();
        let cache = build_influence_cache(&model, &ds, &factor).unwrap();
        (ds, model, cache)
    }

    #[test]
    fn mask_validates_and_sorts() {
        let m = RemovalMask::new(vec![3, 1], 5).unwrap();
        assert_eq!(m.removed(), &[1, 3]);
        assert_eq!(m.surviving(), vec![0, 2, 4]);
        assert!(RemovalMask::new(vec![1, 1], 5).is_err());
        assert!(RemovalMask::new(vec![5], 5).is_err());
    }

    #[test]
    fn cache_vectors_satisfy_inverse_contract() {
        let (ds, model, cache) = trained_setup(4, 2, 1);
        let lin = match &model {
            Model::Linear(l) => l,
            _ => unreachable!(),
        };
        let h = lin.mean_hessian(&ds);
        for i in 0..ds.n() {
            let g = model.loss_gradient(ds.x(i), ds.y(i)).unwrap();
            let back = h.dot(&cache.vector(i).to_owned());
            let err = norm2((&back - &g).view());
            assert!(err <= 1e-8 * norm2(g.view()).max(1e-12), "row {i}: {err}");
        }
    }

    #[test]
    fn mean_influence_vector_is_optimality_residual() {
        let (_ds, _, cache) = trained_setup(20, 2, 3);
        let mut mean = Array1::<f64>::zeros(cache.p());
        for i in 0..cache.n() {
            mean += &cache.vector(i).to_owned();
        }
        mean /= cache.n() as f64;
        // H⁻¹ times a ≤1e−10 gradient stays tiny: ‖H⁻¹‖ ≤ 1/γ = 10 here.
        assert!(norm2(mean.view()) <= 1e-8);
    }

    #[test]
    fn cache_matches_dense_inverse_on_small_problem() {
        let (ds, model, cache) = trained_setup(4, 2, 7); // 8 points
        let lin = match &model {
            Model::Linear(l) => l,
            _ => unreachable!(),
        };
        let h = lin.mean_hessian(&ds);
        // Dense inverse via solves against unit vectors.
        let factor = crate::linalg::CholeskyFactor::new(&h).unwrap();
        for i in 0..ds.n() {
            let g = model.loss_gradient(ds.x(i), ds.y(i)).unwrap();
            let direct = factor.solve(g.view()).unwrap();
            for a in 0..ds.d() {
                assert_abs_diff_eq!(cache.vector(i)[a], direct[a], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn empty_mask_is_identity() {
        let (_, model, cache) = trained_setup(5, 2, 2);
        let mask = RemovalMask::empty(cache.n());
        let theta = approx_params(&cache, &mask).unwrap();
        assert_eq!(theta, *cache.theta_hat());
        let x = array![0.5, -1.0];
        let s = approx_score(&cache, &model, &mask, x.view()).unwrap();
        assert_eq!(s, model.score(x.view()).unwrap());
    }

    #[test]
    fn mask_linearity_is_exact() {
        let (_, _, cache) = trained_setup(6, 2, 4);
        let m1 = RemovalMask::new(vec![0, 3], cache.n()).unwrap();
        let m2 = RemovalMask::new(vec![5, 7], cache.n()).unwrap();
        let both = m1.union(&m2).unwrap();
        let t0 = cache.theta_hat().clone();
        let d1 = &approx_params(&cache, &m1).unwrap() - &t0;
        let d2 = &approx_params(&cache, &m2).unwrap() - &t0;
        let d12 = &approx_params(&cache, &both).unwrap() - &t0;
        // Exact in real arithmetic; the add-then-subtract of θ̂ leaves ulp-level
        // rounding, so the assertion sits at 1e-13.
        let sum = &d1 + &d2;
        for a in 0..d12.len() {
            assert_abs_diff_eq!(d12[a], sum[a], epsilon = 1e-13);
        }
    }

    #[test]
    fn duplicate_points_double_the_shift() {
        // Two identical rows: removing both shifts by 2/n times either vector.
        let mut ds = make_synthetic_gaussians(4, 2, 2.0, 9);
        let features = {
            let mut f = ds.features().clone();
            let row = f.row(0).to_owned();
            f.row_mut(1).assign(&row);
            f
        };
        ds = Dataset::new(features, ds.labels().to_vec(), ds.feature_names().to_vec()).unwrap();
        let model = Model::Linear(train_logreg(&ds, 0.1, 1e-10, 100).unwrap());
        let factor = build_hessian_factor(&model, &ds, 0.0).unwrap();
        let cache = build_influence_cache(&model, &ds, &factor).unwrap();
        let mask = RemovalMask::new(vec![0, 1], ds.n()).unwrap();
        let theta = approx_params(&cache, &mask).unwrap();
        let expected =
            cache.theta_hat() + &(&cache.vector(0).to_owned() * (2.0 / ds.n() as f64));
        for a in 0..ds.d() {
            assert_abs_diff_eq!(theta[a], expected[a], epsilon = 1e-14);
        }
    }

    #[test]
    fn single_removal_estimate_beats_staying_put() {
        // θ̃_w should land closer to the exact retrain than θ̂ does, for at
        // least 95 of the 100 single removals.
        let (ds, model, cache) = trained_setup(50, 2, 11); // n=100
        let spec = ModelSpec::logreg_default(0.1);
        let theta_full = model.flat_params();
        let mut closer = 0usize;
        for i in 0..ds.n() {
            let mask = RemovalMask::new(vec![i], ds.n()).unwrap();
            let exact = retrain_exact(&ds, &mask, &spec).unwrap().flat_params();
            let approx = approx_params(&cache, &mask).unwrap();
            let err_approx = norm2((&approx - &exact).view());
            let err_stay = norm2((&theta_full - &exact).view());
            if err_approx < err_stay {
                closer += 1;
            }
        }
        assert!(closer >= 95, "only {closer}/100 removals improved");
    }

    #[test]
    fn approx_score_equals_shifted_params_for_linear() {
        let (ds, model, cache) = trained_setup(10, 3, 5);
        let mask = RemovalMask::new(vec![2, 9, 13], ds.n()).unwrap();
        let theta = approx_params(&cache, &mask).unwrap();
        let x = array![0.4, -0.8, 1.2];
        let s = approx_score(&cache, &model, &mask, x.view()).unwrap();
        assert_abs_diff_eq!(s, theta.dot(&x), epsilon = 1e-12);
    }

    #[test]
    fn influence_set_matches_definitional_identity() {
        let (ds, model, cache) = trained_setup(6, 2, 8);
        let x = array![1.0, 0.3];
        let set = influence_set(&cache, &model, x.view()).unwrap();
        let mask = RemovalMask::new(vec![1, 4, 10], ds.n()).unwrap();
        let from_set = model.score(x.view()).unwrap()
            + mask.removed().iter().map(|&i| set[i]).sum::<f64>() / ds.n() as f64;
        let direct = approx_score(&cache, &model, &mask, x.view()).unwrap();
        assert_abs_diff_eq!(from_set, direct, epsilon = 1e-12);
    }

    #[test]
    fn influence_set_zero_for_zero_vectors() {
        let cache = InfluenceCache::from_parts(
            Array2::zeros((5, 2)),
            array![1.0, -1.0],
            0.0,
        );
        let model = crate::models::LinearClassifier {
            theta: array![1.0, -1.0],
            gamma: 0.1,
        };
        let set = influence_set(&cache, &model, array![3.0, 4.0].view()).unwrap();
        assert!(set.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bottom_k_examples() {
        let values = array![3.0, -1.0, 2.0, -5.0];
        let (sum, idx) = bottom_k_sum(values.view(), 2).unwrap();
        assert_eq!(sum, -6.0);
        assert_eq!(idx, vec![1, 3]);
        let (sum0, idx0) = bottom_k_sum(values.view(), 0).unwrap();
        assert_eq!((sum0, idx0.len()), (0.0, 0));
        let (sum_all, _) = bottom_k_sum(values.view(), 4).unwrap();
        assert_abs_diff_eq!(sum_all, -1.0, epsilon = 1e-15);
        assert!(matches!(
            bottom_k_sum(values.view(), 5),
            Err(UnlearnError::KTooLarge { k: 5, n: 4 })
        ));
    }

    #[test]
    fn bottom_k_ties_prefer_lowest_index() {
        let values = array![1.0, 0.0, 0.0, 0.0];
        let (_, idx) = bottom_k_sum(values.view(), 2).unwrap();
        assert_eq!(idx, vec![1, 2]);
    }

    /// Test-side enumeration of all size-k index subsets, independent of the
    /// bottom-k implementation it checks.
    fn enumerate_combos(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn robust_score_equals_exhaustive_minimum() {
        let (ds, model, cache) = trained_setup(5, 2, 13); // n=10
        let xs = [array![0.2, 0.7], array![-1.0, 0.1], array![2.0, -2.0]];
        for k in 0..=3usize {
            for x in &xs {
                let fast = robust_score(&cache, &model, x.view(), k).unwrap();
                let best = enumerate_combos(ds.n(), k)
                    .into_iter()
                    .map(|combo| {
                        let mask = RemovalMask::new(combo, ds.n()).unwrap();
                        approx_score(&cache, &model, &mask, x.view()).unwrap()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_abs_diff_eq!(fast, best, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn robust_score_lower_bounds_every_mask() {
        let (ds, model, cache) = trained_setup(6, 2, 17);
        let x = array![0.9, -0.4];
        let k = 2;
        let robust = robust_score(&cache, &model, x.view(), k).unwrap();
        for i in 0..ds.n() {
            for j in (i + 1)..ds.n() {
                let mask = RemovalMask::new(vec![i, j], ds.n()).unwrap();
                let s = approx_score(&cache, &model, &mask, x.view()).unwrap();
                assert!(robust <= s + 1e-12);
            }
        }
    }

    #[test]
    fn robust_gradient_matches_worst_mask_params_for_linear() {
        let (_, model, cache) = trained_setup(8, 2, 19);
        let x = array![0.3, 1.1];
        let k = 3;
        let set = influence_set(&cache, &model, x.view()).unwrap();
        let (_, selected) = bottom_k_sum(set.view(), k).unwrap();
        let mask = RemovalMask::new(selected, cache.n()).unwrap();
        let theta_worst = approx_params(&cache, &mask).unwrap();
        let grad = robust_score_gradient(&cache, &model, x.view(), k).unwrap();
        for a in 0..2 {
            assert_abs_diff_eq!(grad[a], theta_worst[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn robust_gradient_matches_finite_differences_away_from_ties() {
        let (ds, model, cache) = trained_setup(10, 2, 23);
        let k = 2;
        let x = array![0.8, -0.6];
        // Skip if the k-th and (k+1)-th order statistics collide.
        let set = influence_set(&cache, &model, x.view()).unwrap();
        let mut sorted: Vec<f64> = set.to_vec();
        sorted.sort_by(f64::total_cmp);
        if (sorted[k] - sorted[k - 1]).abs() < 1e-9 {
            return;
        }
        let grad = robust_score_gradient(&cache, &model, x.view(), k).unwrap();
        let h = 1e-6;
        for a in 0..ds.d() {
            let mut xp = x.clone();
            xp[a] += h;
            let mut xm = x.clone();
            xm[a] -= h;
            let fd = (robust_score(&cache, &model, xp.view(), k).unwrap()
                - robust_score(&cache, &model, xm.view(), k).unwrap())
                / (2.0 * h);
            let rel = (grad[a] - fd).abs() / fd.abs().max(1e-9);
            assert!(rel < 1e-6, "coord {a}: {} vs {fd}", grad[a]);
        }
    }

    #[test]
    fn retrain_empty_mask_recovers_full_model() {
        let (ds, model, _) = trained_setup(10, 2, 29);
        let spec = ModelSpec::logreg_default(0.1);
        let retrained = retrain_exact(&ds, &RemovalMask::empty(ds.n()), &spec).unwrap();
        let diff = norm2((&retrained.flat_params() - &model.flat_params()).view());
        // Both are Newton optima of the same objective at 1e−10 tolerance.
        assert!(diff < 1e-7, "difference {diff}");
    }

    #[test]
    fn retrain_rejects_single_class_survivors() {
        let ds = make_synthetic_gaussians(2, 2, 1.0, 31); // rows 0,1 are +1
        let spec = ModelSpec::logreg_default(0.1);
        let mask = RemovalMask::new(vec![0, 1], ds.n()).unwrap();
        assert!(matches!(
            retrain_exact(&ds, &mask, &spec),
            Err(UnlearnError::DegenerateLabels)
        ));
    }
}
