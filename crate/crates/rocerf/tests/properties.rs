//! Property tests for the invariants that hold on all inputs, not just the
//! pinned examples.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rocerf::data::{make_synthetic_gaussians, split_indices, SplitSpec};
use rocerf::models::{build_hessian_factor, train_logreg, LinearClassifier, Model};
use rocerf::unlearn::{
    approx_params, approx_score, bottom_k_sum, build_influence_cache, robust_score, InfluenceCache,
    RemovalMask,
};

fn finite_vec(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The bounded-heap selection agrees with sorting.
    #[test]
    fn bottom_k_matches_sort(values in finite_vec(1..=40), k in 0usize..=40) {
        let k = k.min(values.len());
        let arr = Array1::from_vec(values.clone());
        let (sum, indices) = bottom_k_sum(arr.view(), k).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let expected: f64 = sorted[..k].iter().sum();
        prop_assert!((sum - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert_eq!(indices.len(), k);
        let mut uniq = indices.clone();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), k, "indices must be unique and ascending");
    }

    /// Lowering any entry never increases the bottom-k sum.
    #[test]
    fn bottom_k_monotone_under_decreases(
        values in finite_vec(1..=20),
        k in 1usize..=20,
        pick in any::<prop::sample::Index>(),
        drop in 0.0f64..1e3,
    ) {
        let k = k.min(values.len());
        let arr = Array1::from_vec(values.clone());
        let (before, _) = bottom_k_sum(arr.view(), k).unwrap();
        let mut lowered = values.clone();
        let idx = pick.index(lowered.len());
        lowered[idx] -= drop;
        let (after, _) = bottom_k_sum(Array1::from_vec(lowered).view(), k).unwrap();
        prop_assert!(after <= before + 1e-9);
    }

    /// Splits are deterministic partitions with the floor/floor/rest sizes.
    #[test]
    fn split_partitions_and_repeats(n in 10usize..200, seed in any::<u64>()) {
        let spec = SplitSpec { train_fraction: 0.7, val_fraction: 0.1, test_fraction: 0.2, seed };
        let (a, b, c) = split_indices(n, &spec).unwrap();
        let (a2, b2, c2) = split_indices(n, &spec).unwrap();
        prop_assert_eq!((&a, &b, &c), (&a2, &b2, &c2));
        prop_assert_eq!(a.len(), (0.7 * n as f64).floor() as usize);
        prop_assert_eq!(b.len(), (0.1 * n as f64).floor() as usize);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        let expect: Vec<usize> = (0..n).collect();
        prop_assert_eq!(all, expect);
    }

    /// The robust score lower-bounds the approximate score of every mask of
    /// the same size.
    #[test]
    fn robust_score_lower_bounds_masks(
        seed in 0u64..32,
        k in 1usize..=3,
        mask_seed in any::<u64>(),
        x0 in -3.0f64..3.0,
        x1 in -3.0f64..3.0,
    ) {
        let ds = make_synthetic_gaussians(8, 2, 3.0, seed);
        let model = Model::Linear(train_logreg(&ds, 0.1, 1e-10, 100).unwrap());
        let factor = build_hessian_factor(&model, &ds, 0.0).unwrap();
        let cache = build_influence_cache(&model, &ds, &factor).unwrap();
        let x = ndarray::array![x0, x1];
        let robust = robust_score(&cache, &model, x.view(), k).unwrap();
        let mut rng = rocerf::rng::seeded(mask_seed);
        let mask = RemovalMask::sample(ds.n(), k, &mut rng).unwrap();
        let s = approx_score(&cache, &model, &mask, x.view()).unwrap();
        prop_assert!(robust <= s + 1e-12);
    }

    /// Parameter shifts add over disjoint masks (up to ulp-level rounding).
    #[test]
    fn mask_shifts_are_additive(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 6..=12),
        split_at in 1usize..5,
    ) {
        let n = rows.len();
        let p = 3;
        let mut vectors = Array2::zeros((n, p));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                vectors[(i, j)] = *v;
            }
        }
        let cache = InfluenceCache::from_parts(vectors, Array1::zeros(p), 0.0);
        let split_at = split_at.min(n - 1);
        let m1 = RemovalMask::new((0..split_at).collect(), n).unwrap();
        let m2 = RemovalMask::new(vec![n - 1], n).unwrap();
        let both = m1.union(&m2).unwrap();
        let d1 = approx_params(&cache, &m1).unwrap();
        let d2 = approx_params(&cache, &m2).unwrap();
        let d12 = approx_params(&cache, &both).unwrap();
        for a in 0..p {
            prop_assert!((d12[a] - (d1[a] + d2[a])).abs() <= 1e-12);
        }
    }

    /// Linear robust gradients reproduce the worst-case mask's parameters.
    #[test]
    fn robust_gradient_is_worst_mask_theta(seed in 0u64..16, k in 1usize..=3) {
        let ds = make_synthetic_gaussians(6, 2, 3.0, seed);
        let model = Model::Linear(train_logreg(&ds, 0.1, 1e-10, 100).unwrap());
        let factor = build_hessian_factor(&model, &ds, 0.0).unwrap();
        let cache = build_influence_cache(&model, &ds, &factor).unwrap();
        let x = ndarray::array![0.7, -0.9];
        let set = rocerf::unlearn::influence_set(&cache, &model, x.view()).unwrap();
        let (_, selected) = bottom_k_sum(set.view(), k).unwrap();
        let mask = RemovalMask::new(selected, ds.n()).unwrap();
        let theta_w = approx_params(&cache, &mask).unwrap();
        let grad = rocerf::unlearn::robust_score_gradient(&cache, &model, x.view(), k).unwrap();
        for a in 0..2 {
            prop_assert!((grad[a] - theta_w[a]).abs() <= 1e-12);
        }
    }
}

/// The zero-vector cache makes the robust score collapse to the plain score
/// for every k — a non-proptest sanity anchor for the suite above.
#[test]
fn zero_cache_is_score_for_all_k() {
    let model = LinearClassifier {
        theta: Array1::from_vec(vec![1.0, -2.0]),
        gamma: 0.1,
    };
    let cache = InfluenceCache::from_parts(Array2::zeros((7, 2)), model.theta.clone(), 0.0);
    let x = ndarray::array![0.3, 0.4];
    let plain = 0.3 - 0.8;
    for k in 0..=7 {
        let r = robust_score(&cache, &model, x.view(), k).unwrap();
        assert!((r - plain).abs() <= 1e-15);
    }
}
