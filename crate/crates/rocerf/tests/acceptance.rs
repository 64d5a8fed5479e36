//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers. Criteria 6 and 8 consume local dataset CSVs (see
//! the README's data section); when the files are absent those tests print a
//! SKIP line and assert nothing, and they run the full pinned checks the
//! moment the data is provided.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rocerf::data::{
    fit_apply_preprocess, load_csv, make_synthetic_gaussians, read_standardized_csv, split_raw,
    Dataset, Schema, SplitSpec,
};
use rocerf::harness::{
    cost_bound_check, estimate_delta, exhaustive_validity_oracle, run_removal_trials, MethodCfes,
    TrialSpec, DEFAULT_ORACLE_CAP, DELTA_SAFETY_FACTOR,
};
use rocerf::models::{
    accuracy, build_hessian_factor, mlp_param_dim, per_sample_gradient, train_logreg, train_mlp,
    Classifier, LinearClassifier, MlpClassifier, MlpHyper, Model, ModelSpec,
};
use rocerf::recourse::{batch_explain, rocerf, scfe, CfeOutcome, Method, RocerfConfig};
use rocerf::rng::{derive_seed, seeded};
use rocerf::surrogate::{rocerf_via_surrogate, SurrogateSettings};
use rocerf::unlearn::{
    approx_params, build_influence_cache, influence_set, retrain_exact, robust_score,
    robust_score_gradient, InfluenceCache, RemovalMask,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn gaussian_model(
    n_per_class: usize,
    d: usize,
    separation: f64,
    gamma: f64,
    seed: u64,
) -> (Dataset, Model, InfluenceCache) {
    let train = make_synthetic_gaussians(n_per_class, d, separation, seed);
    let model = Model::Linear(train_logreg(&train, gamma, 1e-10, 100).expect("trainable"));
    let factor = build_hessian_factor(&model, &train, 0.0).expect("positive definite");
    let cache = build_influence_cache(&model, &train, &factor).expect("cache");
    (train, model, cache)
}

fn negatives_of(test: &Dataset, model: &Model) -> Vec<Array1<f64>> {
    test.negative_indices_under(|x| model.score(x).unwrap())
        .into_iter()
        .map(|i| test.x(i).to_owned())
        .collect()
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Test-side subset enumeration, independent of the bottom-k implementation.
fn enumerate_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
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

// ---------------------------------------------------------------------------
// Criterion 1 — exhaustive worst-case validity at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_exhaustive_validity() {
    let started = Instant::now();
    let k = 2usize;
    let mut scfe_breaks = 0usize;
    let mut details = Vec::new();
    for &seed in &SEEDS {
        let (train, model, cache) = gaussian_model(20, 2, 3.0, 0.1, seed);
        let val = make_synthetic_gaussians(20, 2, 3.0, derive_seed(seed, 1));
        let test = make_synthetic_gaussians(100, 2, 3.0, derive_seed(seed, 2));
        let spec = ModelSpec::logreg_default(0.1);
        // At desk scale the worst of the 780 masks is a needle (the two most
        // influential points together); random simulation needs enough draws
        // to hit its neighborhood, after which the default 1.5 safety factor
        // covers the validation-to-counterfactual transfer.
        let delta = estimate_delta(
            &train,
            &val,
            &model,
            &cache,
            &spec,
            k,
            3000,
            derive_seed(seed, 3),
            DELTA_SAFETY_FACTOR,
        )
        .unwrap();
        let negatives = negatives_of(&test, &model);
        assert!(
            negatives.len() >= 50,
            "seed {seed}: want a meaningful negative pool, got {}",
            negatives.len()
        );
        let scfe_outcomes = batch_explain(
            &model,
            Some(&cache),
            &negatives,
            Method::Scfe,
            &RocerfConfig::new(0, 0.0),
        )
        .unwrap();
        let robust_margin = batch_explain(
            &model,
            Some(&cache),
            &negatives,
            Method::Rocerf,
            &RocerfConfig::new(k, delta),
        )
        .unwrap();
        let robust_zero = batch_explain(
            &model,
            Some(&cache),
            &negatives,
            Method::Rocerf,
            &RocerfConfig::new(k, 0.0),
        )
        .unwrap();
        let methods = [
            MethodCfes {
                method: "scfe".into(),
                outcomes: scfe_outcomes,
            },
            MethodCfes {
                method: "rocerf_margin".into(),
                outcomes: robust_margin,
            },
            MethodCfes {
                method: "rocerf_zero".into(),
                outcomes: robust_zero,
            },
        ];
        let reports =
            exhaustive_validity_oracle(&train, &spec, k, &methods, DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(reports[0].models_retrained, 780, "C(40,2) retrains");
        let scfe_worst = reports[0].worst_validity;
        let margin_worst = reports[1].worst_validity;
        let zero_worst = reports[2].worst_validity;
        assert_eq!(
            margin_worst, 1.0,
            "seed {seed}: robust with estimated margin must survive all 780 removals \
             (got {margin_worst}, witness {:?})",
            reports[1].witness
        );
        assert!(
            zero_worst >= 0.99,
            "seed {seed}: robust with zero margin worst-case {zero_worst} < 0.99"
        );
        if scfe_worst < 1.0 {
            scfe_breaks += 1;
        }
        details.push(format!(
            "seed {seed}: δ̂={delta:.4}, worst scfe {scfe_worst:.4} / robust(δ̂) {margin_worst:.4} / robust(0) {zero_worst:.4}"
        ));
    }
    assert!(
        scfe_breaks >= 1,
        "the baseline never broke under any removal on any seed; the comparison is vacuous"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "runtime {elapsed:.1}s exceeds the 5-minute budget");
    for d in &details {
        println!("  {d}");
    }
    println!(
        "criterion 1: PASS — robust worst-case validity 1.0 on all 5 seeds, baseline broke on {scfe_breaks}/5 ({elapsed:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2 — bottom-k exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_bottom_k_exactness() {
    let started = Instant::now();
    let mut rng = seeded(2222);
    for trial in 0..200 {
        let n = rng.random_range(1..=12usize);
        let k = rng.random_range(0..=n.min(4));
        let p = 3usize;
        let vectors = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
        let theta = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
        let x = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
        let cache = InfluenceCache::from_parts(vectors, theta.clone(), 0.0);
        let model = LinearClassifier { theta, gamma: 0.1 };
        let fast = robust_score(&cache, &model, x.view(), k).unwrap();
        let brute = enumerate_subsets(n, k)
            .into_iter()
            .map(|combo| {
                let shift: f64 = combo
                    .iter()
                    .map(|&i| cache.vector(i).dot(&x))
                    .sum();
                model.score(x.view()).unwrap() + shift / n as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            (fast - brute).abs() <= 1e-12,
            "trial {trial} (n={n}, k={k}): {fast} vs {brute}"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!("criterion 2: PASS — 200 random instances exact to 1e-12 ({elapsed:.2}s)");
}

// ---------------------------------------------------------------------------
// Criterion 3 — gradient suite
// ---------------------------------------------------------------------------

fn random_mlp(d: usize, rng: &mut impl Rng) -> MlpClassifier {
    MlpClassifier {
        d,
        params: Array1::from_shape_fn(mlp_param_dim(d), |_| rng.random_range(-0.6..0.6)),
        gamma: 0.05,
        hyper: MlpHyper::default(),
    }
}

#[test]
fn criterion_3_gradient_suite() {
    let started = Instant::now();
    let tol = 1e-4;
    let mut worst_overall = 0.0f64;

    // per-sample loss gradients, both families
    let mut rng = seeded(3331);
    for _ in 0..50 {
        let d = rng.random_range(2..=4usize);
        let ds = make_synthetic_gaussians(rng.random_range(3..=6), d, 1.5, rng.random());
        let model = train_logreg(&ds, 0.2, 1e-10, 100).unwrap();
        let i = rng.random_range(0..ds.n());
        let g = per_sample_gradient(&model, &ds, i).unwrap();
        let h = 1e-6;
        for a in 0..d {
            let loss = |theta: &Array1<f64>| {
                let margin = -f64::from(ds.y(i)) * theta.dot(&ds.x(i));
                margin.max(0.0) + (-margin.abs()).exp().ln_1p() + 0.5 * 0.2 * theta.dot(theta)
            };
            let mut tp = model.theta.clone();
            tp[a] += h;
            let mut tm = model.theta.clone();
            tm[a] -= h;
            let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
            let rel = (g[a] - fd).abs() / fd.abs().max(1e-8);
            worst_overall = worst_overall.max(rel);
            assert!(rel < tol, "linear per-sample grad: rel {rel}");
        }
    }
    let mut rng = seeded(3332);
    for _ in 0..50 {
        let d = rng.random_range(2..=3usize);
        let m = random_mlp(d, &mut rng);
        let x = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let y: i8 = if rng.random_range(0..2) == 0 { -1 } else { 1 };
        let g = m.loss_gradient(x.view(), y).unwrap();
        let h = 1e-5;
        // spot-check a third of the parameters per instance
        for idx in (0..m.param_dim()).step_by(3) {
            let loss = |m: &MlpClassifier| {
                let f = m.score(x.view()).unwrap();
                let margin = -f64::from(y) * f;
                margin.max(0.0)
                    + (-margin.abs()).exp().ln_1p()
                    + 0.5 * m.gamma * m.params.dot(&m.params)
            };
            let mut mp = m.clone();
            mp.params[idx] += h;
            let mut mm = m.clone();
            mm.params[idx] -= h;
            let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
            let rel = (g[idx] - fd).abs() / fd.abs().max(1e-6);
            worst_overall = worst_overall.max(rel);
            assert!(rel < tol, "network per-sample grad: rel {rel} at param {idx}");
        }
    }

    // parameter gradients β(x), both families
    let mut rng = seeded(3333);
    for _ in 0..50 {
        let d = rng.random_range(2..=4usize);
        let theta = Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0));
        let model = LinearClassifier {
            theta: theta.clone(),
            gamma: 0.1,
        };
        let x = Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0));
        let beta = model.param_gradient(x.view()).unwrap();
        let h = 1e-6;
        for a in 0..d {
            let mut tp = theta.clone();
            tp[a] += h;
            let mut tm = theta.clone();
            tm[a] -= h;
            let fd = (tp.dot(&x) - tm.dot(&x)) / (2.0 * h);
            let rel = (beta[a] - fd).abs() / fd.abs().max(1e-8);
            worst_overall = worst_overall.max(rel);
            assert!(rel < tol, "linear β: rel {rel}");
        }
    }
    let mut rng = seeded(3334);
    for _ in 0..50 {
        let d = rng.random_range(2..=3usize);
        let m = random_mlp(d, &mut rng);
        let x = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let beta = m.param_gradient(x.view()).unwrap();
        let h = 1e-5;
        for idx in (0..m.param_dim()).step_by(3) {
            let mut mp = m.clone();
            mp.params[idx] += h;
            let mut mm = m.clone();
            mm.params[idx] -= h;
            let fd = (mp.score(x.view()).unwrap() - mm.score(x.view()).unwrap()) / (2.0 * h);
            let rel = (beta[idx] - fd).abs() / fd.abs().max(1e-6);
            worst_overall = worst_overall.max(rel);
            assert!(rel < tol, "network β: rel {rel} at param {idx}");
        }
    }

    // robust score gradients away from selection ties
    let mut rng = seeded(3335);
    let mut checked = 0usize;
    while checked < 50 {
        let (_, model, cache) = gaussian_model(
            rng.random_range(5..=10),
            2,
            3.0,
            0.1,
            rng.random(),
        );
        let k = rng.random_range(1..=3usize).min(cache.n() - 1);
        let x = Array1::from_shape_fn(2, |_| rng.random_range(-2.0..2.0));
        let set = influence_set(&cache, &model, x.view()).unwrap();
        let mut sorted: Vec<f64> = set.to_vec();
        sorted.sort_by(f64::total_cmp);
        if (sorted[k] - sorted[k - 1]).abs() < 1e-9 {
            continue; // tie: the subgradient need not match central differences
        }
        let grad = robust_score_gradient(&cache, &model, x.view(), k).unwrap();
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x.clone();
            xp[a] += h;
            let mut xm = x.clone();
            xm[a] -= h;
            let fd = (robust_score(&cache, &model, xp.view(), k).unwrap()
                - robust_score(&cache, &model, xm.view(), k).unwrap())
                / (2.0 * h);
            let rel = (grad[a] - fd).abs() / fd.abs().max(1e-8);
            worst_overall = worst_overall.max(rel);
            assert!(rel < tol, "robust grad: rel {rel}");
        }
        checked += 1;
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.1}s exceeds the 1-minute budget");
    println!(
        "criterion 3: PASS — worst relative error {worst_overall:.2e} across the gradient suite ({elapsed:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4 — leave-k-out fidelity scaling
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_lko_fidelity_scaling() {
    let started = Instant::now();
    let spec = ModelSpec::logreg_default(0.1);
    let mean_error_at = |n_per_class: usize, seed: u64| -> f64 {
        let (train, _, cache) = gaussian_model(n_per_class, 2, 3.0, 0.1, seed);
        let mut total = 0.0;
        for i in 0..train.n() {
            let mask = RemovalMask::new(vec![i], train.n()).unwrap();
            let exact = retrain_exact(&train, &mask, &spec).unwrap().flat_params();
            let approx = approx_params(&cache, &mask).unwrap();
            total += norm2(&(&approx - &exact));
        }
        total / train.n() as f64
    };
    let small: f64 = SEEDS.iter().map(|&s| mean_error_at(50, s)).sum::<f64>() / 5.0;
    let large: f64 = SEEDS.iter().map(|&s| mean_error_at(200, s)).sum::<f64>() / 5.0;
    let ratio = large / small;
    assert!(
        ratio <= 0.5,
        "mean ‖θ̃ − θ̂_w‖ at n=400 is {large:.3e}, at n=100 is {small:.3e}: ratio {ratio:.3} > 0.5"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s exceeds the 2-minute budget");
    println!(
        "criterion 4: PASS — single-removal estimate error {small:.3e} (n=100) → {large:.3e} (n=400), ratio {ratio:.3} ≤ 0.5 ({elapsed:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5 — cost-bound scaling
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_cost_bound_scaling() {
    let started = Instant::now();
    let extra_cost_at = |n_per_class: usize, seed: u64| -> f64 {
        let (train, model, cache) = gaussian_model(n_per_class, 2, 3.0, 0.1, seed);
        let test = make_synthetic_gaussians(30, 2, 3.0, derive_seed(seed, 41));
        let negatives = negatives_of(&test, &model);
        let base: Vec<CfeOutcome> = negatives.iter().map(|x| scfe(&model, x.view())).collect();
        let robust = batch_explain(
            &model,
            Some(&cache),
            &negatives,
            Method::Rocerf,
            &RocerfConfig::new(1, 0.0),
        )
        .unwrap();
        cost_bound_check(&base, &robust, &model, 1, train.n())
            .unwrap()
            .mean_extra_cost
    };
    let small: f64 = SEEDS.iter().map(|&s| extra_cost_at(50, s)).sum::<f64>() / 5.0;
    let large: f64 = SEEDS.iter().map(|&s| extra_cost_at(200, s)).sum::<f64>() / 5.0;
    let ratio = large / small;
    assert!(
        small > 0.0,
        "robustness at k=1, n=100 ought to cost something; measured {small:.3e}"
    );
    assert!(
        ratio <= 0.6,
        "mean extra cost at n=400 is {large:.3e}, at n=100 is {small:.3e}: ratio {ratio:.3} > 0.6"
    );

    // k = 0 leaves no extra cost at all: identical machinery, bit for bit.
    let (train, model, cache) = gaussian_model(50, 2, 3.0, 0.1, SEEDS[0]);
    let test = make_synthetic_gaussians(30, 2, 3.0, derive_seed(SEEDS[0], 42));
    let negatives = negatives_of(&test, &model);
    let base: Vec<CfeOutcome> = negatives.iter().map(|x| scfe(&model, x.view())).collect();
    let robust = batch_explain(
        &model,
        Some(&cache),
        &negatives,
        Method::Rocerf,
        &RocerfConfig::new(0, 0.0),
    )
    .unwrap();
    let zero = cost_bound_check(&base, &robust, &model, 0, train.n()).unwrap();
    assert_eq!(zero.mean_extra_cost, 0.0);
    assert_eq!(zero.max_extra_cost, 0.0);

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 180.0, "runtime {elapsed:.1}s exceeds the 3-minute budget");
    println!(
        "criterion 5: PASS — extra cost {small:.3e} (n=100) → {large:.3e} (n=400), ratio {ratio:.3} ≤ 0.6; exactly 0 at k=0 ({elapsed:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criteria 6 and 8a — German Credit (dataset-gated)
// ---------------------------------------------------------------------------

fn data_dir() -> std::path::PathBuf {
    match std::env::var("ROCERF_DATA_DIR") {
        Ok(dir) => std::path::PathBuf::from(dir),
        Err(_) => std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

struct GermanPipeline {
    train: Dataset,
    test: Dataset,
    model: Model,
    cache: InfluenceCache,
}

fn german_pipeline() -> Option<GermanPipeline> {
    let dir = data_dir();
    let csv = dir.join("german.csv");
    let schema_path = dir.join("german.schema");
    if !csv.exists() || !schema_path.exists() {
        return None;
    }
    let schema = Schema::from_file(&schema_path).expect("shipped schema parses");
    let (raw, _dropped) = load_csv(&csv, &schema).expect("german.csv loads against the schema");
    assert_eq!(raw.n(), 1000, "the credit dataset has 1000 rows");
    let spec = SplitSpec::default_with_seed(42);
    let (train_raw, _val_raw, test_raw) = split_raw(&raw, &spec).unwrap();
    let (_prep, train, others) = fit_apply_preprocess(&train_raw, &[&test_raw], true).unwrap();
    let test = others.into_iter().next().unwrap();
    let gamma = 1.0 / train.n() as f64;
    let model = Model::Linear(train_logreg(&train, gamma, 1e-10, 100).unwrap());
    let factor = build_hessian_factor(&model, &train, 0.0).unwrap();
    let cache = build_influence_cache(&model, &train, &factor).unwrap();
    Some(GermanPipeline {
        train,
        test,
        model,
        cache,
    })
}

#[test]
fn criterion_6_paper_scale_trend() {
    let started = Instant::now();
    let Some(p) = german_pipeline() else {
        println!(
            "criterion 6: SKIP — place german.csv and german.schema under {} (see README data \
             section); the pinned bands run unchanged once present",
            data_dir().display()
        );
        return;
    };
    let negatives = negatives_of(&p.test, &p.model);
    assert!(!negatives.is_empty());
    let k = ((0.005 * p.train.n() as f64).ceil() as usize).max(1);
    let scfe_outcomes = batch_explain(
        &p.model,
        Some(&p.cache),
        &negatives,
        Method::Scfe,
        &RocerfConfig::new(0, 0.0),
    )
    .unwrap();
    let rocerf_outcomes = batch_explain(
        &p.model,
        Some(&p.cache),
        &negatives,
        Method::Rocerf,
        &RocerfConfig::new(k, 0.0),
    )
    .unwrap();
    let methods = [
        MethodCfes {
            method: "scfe".into(),
            outcomes: scfe_outcomes,
        },
        MethodCfes {
            method: "rocerf".into(),
            outcomes: rocerf_outcomes,
        },
    ];
    let gamma = 1.0 / p.train.n() as f64;
    let model_spec = ModelSpec::logreg_default(gamma);
    let alphas = [0.005, 0.01, 0.02, 0.03, 0.05];
    let mut scfe_cost = f64::NAN;
    let mut rocerf_cost = f64::NAN;
    for (ai, &alpha) in alphas.iter().enumerate() {
        let spec = TrialSpec::new(alpha, 100, derive_seed(42, ai as u64), model_spec);
        let report = run_removal_trials(&p.train, &spec, &methods).unwrap();
        let scfe_entry = &report.entries[0];
        let rocerf_entry = &report.entries[1];
        assert!(
            rocerf_entry.validity_mean >= 0.95,
            "α={alpha}: robust validity {} < 0.95",
            rocerf_entry.validity_mean
        );
        assert!(
            rocerf_entry.validity_mean >= scfe_entry.validity_mean,
            "α={alpha}: robust validity {} below baseline {}",
            rocerf_entry.validity_mean,
            scfe_entry.validity_mean
        );
        println!(
            "  α={alpha}: validity scfe {:.4} / rocerf {:.4}",
            scfe_entry.validity_mean, rocerf_entry.validity_mean
        );
        scfe_cost = scfe_entry.cost_l2_mean;
        rocerf_cost = rocerf_entry.cost_l2_mean;
    }
    assert!(
        (0.5..=1.2).contains(&scfe_cost),
        "baseline mean L2 cost {scfe_cost:.3} outside [0.5, 1.2]"
    );
    assert!(
        (0.9..=2.0).contains(&rocerf_cost),
        "robust mean L2 cost {rocerf_cost:.3} outside [0.9, 2.0]"
    );
    let ratio = rocerf_cost / scfe_cost;
    assert!(
        (1.0..=2.5).contains(&ratio),
        "cost ratio {ratio:.3} outside [1.0, 2.5]"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "runtime {elapsed:.1}s exceeds the 15-minute budget");
    println!(
        "criterion 6: PASS — k={k}, costs scfe {scfe_cost:.3} / rocerf {rocerf_cost:.3} (ratio {ratio:.2}) ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_8_accuracy_sanity() {
    let started = Instant::now();
    let mut parts = Vec::new();
    match german_pipeline() {
        Some(p) => {
            let acc = accuracy(&p.model, &p.test);
            assert!(
                (0.692..=0.752).contains(&acc),
                "credit-data logistic test accuracy {acc:.4} outside 72.2% ± 3 points"
            );
            parts.push(format!("logistic test accuracy {acc:.4} within 72.2%±3"));
        }
        None => {
            println!(
                "criterion 8a: SKIP — german.csv/german.schema not present under {}",
                data_dir().display()
            );
        }
    }
    let compas_train = data_dir().join("compas_train.csv");
    let compas_test = data_dir().join("compas_test.csv");
    if compas_train.exists() && compas_test.exists() {
        let train = read_standardized_csv(&compas_train).unwrap();
        let test = read_standardized_csv(&compas_test).unwrap();
        let model = train_mlp(&train, MlpHyper::default(), 1e-4).unwrap();
        let acc = accuracy(&model, &test);
        assert!(
            (0.821..=0.881).contains(&acc),
            "bail-data network test accuracy {acc:.4} outside 85.1% ± 3 points"
        );
        parts.push(format!("network test accuracy {acc:.4} within 85.1%±3"));
    } else {
        println!(
            "criterion 8b: SKIP — compas_train.csv/compas_test.csv not present under {} \
             (standardized CSVs; see README data section)",
            data_dir().display()
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "runtime {elapsed:.1}s exceeds the 10-minute budget");
    if parts.is_empty() {
        println!("criterion 8: SKIP — no datasets present ({elapsed:.1}s)");
    } else {
        println!("criterion 8: PASS — {} ({elapsed:.1}s)", parts.join("; "));
    }
}

// ---------------------------------------------------------------------------
// Criterion 7 — degenerate-case identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_degenerate_identity() {
    let started = Instant::now();
    let (_, model, cache) = gaussian_model(20, 2, 3.0, 0.1, 77);
    let cfg = RocerfConfig::new(0, 0.0);
    let mut rng = seeded(777);
    let mut compared = 0usize;
    while compared < 100 {
        let x0 = Array1::from_shape_fn(2, |_| rng.random_range(-4.0..4.0));
        if model.score(x0.view()).unwrap() >= 0.0 {
            continue;
        }
        let a = scfe(&model, x0.view()).unwrap();
        let b = rocerf(&model, &cache, x0.view(), &cfg).unwrap();
        assert_eq!(a.x_cf, b.x_cf, "x_cf must be bitwise identical");
        assert_eq!(a.cost_l2.to_bits(), b.cost_l2.to_bits());
        assert_eq!(a.cost_l1.to_bits(), b.cost_l1.to_bits());
        assert_eq!(a.constraint_value.to_bits(), b.constraint_value.to_bits());
        assert_eq!(a.inner_iterations, b.inner_iterations);
        compared += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!("criterion 7: PASS — 100 negatives bitwise identical ({elapsed:.1}s)");
}

// ---------------------------------------------------------------------------
// Criterion 9 — network path through local surrogates
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_surrogate_path() {
    let started = Instant::now();
    // n=500 five-dimensional synthetic rows plus the pipeline's bias column,
    // so the no-intercept surrogate can express affine local boundaries.
    let train = make_synthetic_gaussians(250, 5, 3.0, 9).with_bias_column();
    let test = make_synthetic_gaussians(100, 5, 3.0, 10).with_bias_column();
    let hyper = MlpHyper::default();
    let gamma = 1e-4;
    let model = Model::Mlp(train_mlp(&train, hyper, gamma).unwrap());
    let negatives = negatives_of(&test, &model);
    assert!(
        negatives.len() >= 40,
        "want a meaningful negative pool, got {}",
        negatives.len()
    );
    let k = ((0.02 * train.n() as f64).ceil() as usize).max(1);
    let base_settings = SurrogateSettings {
        widen_attempts: 5,
        ..SurrogateSettings::default()
    };
    let mut run = |cfg: &RocerfConfig| -> (Vec<CfeOutcome>, usize) {
        let mut outcomes = Vec::with_capacity(negatives.len());
        let mut good_fit = 0usize;
        for (i, x0) in negatives.iter().enumerate() {
            let settings = SurrogateSettings {
                seed: derive_seed(99, i as u64),
                ..base_settings.clone()
            };
            match rocerf_via_surrogate(&model, &train, x0.view(), cfg, &settings) {
                Ok(s) => {
                    if s.surrogate.fit_accuracy >= 0.8 {
                        good_fit += 1;
                    }
                    outcomes.push(Ok(s.result));
                }
                Err(e) => outcomes.push(Err(
                    rocerf::recourse::RecourseError::SurrogateFit {
                        detail: e.to_string(),
                    },
                )),
            }
        }
        (outcomes, good_fit)
    };
    let (robust_outcomes, robust_fit) = run(&RocerfConfig::new(k, 0.0));
    let (baseline_outcomes, _) = run(&RocerfConfig::new(0, 0.0));
    assert!(
        robust_fit * 10 >= negatives.len() * 9,
        "surrogate fit accuracy ≥ 0.8 on only {robust_fit}/{} samples",
        negatives.len()
    );
    let methods = [
        MethodCfes {
            method: "surrogate_scfe".into(),
            outcomes: baseline_outcomes,
        },
        MethodCfes {
            method: "surrogate_rocerf".into(),
            outcomes: robust_outcomes,
        },
    ];
    let spec = TrialSpec::new(0.02, 50, 91, ModelSpec::Mlp { gamma, hyper });
    let report = run_removal_trials(&train, &spec, &methods).unwrap();
    let baseline_v = report.entries[0].validity_mean;
    let robust_v = report.entries[1].validity_mean;
    assert!(
        robust_v >= baseline_v,
        "surrogate robust validity {robust_v:.4} below surrogate baseline {baseline_v:.4}"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "runtime {elapsed:.1}s exceeds the 10-minute budget");
    println!(
        "criterion 9: PASS — validity surrogate-robust {robust_v:.4} ≥ surrogate-baseline {baseline_v:.4} at α=2% over 50 trials; fit ≥ 0.8 on {robust_fit}/{} ({elapsed:.1}s)",
        negatives.len()
    );
}
