//! `rocerf verify`: the synthetic property suite.
//!
//! Every check runs on seeded synthetic data in a few seconds and prints one
//! PASS/FAIL line; the command exits 0 only when all of them pass, and exit 3
//! names the first failure. With `--cache <path>` it additionally verifies a
//! persisted influence cache (checksum and solve contract), surfacing
//! corruption as a data error (exit 2).

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use ndarray::Array1;
use rand::Rng;

use super::CliError;
use crate::data::{make_synthetic_gaussians, split, Dataset, SplitSpec};
use crate::harness::{
    cost_bound_check, estimate_delta, exhaustive_validity_oracle, MethodCfes, DEFAULT_ORACLE_CAP,
    DELTA_SAFETY_FACTOR,
};
use crate::linalg::norm2;
use crate::models::{
    build_hessian_factor, per_sample_gradient, train_logreg, train_mlp, Classifier, MlpHyper,
    Model, ModelSpec,
};
use crate::recourse::{batch_explain, rocerf, scfe, Method, RocerfConfig};
use crate::rng::{derive_seed, seeded};
use crate::unlearn::{
    approx_params, bottom_k_sum, build_influence_cache, influence_set, load_cache, retrain_exact,
    robust_score, robust_score_gradient, RemovalMask,
};

#[derive(Args)]
pub struct VerifyArgs {
    /// Base seed for the synthetic checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Removal budget used by the exhaustive check (must be ≤ n = 2·n-per-class).
    #[arg(long)]
    k: Option<usize>,
    /// Per-class size of the synthetic sets.
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Also verify this persisted influence cache (checksum + solve contract).
    #[arg(long)]
    cache: Option<PathBuf>,
}

struct Check {
    name: &'static str,
    outcome: Result<String, String>,
}

fn check(name: &'static str, outcome: Result<String, String>) -> Check {
    Check { name, outcome }
}

pub(crate) fn run_verify(
    args: VerifyArgs,
    file_map: BTreeMap<String, String>,
) -> (Result<(), CliError>, Option<PathBuf>) {
    let mut m = super::Merge::new(file_map);
    let result = verify_inner(args, &mut m).and_then(|_| m.finish());
    (result, None)
}

fn verify_inner(args: VerifyArgs, m: &mut super::Merge) -> Result<(), CliError> {
    let seed = m.parsed("seed", args.seed, 0u64)?;
    let n_per_class = m.parsed("n_per_class", args.n_per_class, 20usize)?;
    let k = m.parsed("k", args.k, 2usize)?;
    let cache_path = m.optional_path("cache", args.cache)?;
    let n = 2 * n_per_class;
    if k > n {
        return Err(CliError::Config(format!(
            "k={k} exceeds the synthetic training size n={n}"
        )));
    }

    // Cache integrity is a data check, independent of the property suite.
    if let Some(path) = &cache_path {
        let cache = load_cache(path)?;
        println!(
            "cache: checksum ok, n={}, p={}, damping={}",
            cache.n(),
            cache.p(),
            cache.damping()
        );
    }

    let checks = vec![
        check("bottom-k matches exhaustive minimum", bottom_k_check(seed)),
        check("linear gradients match finite differences", linear_grad_check(seed)),
        check("network gradients match finite differences", mlp_grad_check(seed)),
        check("influence vectors satisfy the solve contract", influence_check(seed)),
        check(
            "leave-one-out estimate beats staying put",
            loo_fidelity_check(seed),
        ),
        check(
            "robust answers survive every removal (exhaustive)",
            exhaustive_check(seed, n_per_class, k),
        ),
        check(
            "robust gradient matches finite differences",
            robust_gradient_spot_check(seed),
        ),
        check("k=0 robust path is bitwise the baseline", degenerate_check(seed)),
        check("extra cost is zero at k=0", cost_zero_check(seed)),
        check("splits are deterministic", split_check(seed)),
    ];

    let mut first_failure = None;
    for c in &checks {
        match &c.outcome {
            Ok(detail) => println!("PASS  {} — {}", c.name, detail),
            Err(detail) => {
                println!("FAIL  {} — {}", c.name, detail);
                if first_failure.is_none() {
                    first_failure = Some(c.name);
                }
            }
        }
    }
    match first_failure {
        None => Ok(()),
        Some(name) => Err(CliError::Runtime(format!("property failed: {name}"))),
    }
}

fn trained(
    n_per_class: usize,
    seed: u64,
) -> (Dataset, Model, crate::unlearn::InfluenceCache) {
    let ds = make_synthetic_gaussians(n_per_class, 2, 3.0, seed);
    let model = Model::Linear(train_logreg(&ds, 0.1, 1e-10, 100).expect("separable synthetic"));
    let factor = build_hessian_factor(&model, &ds, 0.0).expect("γ>0 keeps H positive definite");
    let cache = build_influence_cache(&model, &ds, &factor).expect("cache build");
    (ds, model, cache)
}

fn bottom_k_check(seed: u64) -> Result<String, String> {
    let mut rng = seeded(derive_seed(seed, 101));
    for trial in 0..50 {
        let n = rng.random_range(1..=12usize);
        let k = rng.random_range(0..=n.min(4));
        let values = Array1::from_shape_fn(n, |_| rng.random_range(-5.0..5.0));
        let (fast, _) = bottom_k_sum(values.view(), k).map_err(|e| e.to_string())?;
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let slow: f64 = sorted[..k].iter().sum();
        if (fast - slow).abs() > 1e-12 {
            return Err(format!("trial {trial}: {fast} vs {slow}"));
        }
    }
    Ok("50 random instances exact to 1e-12".into())
}

fn linear_grad_check(seed: u64) -> Result<String, String> {
    let ds = make_synthetic_gaussians(6, 3, 2.0, derive_seed(seed, 102));
    let model = train_logreg(&ds, 0.1, 1e-10, 100).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..ds.n() {
        let g = per_sample_gradient(&model, &ds, i).map_err(|e| e.to_string())?;
        for a in 0..ds.d() {
            let mut tp = model.clone();
            tp.theta[a] += h;
            let mut tm = model.clone();
            tm.theta[a] -= h;
            let loss = |mdl: &crate::models::LinearClassifier| {
                let margin = -f64::from(ds.y(i)) * mdl.theta.dot(&ds.x(i));
                (margin.max(0.0) + (-margin.abs()).exp().ln_1p())
                    + 0.5 * mdl.gamma * mdl.theta.dot(&mdl.theta)
            };
            let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
            worst = worst.max((g[a] - fd).abs() / fd.abs().max(1e-8));
        }
    }
    if worst < 1e-4 {
        Ok(format!("worst relative error {worst:.2e}"))
    } else {
        Err(format!("worst relative error {worst:.2e} ≥ 1e-4"))
    }
}

fn mlp_grad_check(seed: u64) -> Result<String, String> {
    let ds = make_synthetic_gaussians(8, 2, 3.0, derive_seed(seed, 103));
    let hyper = MlpHyper {
        epochs: 30,
        ..MlpHyper::default()
    };
    let mlp = train_mlp(&ds, hyper, 1e-3).map_err(|e| e.to_string())?;
    let x = Array1::from_vec(vec![0.37, -0.81]);
    let beta = mlp.param_gradient(x.view()).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for idx in 0..mlp.param_dim() {
        let mut mp = mlp.clone();
        mp.params[idx] += h;
        let mut mm = mlp.clone();
        mm.params[idx] -= h;
        let fd = (mp.score(x.view()).unwrap() - mm.score(x.view()).unwrap()) / (2.0 * h);
        worst = worst.max((beta[idx] - fd).abs() / fd.abs().max(1e-6));
    }
    if worst < 1e-4 {
        Ok(format!(
            "β(x) over {} parameters, worst relative error {worst:.2e}",
            mlp.param_dim()
        ))
    } else {
        Err(format!("worst relative error {worst:.2e} ≥ 1e-4"))
    }
}

fn influence_check(seed: u64) -> Result<String, String> {
    let (ds, model, cache) = trained(10, derive_seed(seed, 104));
    let lin = match &model {
        Model::Linear(l) => l,
        _ => unreachable!(),
    };
    let h = lin.mean_hessian(&ds);
    let mut worst = 0.0f64;
    for i in 0..ds.n() {
        let g = model
            .loss_gradient(ds.x(i), ds.y(i))
            .map_err(|e| e.to_string())?;
        let back = h.dot(&cache.vector(i).to_owned());
        worst = worst.max(norm2((&back - &g).view()) / norm2(g.view()).max(1e-12));
    }
    if worst <= 1e-8 {
        Ok(format!("worst relative residual {worst:.2e}"))
    } else {
        Err(format!("worst relative residual {worst:.2e} > 1e-8"))
    }
}

fn loo_fidelity_check(seed: u64) -> Result<String, String> {
    let (ds, model, cache) = trained(50, derive_seed(seed, 105));
    let spec = ModelSpec::logreg_default(0.1);
    let theta_full = model.flat_params();
    let mut closer = 0usize;
    for i in 0..ds.n() {
        let mask = RemovalMask::new(vec![i], ds.n()).map_err(|e| e.to_string())?;
        let exact = retrain_exact(&ds, &mask, &spec)
            .map_err(|e| e.to_string())?
            .flat_params();
        let approx = approx_params(&cache, &mask).map_err(|e| e.to_string())?;
        if norm2((&approx - &exact).view()) < norm2((&theta_full - &exact).view()) {
            closer += 1;
        }
    }
    if closer * 100 >= ds.n() * 95 {
        Ok(format!("{closer}/{} single removals improved", ds.n()))
    } else {
        Err(format!("only {closer}/{} single removals improved", ds.n()))
    }
}

fn exhaustive_check(seed: u64, n_per_class: usize, k: usize) -> Result<String, String> {
    let train = make_synthetic_gaussians(n_per_class, 2, 3.0, derive_seed(seed, 106));
    let val = make_synthetic_gaussians(n_per_class, 2, 3.0, derive_seed(seed, 107));
    let test = make_synthetic_gaussians(50, 2, 3.0, derive_seed(seed, 108));
    let model = Model::Linear(train_logreg(&train, 0.1, 1e-10, 100).map_err(|e| e.to_string())?);
    let factor = build_hessian_factor(&model, &train, 0.0).map_err(|e| e.to_string())?;
    let cache = build_influence_cache(&model, &train, &factor).map_err(|e| e.to_string())?;
    let spec = ModelSpec::logreg_default(0.1);
    let delta = estimate_delta(
        &train,
        &val,
        &model,
        &cache,
        &spec,
        k,
        20,
        derive_seed(seed, 109),
        DELTA_SAFETY_FACTOR,
    )
    .map_err(|e| e.to_string())?;
    let negatives: Vec<Array1<f64>> = test
        .negative_indices_under(|x| model.score(x).unwrap())
        .into_iter()
        .map(|i| test.x(i).to_owned())
        .collect();
    if negatives.is_empty() {
        return Err("no negative test samples".into());
    }
    let outcomes = batch_explain(
        &model,
        Some(&cache),
        &negatives,
        Method::Rocerf,
        &RocerfConfig::new(k, delta),
    )
    .map_err(|e| e.to_string())?;
    let reports = exhaustive_validity_oracle(
        &train,
        &spec,
        k,
        &[MethodCfes {
            method: "rocerf".into(),
            outcomes,
        }],
        DEFAULT_ORACLE_CAP,
    )
    .map_err(|e| e.to_string())?;
    let worst = reports[0].worst_validity;
    if worst == 1.0 {
        Ok(format!(
            "worst-case validity 1.0 over {} retrains (δ = {delta:.3e}, {} negatives)",
            reports[0].models_retrained,
            negatives.len()
        ))
    } else {
        Err(format!(
            "worst-case validity {worst:.4} < 1.0 (witness {:?})",
            reports[0].witness
        ))
    }
}

fn degenerate_check(seed: u64) -> Result<String, String> {
    let (ds, model, cache) = trained(20, derive_seed(seed, 110));
    let mut rng = seeded(derive_seed(seed, 111));
    let mut compared = 0;
    while compared < 20 {
        let x0 = Array1::from_shape_fn(ds.d(), |_| rng.random_range(-4.0..4.0));
        if model.score(x0.view()).unwrap() >= 0.0 {
            continue;
        }
        let a = scfe(&model, x0.view()).map_err(|e| e.to_string())?;
        let b = rocerf(&model, &cache, x0.view(), &RocerfConfig::new(0, 0.0))
            .map_err(|e| e.to_string())?;
        if a.x_cf != b.x_cf {
            return Err(format!("x_cf differs at sample {compared}"));
        }
        compared += 1;
    }
    Ok("20 negatives bitwise identical".into())
}

fn cost_zero_check(seed: u64) -> Result<String, String> {
    let (ds, model, cache) = trained(20, derive_seed(seed, 112));
    let test = make_synthetic_gaussians(20, 2, 3.0, derive_seed(seed, 113));
    let negatives: Vec<Array1<f64>> = test
        .negative_indices_under(|x| model.score(x).unwrap())
        .into_iter()
        .map(|i| test.x(i).to_owned())
        .collect();
    let base: Vec<_> = negatives.iter().map(|x| scfe(&model, x.view())).collect();
    let robust = batch_explain(
        &model,
        Some(&cache),
        &negatives,
        Method::Rocerf,
        &RocerfConfig::new(0, 0.0),
    )
    .map_err(|e| e.to_string())?;
    let report =
        cost_bound_check(&base, &robust, &model, 0, ds.n()).map_err(|e| e.to_string())?;
    if report.mean_extra_cost == 0.0 && report.max_extra_cost == 0.0 {
        Ok(format!("{} pairs, extra cost exactly 0", report.pairs))
    } else {
        Err(format!(
            "mean extra {} max {} (expected exactly 0)",
            report.mean_extra_cost, report.max_extra_cost
        ))
    }
}

fn split_check(seed: u64) -> Result<String, String> {
    let ds = make_synthetic_gaussians(25, 3, 2.0, derive_seed(seed, 114));
    let spec = SplitSpec::default_with_seed(derive_seed(seed, 115));
    let (a_tr, a_va, a_te) = split(&ds, &spec).map_err(|e| e.to_string())?;
    let (b_tr, _, _) = split(&ds, &spec).map_err(|e| e.to_string())?;
    if a_tr.features() != b_tr.features() {
        return Err("same spec produced different training rows".into());
    }
    if a_tr.n() + a_va.n() + a_te.n() != ds.n() {
        return Err("split blocks do not partition the rows".into());
    }
    Ok(format!(
        "{}/{}/{} partition reproduced exactly",
        a_tr.n(),
        a_va.n(),
        a_te.n()
    ))
}

fn robust_gradient_spot_check(seed: u64) -> Result<String, String> {
    let (ds, model, cache) = trained(10, derive_seed(seed, 116));
    let x = Array1::from_vec(vec![0.8, -0.6]);
    let k = 2;
    let set = influence_set(&cache, &model, x.view()).map_err(|e| e.to_string())?;
    let mut sorted: Vec<f64> = set.to_vec();
    sorted.sort_by(f64::total_cmp);
    if (sorted[k] - sorted[k - 1]).abs() < 1e-12 {
        return Ok("skipped at a selection tie".into());
    }
    let grad = robust_score_gradient(&cache, &model, x.view(), k).map_err(|e| e.to_string())?;
    let h = 1e-6;
    for a in 0..ds.d() {
        let mut xp = x.clone();
        xp[a] += h;
        let mut xm = x.clone();
        xm[a] -= h;
        let fd = (robust_score(&cache, &model, xp.view(), k).unwrap()
            - robust_score(&cache, &model, xm.view(), k).unwrap())
            / (2.0 * h);
        if (grad[a] - fd).abs() / fd.abs().max(1e-9) > 1e-6 {
            return Err(format!("coordinate {a}: {} vs {fd}", grad[a]));
        }
    }
    Ok("matches central differences".into())
}
