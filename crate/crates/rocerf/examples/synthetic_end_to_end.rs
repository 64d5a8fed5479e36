//! End to end on synthetic data: train a classifier, precompute influence
//! vectors, generate baseline and deletion-robust counterfactuals for every
//! rejected test sample, then *prove* the robustness claim at this scale by
//! retraining under every possible removal of k training points.
//!
//! ```bash
//! cargo run --release -p rocerf --example synthetic_end_to_end
//! ```

use ndarray::Array1;
use rocerf::data::make_synthetic_gaussians;
use rocerf::harness::{
    estimate_delta, exhaustive_validity_oracle, MethodCfes, DEFAULT_ORACLE_CAP,
    DELTA_SAFETY_FACTOR,
};
use rocerf::models::{accuracy, build_hessian_factor, train_logreg, Classifier, Model, ModelSpec};
use rocerf::recourse::{batch_explain, Method, RocerfConfig};
use rocerf::unlearn::build_influence_cache;

fn main() {
    // A 40-point training set keeps C(40,2) = 780 retrains instant, so the
    // worst case is checked exhaustively rather than sampled.
    let train = make_synthetic_gaussians(20, 2, 3.0, 0);
    let val = make_synthetic_gaussians(20, 2, 3.0, 1);
    let test = make_synthetic_gaussians(100, 2, 3.0, 2);
    let gamma = 0.1;
    let k = 2;

    let model = Model::Linear(train_logreg(&train, gamma, 1e-10, 100).unwrap());
    println!(
        "trained logistic regression: train acc {:.3}, test acc {:.3}",
        accuracy(&model, &train),
        accuracy(&model, &test)
    );

    let factor = build_hessian_factor(&model, &train, 0.0).unwrap();
    let cache = build_influence_cache(&model, &train, &factor).unwrap();
    println!(
        "influence cache: {} vectors of dimension {}",
        cache.n(),
        cache.p()
    );

    let spec = ModelSpec::logreg_default(gamma);
    let delta = estimate_delta(
        &train, &val, &model, &cache, &spec, k, 3000, 7, DELTA_SAFETY_FACTOR,
    )
    .unwrap();
    println!("estimated robust margin δ = {delta:.4} (k = {k})");

    let negatives: Vec<Array1<f64>> = test
        .negative_indices_under(|x| model.score(x).unwrap())
        .into_iter()
        .map(|i| test.x(i).to_owned())
        .collect();
    println!("{} rejected test samples get counterfactuals", negatives.len());

    let baseline = batch_explain(
        &model,
        Some(&cache),
        &negatives,
        Method::Scfe,
        &RocerfConfig::new(0, 0.0),
    )
    .unwrap();
    let robust = batch_explain(
        &model,
        Some(&cache),
        &negatives,
        Method::Rocerf,
        &RocerfConfig::new(k, delta),
    )
    .unwrap();

    let mean_cost = |outcomes: &[rocerf::recourse::CfeOutcome]| {
        let costs: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.as_ref().ok().map(|r| r.cost_l2))
            .collect();
        costs.iter().sum::<f64>() / costs.len() as f64
    };
    println!(
        "mean L2 cost: baseline {:.3}, robust {:.3}",
        mean_cost(&baseline),
        mean_cost(&robust)
    );

    // The oracle: every one of the 780 possible 2-point deletions, retrained
    // from scratch, each counterfactual re-scored.
    let methods = [
        MethodCfes {
            method: "baseline".into(),
            outcomes: baseline,
        },
        MethodCfes {
            method: "robust".into(),
            outcomes: robust,
        },
    ];
    let reports =
        exhaustive_validity_oracle(&train, &spec, k, &methods, DEFAULT_ORACLE_CAP).unwrap();
    for r in &reports {
        println!(
            "{:>8}: worst-case validity {:.4} over {} exact retrains (worst removal: {:?})",
            r.method, r.worst_validity, r.models_retrained, r.witness
        );
    }
}
