//! Subcommand implementations. Thin orchestration over the library modules;
//! every run writes its resolved config to `provenance.json` in the output
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use ndarray::Array1;
use rayon::prelude::*;

use super::{write_provenance, CliError, Merge};
use crate::data::{
    fit_apply_preprocess, load_csv, read_standardized_csv, split_raw, write_standardized_csv,
    Dataset, Schema, SplitSpec,
};
use crate::harness::{
    estimate_delta, exhaustive_validity_oracle, k_sensitivity_sweep, run_removal_trials,
    write_report_csv, write_report_json, EvalReport, MethodCfes, TrialSpec, DEFAULT_ORACLE_CAP,
    DELTA_SAFETY_FACTOR,
};
use crate::models::{
    accuracy, build_hessian_factor, load_model, save_model, train_logreg, train_mlp, Classifier,
    MlpHyper, Model, ModelSpec, DEFAULT_MLP_DAMPING, DEFAULT_NEWTON_MAX_ITERS, DEFAULT_NEWTON_TOL,
};
use crate::recourse::{
    batch_explain, write_cfe_csv, CfeOutcome, Method, RecourseError, RocerfConfig, SolverSettings,
};
use crate::rng::derive_seed;
use crate::surrogate::{rocerf_via_surrogate, SurrogateError, SurrogateInfo, SurrogateSettings};
use crate::unlearn::{build_influence_cache, load_cache, save_cache, InfluenceCache};

type CommandResult = (Result<(), CliError>, Option<PathBuf>);

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_standardized_csv(path).map_err(CliError::from)
}

fn ceil_fraction(frac: f64, n: usize) -> usize {
    ((frac * n as f64).ceil() as usize).max(1)
}

fn parse_f64_list(text: &str, key: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("'{key}': bad number '{s}'")))
        })
        .collect()
}

fn parse_usize_list(text: &str, key: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("'{key}': bad count '{s}'")))
        })
        .collect()
}

fn parse_methods(text: &str) -> Result<Vec<Method>, CliError> {
    text.split(',')
        .map(|s| {
            Method::parse(s.trim())
                .ok_or_else(|| CliError::Config(format!("'methods': unknown method '{s}'")))
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    crate::ioutil::atomic_write(path, &bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Retraining recipe matching a loaded model.
fn model_spec_of(model: &Model) -> ModelSpec {
    match model {
        Model::Linear(m) => ModelSpec::Logreg {
            gamma: m.gamma,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_iters: DEFAULT_NEWTON_MAX_ITERS,
        },
        Model::Mlp(m) => ModelSpec::Mlp {
            gamma: m.gamma,
            hyper: m.hyper,
        },
    }
}

fn negative_rows(ds: &Dataset, model: &Model) -> Vec<Array1<f64>> {
    ds.negative_indices_under(|x| model.score(x).expect("dims match"))
        .into_iter()
        .map(|i| ds.x(i).to_owned())
        .collect()
}

fn surrogate_error_to_outcome(e: SurrogateError) -> RecourseError {
    match e {
        SurrogateError::Recourse(r) => r,
        other => RecourseError::SurrogateFit {
            detail: other.to_string(),
        },
    }
}

/// Generate one method's counterfactuals. Linear robust runs against the
/// cache; network robust goes through per-sample local surrogates (seeded per
/// sample). Returns surrogate provenance when that path ran.
pub(crate) fn generate_outcomes(
    model: &Model,
    cache: Option<&InfluenceCache>,
    train: &Dataset,
    negatives: &[Array1<f64>],
    method: Method,
    cfg: &RocerfConfig,
    surrogate: &SurrogateSettings,
) -> Result<(Vec<CfeOutcome>, Option<Vec<Option<SurrogateInfo>>>), CliError> {
    match (method, model) {
        (Method::Scfe, _) => Ok((
            batch_explain(model, None, negatives, Method::Scfe, cfg)?,
            None,
        )),
        (Method::Rocerf, Model::Linear(_)) => {
            let cache = cache.ok_or_else(|| {
                CliError::Config("rocerf on a linear model needs an influence cache".into())
            })?;
            Ok((
                batch_explain(model, Some(cache), negatives, Method::Rocerf, cfg)?,
                None,
            ))
        }
        (Method::Rocerf, Model::Mlp(_)) => {
            let pairs: Vec<(CfeOutcome, Option<SurrogateInfo>)> = negatives
                .par_iter()
                .enumerate()
                .map(|(i, x0)| {
                    let per_sample = SurrogateSettings {
                        seed: derive_seed(surrogate.seed, i as u64),
                        ..surrogate.clone()
                    };
                    match rocerf_via_surrogate(model, train, x0.view(), cfg, &per_sample) {
                        Ok(s) => (Ok(s.result), Some(s.surrogate)),
                        Err(e) => (Err(surrogate_error_to_outcome(e)), None),
                    }
                })
                .collect();
            let mut outcomes = Vec::with_capacity(pairs.len());
            let mut infos = Vec::with_capacity(pairs.len());
            for (o, i) in pairs {
                outcomes.push(o);
                infos.push(i);
            }
            Ok((outcomes, Some(infos)))
        }
    }
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct PreprocessArgs {
    /// Raw CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema file (see the data module docs for the format).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory for train/val/test CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    test_frac: Option<f64>,
    /// Skip the always-1 bias column.
    #[arg(long)]
    no_bias: bool,
}

pub(crate) fn run_preprocess(
    args: PreprocessArgs,
    file_map: BTreeMap<String, String>,
) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = preprocess_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn preprocess_inner(
    args: PreprocessArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let data = m.required_path("data", args.data)?;
    let schema_path = m.required_path("schema", args.schema)?;
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let seed = m.parsed("seed", args.seed, 42u64)?;
    let train_frac = m.parsed("train_frac", args.train_frac, 0.7)?;
    let val_frac = m.parsed("val_frac", args.val_frac, 0.1)?;
    let test_frac = m.parsed("test_frac", args.test_frac, 0.2)?;
    let add_bias = !m.parsed("no_bias", args.no_bias.then_some(true), false)?;

    let schema = Schema::from_file(&schema_path)?;
    let (raw, dropped) = load_csv(&data, &schema)?;
    let spec = SplitSpec {
        train_fraction: train_frac,
        val_fraction: val_frac,
        test_fraction: test_frac,
        seed,
    };
    let (train_raw, val_raw, test_raw) = split_raw(&raw, &spec)?;
    let (_prep, train, others) = fit_apply_preprocess(&train_raw, &[&val_raw, &test_raw], add_bias)?;
    write_standardized_csv(&train, out.join("train.csv"))?;
    write_standardized_csv(&others[0], out.join("val.csv"))?;
    write_standardized_csv(&others[1], out.join("test.csv"))?;
    println!(
        "preprocess: {} kept rows ({dropped} dropped), d={} → {}/{}/{} train/val/test",
        raw.n(),
        train.d(),
        train.n(),
        others[0].n(),
        others[1].n()
    );
    write_provenance(
        &out,
        "preprocess",
        serde_json::json!({
            "data": data, "schema": schema_path, "out": out, "seed": seed,
            "train_frac": train_frac, "val_frac": val_frac, "test_frac": test_frac,
            "add_bias": add_bias, "dropped_rows": dropped,
        }),
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    /// Standardized training CSV (from `preprocess`).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Optional standardized test CSV for an accuracy report.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Model family: logreg | mlp.
    #[arg(long)]
    model: Option<String>,
    /// Ridge strength; defaults to 1/n for logreg, 1e-4 for the network.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Network learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hessian damping for the influence cache (linear default 0).
    #[arg(long)]
    damping: Option<f64>,
    /// Skip building the influence cache.
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_train(args: TrainArgs, file_map: BTreeMap<String, String>) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = train_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn train_inner(
    args: TrainArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let train_path = m.required_path("train", args.train)?;
    let test_path = m.optional_path("test", args.test)?;
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let family = m.string("model", args.model, "logreg")?;
    let gamma_flag = m.optional("gamma", args.gamma)?;
    let newton_tol = m.parsed("newton_tol", args.newton_tol, DEFAULT_NEWTON_TOL)?;
    let max_iters = m.parsed("max_iters", args.max_iters, DEFAULT_NEWTON_MAX_ITERS)?;
    let lr = m.parsed("lr", args.lr, 0.01)?;
    let epochs = m.parsed("epochs", args.epochs, 200usize)?;
    let batch = m.parsed("batch", args.batch, 32usize)?;
    let seed = m.parsed("seed", args.seed, 0u64)?;
    let damping_flag = m.optional("damping", args.damping)?;
    let no_cache = m.parsed("no_cache", args.no_cache.then_some(true), false)?;

    let train = load_dataset(&train_path)?;
    let (model, damping) = match family.as_str() {
        "logreg" => {
            let gamma = gamma_flag.unwrap_or(1.0 / train.n() as f64);
            let model = Model::Linear(train_logreg(&train, gamma, newton_tol, max_iters)?);
            (model, damping_flag.unwrap_or(0.0))
        }
        "mlp" => {
            let gamma = gamma_flag.unwrap_or(1e-4);
            let hyper = MlpHyper {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                seed,
            };
            let model = Model::Mlp(train_mlp(&train, hyper, gamma)?);
            (model, damping_flag.unwrap_or(DEFAULT_MLP_DAMPING))
        }
        other => {
            return Err(CliError::Config(format!(
                "'model': unknown family '{other}' (logreg | mlp)"
            )))
        }
    };
    save_model(&model, out.join("model.json"))?;

    // The influence cache lives in the linear parameter space; the network
    // takes the per-sample surrogate route at explain time instead.
    let cache_built = if matches!(model, Model::Linear(_)) && !no_cache {
        let factor = build_hessian_factor(&model, &train, damping)?;
        let cache = build_influence_cache(&model, &train, &factor)?;
        save_cache(&cache, out.join("influence.cache"))?;
        true
    } else {
        false
    };

    let train_acc = accuracy(&model, &train);
    let test_acc = match &test_path {
        Some(p) => Some(accuracy(&model, &load_dataset(p)?)),
        None => None,
    };
    write_json(
        &out.join("metrics.json"),
        &serde_json::json!({
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
            "n_train": train.n(),
            "d": train.d(),
        }),
    )?;
    println!(
        "train: {family} on n={} d={} → train acc {:.3}{}",
        train.n(),
        train.d(),
        train_acc,
        match test_acc {
            Some(a) => format!(", test acc {a:.3}"),
            None => String::new(),
        }
    );
    write_provenance(
        &out,
        "train",
        serde_json::json!({
            "train": train_path, "test": test_path, "out": out, "model": family,
            "gamma": model.gamma(), "newton_tol": newton_tol, "max_iters": max_iters,
            "lr": lr, "epochs": epochs, "batch": batch, "seed": seed,
            "damping": damping, "cache_built": cache_built,
        }),
    )
}

// ---------------------------------------------------------------------------
// Shared artifact loading for the downstream commands
// ---------------------------------------------------------------------------

struct Loaded {
    model: Model,
    cache: Option<InfluenceCache>,
    train: Dataset,
    spec: ModelSpec,
}

fn load_artifacts(
    m: &mut Merge,
    model_flag: Option<PathBuf>,
    cache_flag: Option<PathBuf>,
    train_flag: Option<PathBuf>,
) -> Result<Loaded, CliError> {
    let model_path = m.required_path("model", model_flag)?;
    let cache_path = m.optional_path("cache", cache_flag)?;
    let train_path = m.required_path("train", train_flag)?;
    let model = load_model(&model_path)?;
    let train = load_dataset(&train_path)?;
    if train.d() != model.feature_dim() {
        return Err(CliError::Data(format!(
            "training CSV has d={} but the model expects d={}",
            train.d(),
            model.feature_dim()
        )));
    }
    let cache = match cache_path {
        Some(p) => {
            let cache = load_cache(&p)?;
            if cache.n() != train.n() || cache.p() != model.param_dim() {
                return Err(CliError::Data(format!(
                    "cache shape ({}, {}) does not match train n={} / model p={}",
                    cache.n(),
                    cache.p(),
                    train.n(),
                    model.param_dim()
                )));
            }
            Some(cache)
        }
        // Linear models can rebuild the cache on the fly.
        None => match &model {
            Model::Linear(_) => {
                let factor = build_hessian_factor(&model, &train, 0.0)?;
                Some(build_influence_cache(&model, &train, &factor)?)
            }
            Model::Mlp(_) => None,
        },
    };
    let spec = model_spec_of(&model);
    Ok(Loaded {
        model,
        cache,
        train,
        spec,
    })
}

struct RobustKnobs {
    cfg: RocerfConfig,
    surrogate: SurrogateSettings,
    seed: u64,
}

/// Resolve k / δ / seed / surrogate settings shared by explain-like commands.
fn resolve_robust_knobs(
    m: &mut Merge,
    k_flag: Option<usize>,
    k_frac_flag: Option<f64>,
    delta_flag: Option<f64>,
    seed_flag: Option<u64>,
    surrogate_flags: (Option<usize>, Option<f64>, bool, Option<f64>),
    n_train: usize,
) -> Result<RobustKnobs, CliError> {
    let k_explicit = m.optional("k", k_flag)?;
    let k_frac = m.parsed("k_frac", k_frac_flag, 0.005)?;
    let k = k_explicit.unwrap_or_else(|| ceil_fraction(k_frac, n_train));
    if k > n_train {
        return Err(CliError::Config(format!(
            "k={k} exceeds the training size n={n_train}"
        )));
    }
    let delta = m.parsed("delta", delta_flag, 0.0)?;
    let seed = m.parsed("seed", seed_flag, 0u64)?;
    let surrogate = SurrogateSettings {
        n_perturb: m.parsed("surrogate_n", surrogate_flags.0, 10_000usize)?,
        noise: m.parsed("surrogate_noise", surrogate_flags.1, 0.1)?,
        noise_is_variance: !m.parsed(
            "surrogate_noise_stddev",
            surrogate_flags.2.then_some(true),
            false,
        )?,
        gamma: m.parsed("surrogate_gamma", surrogate_flags.3, 1e-3)?,
        seed,
        ..SurrogateSettings::default()
    };
    Ok(RobustKnobs {
        cfg: RocerfConfig {
            k,
            delta,
            solver: SolverSettings::default(),
        },
        surrogate,
        seed,
    })
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ExplainArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Influence cache (from `train`; rebuilt on the fly for linear models
    /// when omitted).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Standardized training CSV (cache rebuilds and surrogate influence).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Standardized CSV whose negative rows get counterfactuals.
    #[arg(long)]
    data: Option<PathBuf>,
    /// scfe | rocerf.
    #[arg(long)]
    method: Option<String>,
    /// Removal budget as a count; overrides --k-frac.
    #[arg(long)]
    k: Option<usize>,
    /// Removal budget as a fraction of the training size (default 0.005).
    #[arg(long)]
    k_frac: Option<f64>,
    /// Robust margin δ.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    surrogate_n: Option<usize>,
    #[arg(long)]
    surrogate_noise: Option<f64>,
    /// Interpret --surrogate-noise as a standard deviation, not a variance.
    #[arg(long)]
    surrogate_noise_stddev: bool,
    #[arg(long)]
    surrogate_gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_explain(args: ExplainArgs, file_map: BTreeMap<String, String>) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = explain_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn explain_inner(
    args: ExplainArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let loaded = load_artifacts(m, args.model, args.cache, args.train)?;
    let data_path = m.required_path("data", args.data)?;
    let method_name = m.string("method", args.method, "rocerf")?;
    let method = Method::parse(&method_name)
        .ok_or_else(|| CliError::Config(format!("'method': unknown '{method_name}'")))?;
    let knobs = resolve_robust_knobs(
        m,
        args.k,
        args.k_frac,
        args.delta,
        args.seed,
        (
            args.surrogate_n,
            args.surrogate_noise,
            args.surrogate_noise_stddev,
            args.surrogate_gamma,
        ),
        loaded.train.n(),
    )?;
    let data = load_dataset(&data_path)?;
    if data.d() != loaded.model.feature_dim() {
        return Err(CliError::Data(format!(
            "data CSV has d={} but the model expects d={}",
            data.d(),
            loaded.model.feature_dim()
        )));
    }
    let negatives = negative_rows(&data, &loaded.model);
    let (outcomes, surrogate_infos) = generate_outcomes(
        &loaded.model,
        loaded.cache.as_ref(),
        &loaded.train,
        &negatives,
        method,
        &knobs.cfg,
        &knobs.surrogate,
    )?;
    write_cfe_csv(method.name(), &outcomes, out.join("cfes.csv"))?;
    let feasible = outcomes
        .iter()
        .filter(|o| o.as_ref().map(|c| c.feasible).unwrap_or(false))
        .count();
    println!(
        "explain: {} negatives → {} counterfactuals ({feasible} feasible) via {}",
        negatives.len(),
        outcomes.len(),
        method.name()
    );
    write_provenance(
        &out,
        "explain",
        serde_json::json!({
            "model_family": loaded.model.family(),
            "data": data_path, "out": out, "method": method.name(),
            "k": knobs.cfg.k, "delta": knobs.cfg.delta, "seed": knobs.seed,
            "solver": knobs.cfg.solver,
            "surrogate": surrogate_infos.as_ref().map(|infos| serde_json::json!({
                "n_perturb": knobs.surrogate.n_perturb,
                "noise": knobs.surrogate.noise,
                "noise_is_variance": knobs.surrogate.noise_is_variance,
                "gamma": knobs.surrogate.gamma,
                "fit_accuracy": infos.iter()
                    .map(|i| i.as_ref().map(|s| s.fit_accuracy)).collect::<Vec<_>>(),
                "low_fidelity": infos.iter()
                    .map(|i| i.as_ref().map(|s| s.low_fidelity)).collect::<Vec<_>>(),
            })),
        }),
    )
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Standardized test CSV; its negative rows are the evaluation set.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated: scfe,rocerf.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated removal fractions, e.g. 0.005,0.01,0.02,0.03,0.05.
    #[arg(long)]
    alphas: Option<String>,
    /// Trials per α (M).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_frac: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    surrogate_n: Option<usize>,
    #[arg(long)]
    surrogate_noise: Option<f64>,
    #[arg(long)]
    surrogate_noise_stddev: bool,
    #[arg(long)]
    surrogate_gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_evaluate(
    args: EvaluateArgs,
    file_map: BTreeMap<String, String>,
) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = evaluate_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn evaluate_inner(
    args: EvaluateArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let loaded = load_artifacts(m, args.model, args.cache, args.train)?;
    let test_path = m.required_path("test", args.test)?;
    let knobs = resolve_robust_knobs(
        m,
        args.k,
        args.k_frac,
        args.delta,
        args.seed,
        (
            args.surrogate_n,
            args.surrogate_noise,
            args.surrogate_noise_stddev,
            args.surrogate_gamma,
        ),
        loaded.train.n(),
    )?;
    let methods = parse_methods(&m.string("methods", args.methods, "scfe,rocerf")?)?;
    let alphas = parse_f64_list(
        &m.string("alphas", args.alphas, "0.005,0.01,0.02,0.03,0.05")?,
        "alphas",
    )?;
    let trials = m.parsed("trials", args.trials, 100usize)?;

    let test = load_dataset(&test_path)?;
    let negatives = negative_rows(&test, &loaded.model);
    if negatives.is_empty() {
        return Err(CliError::Data(
            "no negative test samples under the model; nothing to explain".into(),
        ));
    }

    let mut method_runs = Vec::new();
    for &method in &methods {
        let (outcomes, _) = generate_outcomes(
            &loaded.model,
            loaded.cache.as_ref(),
            &loaded.train,
            &negatives,
            method,
            &knobs.cfg,
            &knobs.surrogate,
        )?;
        write_cfe_csv(
            method.name(),
            &outcomes,
            out.join(format!("cfes_{}.csv", method.name())),
        )?;
        method_runs.push(MethodCfes {
            method: method.name().to_string(),
            outcomes,
        });
    }

    let mut report = EvalReport::default();
    for (ai, &alpha) in alphas.iter().enumerate() {
        let spec = TrialSpec::new(alpha, trials, derive_seed(knobs.seed, ai as u64), loaded.spec);
        let partial = run_removal_trials(&loaded.train, &spec, &method_runs)?;
        report.entries.extend(partial.entries);
    }
    write_report_json(&report, out.join("report.json"))?;
    write_report_csv(&report, out.join("report.csv"))?;
    for e in &report.entries {
        println!(
            "evaluate: {} α={:.4} validity {:.4} ± {:.4}, L2 cost {:.4}",
            e.method, e.alpha, e.validity_mean, e.validity_se, e.cost_l2_mean
        );
    }
    write_provenance(
        &out,
        "evaluate",
        serde_json::json!({
            "model_family": loaded.model.family(), "test": test_path, "out": out,
            "methods": methods.iter().map(|x| x.name()).collect::<Vec<_>>(),
            "alphas": alphas, "trials": trials, "k": knobs.cfg.k, "delta": knobs.cfg.delta,
            "seed": knobs.seed, "negatives": negatives.len(), "solver": knobs.cfg.solver,
        }),
    )
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    methods: Option<String>,
    /// Exhaustive removal count k (all C(n,k) retrains).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Cap on C(n,k).
    #[arg(long)]
    cap: Option<u128>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_oracle(args: OracleArgs, file_map: BTreeMap<String, String>) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = oracle_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn oracle_inner(
    args: OracleArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let loaded = load_artifacts(m, args.model, args.cache, args.train)?;
    let test_path = m.required_path("test", args.test)?;
    let k = m.parsed("k", args.k, 2usize)?;
    if k > loaded.train.n() {
        return Err(CliError::Config(format!(
            "k={k} exceeds the training size n={}",
            loaded.train.n()
        )));
    }
    let delta = m.parsed("delta", args.delta, 0.0)?;
    let cap = m.parsed("cap", args.cap, DEFAULT_ORACLE_CAP)?;
    let seed = m.parsed("seed", args.seed, 0u64)?;
    let methods = parse_methods(&m.string("methods", args.methods, "scfe,rocerf")?)?;

    let test = load_dataset(&test_path)?;
    let negatives = negative_rows(&test, &loaded.model);
    let cfg = RocerfConfig::new(k, delta);
    let surrogate = SurrogateSettings {
        seed,
        ..SurrogateSettings::default()
    };
    let mut method_runs = Vec::new();
    for &method in &methods {
        let (outcomes, _) = generate_outcomes(
            &loaded.model,
            loaded.cache.as_ref(),
            &loaded.train,
            &negatives,
            method,
            &cfg,
            &surrogate,
        )?;
        method_runs.push(MethodCfes {
            method: method.name().to_string(),
            outcomes,
        });
    }
    let reports = exhaustive_validity_oracle(&loaded.train, &loaded.spec, k, &method_runs, cap)?;
    for rep in &reports {
        println!(
            "oracle: {} worst-case validity {:.4} over {} retrains (witness {:?})",
            rep.method, rep.worst_validity, rep.models_retrained, rep.witness
        );
    }
    write_json(&out.join("oracle.json"), &reports)?;
    write_provenance(
        &out,
        "oracle",
        serde_json::json!({
            "test": test_path, "out": out, "k": k, "delta": delta, "cap": cap,
            "seed": seed, "methods": methods.iter().map(|x| x.name()).collect::<Vec<_>>(),
        }),
    )
}

// ---------------------------------------------------------------------------
// sweep-k
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SweepKArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated removal budgets, e.g. 2,4,8.
    #[arg(long)]
    ks: Option<String>,
    /// Comma-separated removal fractions.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_sweep_k(args: SweepKArgs, file_map: BTreeMap<String, String>) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = sweep_k_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn sweep_k_inner(
    args: SweepKArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let loaded = load_artifacts(m, args.model, args.cache, args.train)?;
    let test_path = m.required_path("test", args.test)?;
    let ks = parse_usize_list(&m.string("ks", args.ks, "2,4")?, "ks")?;
    let alphas = parse_f64_list(&m.string("alphas", args.alphas, "0.01,0.03,0.05")?, "alphas")?;
    let trials = m.parsed("trials", args.trials, 50usize)?;
    let seed = m.parsed("seed", args.seed, 0u64)?;
    if let Some(&k) = ks.iter().find(|&&k| k > loaded.train.n()) {
        return Err(CliError::Config(format!(
            "k={k} exceeds the training size n={}",
            loaded.train.n()
        )));
    }
    let cache = loaded
        .cache
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep-k needs the linear influence cache".into()))?;
    let test = load_dataset(&test_path)?;
    let negatives = negative_rows(&test, &loaded.model);
    let grid = k_sensitivity_sweep(
        &loaded.train,
        &negatives,
        &loaded.model,
        cache,
        &ks,
        &alphas,
        trials,
        seed,
        &loaded.spec,
    )?;
    for (ki, &k) in grid.k_values.iter().enumerate() {
        let cells: Vec<String> = grid.validity[ki].iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "sweep-k: k={k} validity [{}] pattern_holds={}",
            cells.join(", "),
            grid.pattern_holds[ki]
        );
    }
    write_json(&out.join("sweep.json"), &grid)?;
    write_provenance(
        &out,
        "sweep-k",
        serde_json::json!({
            "test": test_path, "out": out, "ks": ks, "alphas": alphas,
            "trials": trials, "seed": seed,
        }),
    )
}

// ---------------------------------------------------------------------------
// estimate-delta
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EstimateDeltaArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Standardized validation CSV the margin is calibrated on.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_frac: Option<f64>,
    /// Number of simulated removals.
    #[arg(long)]
    sims: Option<usize>,
    /// Multiplier on the largest simulated error.
    #[arg(long)]
    safety: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn run_estimate_delta(
    args: EstimateDeltaArgs,
    file_map: BTreeMap<String, String>,
) -> CommandResult {
    let mut m = Merge::new(file_map);
    let mut out_dir = None;
    let result = estimate_delta_inner(args, &mut m, &mut out_dir).and_then(|_| m.finish());
    (result, out_dir)
}

fn estimate_delta_inner(
    args: EstimateDeltaArgs,
    m: &mut Merge,
    out_dir: &mut Option<PathBuf>,
) -> Result<(), CliError> {
    let out = m.required_path("out", args.out)?;
    *out_dir = Some(out.clone());
    let loaded = load_artifacts(m, args.model, args.cache, args.train)?;
    let val_path = m.required_path("val", args.val)?;
    let k_explicit = m.optional("k", args.k)?;
    let k_frac = m.parsed("k_frac", args.k_frac, 0.005)?;
    let k = k_explicit.unwrap_or_else(|| ceil_fraction(k_frac, loaded.train.n()));
    if k > loaded.train.n() {
        return Err(CliError::Config(format!(
            "k={k} exceeds the training size n={}",
            loaded.train.n()
        )));
    }
    let sims = m.parsed("sims", args.sims, 20usize)?;
    let safety = m.parsed("safety", args.safety, DELTA_SAFETY_FACTOR)?;
    let seed = m.parsed("seed", args.seed, 0u64)?;
    let cache = loaded
        .cache
        .as_ref()
        .ok_or_else(|| CliError::Config("estimate-delta needs the linear influence cache".into()))?;
    let val = load_dataset(&val_path)?;
    let delta = estimate_delta(
        &loaded.train,
        &val,
        &loaded.model,
        cache,
        &loaded.spec,
        k,
        sims,
        seed,
        safety,
    )?;
    println!("estimate-delta: δ = {delta:.6e} (k={k}, {sims} simulations, safety ×{safety})");
    write_json(
        &out.join("delta.json"),
        &serde_json::json!({
            "delta": delta, "k": k, "sims": sims, "safety": safety, "seed": seed,
        }),
    )?;
    write_provenance(
        &out,
        "estimate-delta",
        serde_json::json!({
            "val": val_path, "out": out, "k": k, "sims": sims,
            "safety": safety, "seed": seed,
        }),
    )
}
