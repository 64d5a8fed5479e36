//! The `rocerf` command-line pipeline.
//!
//! Subcommands: `preprocess`, `train`, `explain`, `evaluate`, `oracle`,
//! `sweep-k`, `estimate-delta`, `verify`. Every flag can also come from a
//! `key = value` config file passed with `--config`; flags override the file,
//! unknown keys are rejected, and the fully resolved configuration is written
//! to `provenance.json` next to every artifact so a run can be repeated
//! exactly.
//!
//! Exit codes: 0 success, 1 configuration error (the message names the
//! offending key), 2 data error, 3 runtime error (also writes a
//! machine-readable `error.json` into the output directory when one is
//! known).

mod commands;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use crate::data::DataError;
use crate::harness::HarnessError;
use crate::models::ModelError;
use crate::recourse::RecourseError;
use crate::surrogate::SurrogateError;
use crate::unlearn::UnlearnError;

pub use commands::*;

/// Errors carrying their exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: bad flags, bad config keys/values, inconsistent settings.
    Config(String),
    /// Exit 2: missing or malformed input data/artifacts.
    Data(String),
    /// Exit 3: a step failed at runtime (non-convergence, infeasibility cap,
    /// failed property).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Runtime(_) => "runtime",
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonConvergence { .. }
            | ModelError::DivergedLoss { .. }
            | ModelError::Linalg(_) => CliError::Runtime(e.to_string()),
            ModelError::BadModelFile { .. } | ModelError::Io(_) | ModelError::Json(_) => {
                CliError::Data(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<UnlearnError> for CliError {
    fn from(e: UnlearnError) -> Self {
        match e {
            UnlearnError::KTooLarge { .. } => CliError::Config(e.to_string()),
            UnlearnError::CacheFile { .. } | UnlearnError::Io(_) => CliError::Data(e.to_string()),
            UnlearnError::Model(m) => m.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<RecourseError> for CliError {
    fn from(e: RecourseError) -> Self {
        match e {
            RecourseError::MissingCache => CliError::Config(e.to_string()),
            RecourseError::Model(m) => m.into(),
            RecourseError::Unlearn(u) => u.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Model(m) => m.into(),
            SurrogateError::Unlearn(u) => u.into(),
            SurrogateError::Recourse(r) => r.into(),
            SurrogateError::Data(d) => d.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::CombinatoricsTooLarge { .. } => CliError::Config(e.to_string()),
            HarnessError::UnpairedResults { .. } => CliError::Config(e.to_string()),
            HarnessError::Unlearn(u) => u.into(),
            HarnessError::Model(m) => m.into(),
            HarnessError::Recourse(r) => r.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Config file merging
// ---------------------------------------------------------------------------

/// `key = value` lines; `#` comments and blank lines ignored.
pub(crate) fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| CliError::Config(format!("config file not readable: {}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "config line {} is not 'key = value': '{line}'",
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag-over-file resolution with unknown-key rejection.
pub(crate) struct Merge {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Merge {
    pub(crate) fn new(map: BTreeMap<String, String>) -> Self {
        Self {
            map,
            used: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub(crate) fn parsed<T: std::str::FromStr>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            self.raw(key); // the flag overrides but still claims the key
            return Ok(v);
        }
        match self.raw(key) {
            Some(text) => text
                .parse()
                .map_err(|_| CliError::Config(format!("config key '{key}': bad value '{text}'"))),
            None => Ok(default),
        }
    }

    pub(crate) fn optional<T: std::str::FromStr>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError> {
        if let Some(v) = flag {
            self.raw(key);
            return Ok(Some(v));
        }
        match self.raw(key) {
            Some(text) => text
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("config key '{key}': bad value '{text}'"))),
            None => Ok(None),
        }
    }

    pub(crate) fn required_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<PathBuf, CliError> {
        if let Some(v) = flag {
            self.raw(key);
            return Ok(v);
        }
        match self.raw(key) {
            Some(text) => Ok(PathBuf::from(text)),
            None => Err(CliError::Config(format!(
                "missing required setting '{key}' (flag --{key} or config key)"
            ))),
        }
    }

    pub(crate) fn optional_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<Option<PathBuf>, CliError> {
        if let Some(v) = flag {
            self.raw(key);
            return Ok(Some(v));
        }
        Ok(self.raw(key).map(PathBuf::from))
    }

    pub(crate) fn string(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &str,
    ) -> Result<String, CliError> {
        if let Some(v) = flag {
            self.raw(key);
            return Ok(v);
        }
        Ok(self.raw(key).unwrap_or_else(|| default.to_string()))
    }

    /// Reject any config key no setting claimed.
    pub(crate) fn finish(self) -> Result<(), CliError> {
        for key in self.map.keys() {
            if !self.used.contains(key) {
                return Err(CliError::Config(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Provenance and error artifacts
// ---------------------------------------------------------------------------

pub(crate) fn write_provenance(
    out_dir: &Path,
    command: &str,
    resolved: serde_json::Value,
) -> Result<(), CliError> {
    let doc = serde_json::json!({
        "command": command,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
    });
    let bytes = serde_json::to_vec_pretty(&doc)
        .map_err(|e| CliError::Runtime(format!("provenance serialization: {e}")))?;
    crate::ioutil::atomic_write(&out_dir.join("provenance.json"), &bytes)
        .map_err(|e| CliError::Runtime(format!("writing provenance: {e}")))?;
    Ok(())
}

fn write_error_json(out_dir: &Path, err: &CliError) {
    let doc = serde_json::json!({
        "kind": err.kind_name(),
        "message": err.message(),
    });
    if let Ok(bytes) = serde_json::to_vec_pretty(&doc) {
        let _ = crate::ioutil::atomic_write(&out_dir.join("error.json"), &bytes);
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "rocerf",
    version,
    about = "Counterfactual explanations that stay valid when training points are deleted",
    long_about = None
)]
struct Cli {
    /// Key-value config file ('key = value' lines); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a raw CSV against a schema, split, standardize, and persist.
    Preprocess(commands::PreprocessArgs),
    /// Train a classifier and (for linear models) its influence cache.
    Train(commands::TrainArgs),
    /// Generate counterfactuals for the negative rows of a dataset.
    Explain(commands::ExplainArgs),
    /// Random-removal trials: validity and cost across an α grid.
    Evaluate(commands::EvaluateArgs),
    /// Exhaustive worst-case validity over all C(n,k) removals.
    Oracle(commands::OracleArgs),
    /// Validity grid across removal budgets k and removal fractions α.
    SweepK(commands::SweepKArgs),
    /// Calibrate the robust margin δ from simulated removals.
    EstimateDelta(commands::EstimateDeltaArgs),
    /// Run the synthetic property suite; exit 0 iff every check passes.
    Verify(verify::VerifyArgs),
}

/// Parse and dispatch, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let file_map = match &cli.config {
        Some(path) => match parse_config_file(path) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {}", e.message());
                return e.exit_code();
            }
        },
        None => BTreeMap::new(),
    };

    let (result, out_dir): (Result<(), CliError>, Option<PathBuf>) = match cli.command {
        Command::Preprocess(a) => commands::run_preprocess(a, file_map),
        Command::Train(a) => commands::run_train(a, file_map),
        Command::Explain(a) => commands::run_explain(a, file_map),
        Command::Evaluate(a) => commands::run_evaluate(a, file_map),
        Command::Oracle(a) => commands::run_oracle(a, file_map),
        Command::SweepK(a) => commands::run_sweep_k(a, file_map),
        Command::EstimateDelta(a) => commands::run_estimate_delta(a, file_map),
        Command::Verify(a) => verify::run_verify(a, file_map),
    };

    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            if err.exit_code() == 3 {
                if let Some(dir) = &out_dir {
                    write_error_json(dir, &err);
                }
            }
            err.exit_code()
        }
    }
}
