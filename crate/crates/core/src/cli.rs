//! The `unravel` command line: `explain`, `stability` and `regret`.
//!
//! Every flag can also come from a JSON object passed with `--config`,
//! keyed by the long flag name; flags given on the command line win.
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::acquisition::{AcquisitionKind, BoxDomain, ShiftMode};
use crate::blackbox::{
    builtin_model, subprocess_model, BlackBoxModel, Builtin, ModelError, SubprocessModelConfig,
};
use crate::dataset::{load_csv, preprocess, FeatureStats};
use crate::engine::{run_unravel, sample_efficiency_trace, write_trace_csv, ExplainRequest};
use crate::evaluation::{
    analyze_regret, simulate_regret, stability_experiment, write_trials_csv, EvalError,
    ExplainerConfig, RegretConfig, StabilityOptions,
};
use crate::explainers::{ard_importance, sparse_linear_importance};
use crate::gpr::KernelFamily;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "unravel",
    version,
    about = "Active-learning local explanations for black-box models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a surrogate dataset around one index sample and score features.
    Explain(ExplainArgs),
    /// Repeat explanations and measure top-k Jaccard instability.
    Stability(StabilityArgs),
    /// Paired FUR / UCB trials and the regret-difference bound.
    Regret(RegretArgs),
}

/// Flags shared by the model-facing subcommands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Builtin model: forrester, forrester-squared, sphere, linear, logistic-synthetic.
    #[arg(long)]
    pub model: Option<String>,
    /// Adapter command line, split on whitespace.
    #[arg(long)]
    pub adapter_cmd: Option<String>,
    /// Seed for builtins with random weights.
    #[arg(long)]
    pub model_seed: Option<u64>,
    /// Input dimension for builtins when no dataset or index sample fixes it.
    #[arg(long)]
    pub dim: Option<usize>,
    /// CSV of training data; the engine works in its standardized coordinates.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Target column to drop from the dataset.
    #[arg(long)]
    pub target: Option<String>,
    /// Seconds to wait for each adapter answer.
    #[arg(long)]
    pub adapter_timeout: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Index sample, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Dataset row to explain instead of `--x0`.
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// ucb, ur or fur.
    #[arg(long)]
    pub acq: Option<String>,
    /// FUR shift: broadcast (one draw for all features) or per-coordinate.
    #[arg(long)]
    pub shift: Option<String>,
    /// matern52, matern32 or linear.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exploration half-width per feature when no dataset is given.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub refit_every: Option<usize>,
    /// Random starts of the acquisition search; default 8 + 2d.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Comma separated: unravel, unravel-lime, lime.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Number of index samples.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Surrogate budget for the active methods.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Perturbation count for lime; defaults to the budget.
    #[arg(long)]
    pub lime_samples: Option<usize>,
    #[arg(long)]
    pub kernel: Option<String>,
    /// Random starts of the acquisition search; default 8 + 2d.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse the base seed for every run.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub force_seed: Option<bool>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct RegretArgs {
    /// Builtin objective: forrester, forrester-squared, sphere, linear.
    #[arg(long)]
    pub objective: Option<String>,
    /// Dimension for objectives that take one (at most 2).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Tolerance on the regret difference, comma separated for a sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps_l: Option<Vec<f64>>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::UnknownBuiltin(_)
        | ModelError::BadDimension { .. }
        | ModelError::EmptyCommand => config_err(e),
        _ => runtime_err(e),
    }
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::TooFewRuns(_) | EvalError::InvalidConfig(_) | EvalError::GridTooLarge(_) => {
            config_err(e)
        }
        _ => runtime_err(e),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("UNRAVEL_LOG", "warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explain(a) => cmd_explain(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Regret(a) => cmd_regret(a),
    }
}

/// Fill unset flags from the `--config` file.
fn merge_config<A>(flags: A, config: Option<&Path>) -> Result<A, CliError>
where
    A: Serialize + for<'de> Deserialize<'de>,
{
    let Some(path) = config else { return Ok(flags) };
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
    let mut base: Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(config_err(format!(
            "{}: expected a JSON object",
            path.display()
        )));
    };
    let Value::Object(given) = serde_json::to_value(&flags).map_err(config_err)? else {
        unreachable!("args serialize to an object")
    };
    for (k, v) in given {
        if !v.is_null() {
            base_map.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// SHA-256 of the resolved arguments (keys sorted, output paths excluded).
fn config_hash<A: Serialize>(args: &A) -> String {
    let canonical = serde_json::to_string(&serde_json::to_value(args).expect("serializable"))
        .expect("serializable");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn metadata(seed: u64, hash: &str) -> Value {
    json!({ "seed": seed, "config_hash": hash, "version": VERSION })
}

fn metadata_line(seed: u64, hash: &str) -> String {
    format!("# seed={seed} config_hash={hash} version={VERSION}\n")
}

fn prepare_out_dir(dir: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| config_err(format!("creating {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime_err(format!("writing {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(runtime_err)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn parse_kernel(s: &Option<String>) -> Result<KernelFamily, CliError> {
    s.as_deref()
        .unwrap_or("matern52")
        .parse()
        .map_err(config_err)
}

/// Query coordinates mapped back from standardized to encoded units.
struct Destandardized<M> {
    inner: M,
    mean: Vec<f64>,
    sigma: Vec<f64>,
    buf: Vec<f64>,
}

impl<M: BlackBoxModel> BlackBoxModel for Destandardized<M> {
    fn predict(&mut self, x: &[f64]) -> Result<f64, ModelError> {
        self.buf.clear();
        self.buf.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.sigma)
                .map(|((z, m), s)| m + s * z),
        );
        self.inner.predict(&self.buf)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Standardized data plus its feature names and the maps back to raw units.
struct Data {
    rows: Vec<Vec<f64>>,
    names: Vec<String>,
    stats: FeatureStats,
    raw_stats: FeatureStats,
}

fn load_data(m: &ModelArgs) -> Result<Option<Data>, CliError> {
    let Some(path) = &m.dataset else {
        return Ok(None);
    };
    let ds = load_csv(path, m.target.as_deref()).map_err(config_err)?;
    let pre = preprocess(&ds).map_err(config_err)?;
    let rows = (0..pre.dataset.n_rows())
        .map(|i| pre.dataset.row(i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    Ok(Some(Data {
        rows,
        names: pre.dataset.feature_names.clone(),
        stats: pre.stats,
        raw_stats: pre.raw_stats,
    }))
}

/// The model to explain, in the engine's coordinates, and its natural scale.
fn open_model(
    m: &ModelArgs,
    d: usize,
    data: Option<&Data>,
) -> Result<(Box<dyn BlackBoxModel>, f64), CliError> {
    match (&m.model, &m.adapter_cmd) {
        (Some(_), Some(_)) => Err(config_err("give either --model or --adapter-cmd, not both")),
        (None, None) => Err(config_err(
            "a model is required: --model <builtin> or --adapter-cmd <command>",
        )),
        (Some(name), None) => {
            let b: Builtin =
                builtin_model(name, d, m.model_seed.unwrap_or(0)).map_err(model_err)?;
            let scale = b.natural_scale();
            Ok((Box::new(b), scale))
        }
        (None, Some(cmd)) => {
            let mut cfg =
                SubprocessModelConfig::new(cmd.split_whitespace().map(String::from).collect());
            if let Some(t) = m.adapter_timeout {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(config_err(format!(
                        "--adapter-timeout must be > 0, got {t}"
                    )));
                }
                cfg.per_query_timeout = std::time::Duration::from_secs_f64(t);
            }
            let child = subprocess_model(&cfg).map_err(model_err)?;
            if child.dim() != d {
                return Err(config_err(format!(
                    "adapter reports d = {}, expected {d}",
                    child.dim()
                )));
            }
            match data {
                Some(data) => Ok((
                    Box::new(Destandardized {
                        inner: child,
                        mean: data.raw_stats.mean_per_feature.clone(),
                        sigma: data.raw_stats.sigma_per_feature.clone(),
                        buf: Vec::with_capacity(d),
                    }),
                    1.0,
                )),
                None => Ok((Box::new(child), 1.0)),
            }
        }
    }
}

fn cmd_explain(flags: ExplainArgs) -> Result<(), CliError> {
    let out_dir = flags.out_dir.clone();
    let a = merge_config(flags.clone(), flags.config.as_deref())?;
    let hash = config_hash(&a);
    let seed = a.seed.unwrap_or(0);
    let budget = a.budget.unwrap_or(20);
    let family = parse_kernel(&a.kernel)?;
    let acq: AcquisitionKind = a
        .acq
        .as_deref()
        .unwrap_or("fur")
        .parse()
        .map_err(config_err)?;
    let acq = match (acq, a.shift.as_deref()) {
        (a, None) => a,
        (AcquisitionKind::Fur { .. }, Some("broadcast")) => AcquisitionKind::Fur {
            shift: ShiftMode::Broadcast,
        },
        (AcquisitionKind::Fur { .. }, Some("per-coordinate")) => AcquisitionKind::Fur {
            shift: ShiftMode::PerCoordinate,
        },
        (AcquisitionKind::Fur { .. }, Some(other)) => {
            return Err(config_err(format!(
                "unknown shift `{other}` (expected broadcast or per-coordinate)"
            )))
        }
        (_, Some(_)) => return Err(config_err("--shift only applies to --acq fur")),
    };
    let data = load_data(&a.model)?;

    let x0 = match (&a.x0, a.row, &data) {
        (Some(_), Some(_), _) => return Err(config_err("give either --x0 or --row, not both")),
        (Some(x), None, _) => x.clone(),
        (None, Some(r), Some(data)) => data.rows.get(r).cloned().ok_or_else(|| {
            config_err(format!("--row {r} out of range ({} rows)", data.rows.len()))
        })?,
        (None, Some(_), None) => return Err(config_err("--row needs --dataset")),
        (None, None, _) => return Err(config_err("an index sample is required: --x0 or --row")),
    };
    let d = x0.len();
    if let Some(data) = &data {
        if data.names.len() != d {
            return Err(config_err(format!(
                "--x0 has {d} values, dataset has {} features",
                data.names.len()
            )));
        }
    }
    let (mut model, scale) = open_model(&a.model, d, data.as_ref())?;
    let stats = match (&data, a.sigma) {
        (_, Some(s)) if !(s > 0.0 && s.is_finite()) => {
            return Err(config_err(format!("--sigma must be > 0, got {s}")))
        }
        (_, Some(s)) => FeatureStats::isotropic(d, s),
        (Some(data), None) => data.stats.clone(),
        (None, None) => FeatureStats::isotropic(d, scale),
    };
    let mut req =
        ExplainRequest::new(x0.clone(), budget, family, &stats, seed).with_acquisition(acq);
    req.search.starts = a.starts;
    if let Some(r) = a.refit_every {
        req.refit_every = r;
    }
    req.validate().map_err(config_err)?;
    let names = data.as_ref().map(|d| d.names.clone());

    let dir = prepare_out_dir(&out_dir)?;
    let (ds, gp) = match run_unravel(&req, model.as_mut()) {
        Ok(r) => r,
        Err(e) => {
            let mut text = metadata_line(seed, &hash).into_bytes();
            text.extend(
                format!(
                    "# partial=true error={}\n",
                    e.kind.to_string().replace('\n', " ")
                )
                .bytes(),
            );
            e.partial.write_csv(&mut text).map_err(runtime_err)?;
            write_file(&dir.join("surrogate.csv"), &text)?;
            return Err(runtime_err(e));
        }
    };
    drop(model);

    let mut text = metadata_line(seed, &hash).into_bytes();
    ds.write_csv(&mut text).map_err(runtime_err)?;
    write_file(&dir.join("surrogate.csv"), &text)?;

    let trace = sample_efficiency_trace(&ds, &x0, gp.kernel()).map_err(runtime_err)?;
    let mut text = metadata_line(seed, &hash).into_bytes();
    write_trace_csv(&trace, &mut text).map_err(runtime_err)?;
    write_file(&dir.join("trace.csv"), &text)?;

    let mut explanations = Vec::new();
    if family.is_ard() {
        let s = ard_importance(&gp, &x0, &req.sigma_d).map_err(runtime_err)?;
        explanations.push(with_names(s, &names).to_json());
    }
    match sparse_linear_importance(&ds, None) {
        Ok(s) => explanations.push(with_names(s, &names).to_json()),
        Err(e) => log::warn!("sparse-linear scores skipped: {e}"),
    }
    let mut out = metadata(seed, &hash);
    out["acquisition"] = json!(req.acquisition.label());
    out["budget"] = json!(budget);
    out["queries"] = json!(ds.len());
    out["kernel"] = serde_json::to_value(gp.kernel()).map_err(runtime_err)?;
    out["explanations"] = Value::Array(explanations);
    write_json(&dir.join("scores.json"), &out)
}

fn with_names(
    s: crate::explainers::ImportanceScores,
    names: &Option<Vec<String>>,
) -> crate::explainers::ImportanceScores {
    match names {
        Some(n) => s.with_names(n),
        None => s,
    }
}

fn cmd_stability(flags: StabilityArgs) -> Result<(), CliError> {
    let out_dir = flags.out_dir.clone();
    let a = merge_config(flags.clone(), flags.config.as_deref())?;
    let hash = config_hash(&a);
    let seed = a.seed.unwrap_or(0);
    let runs = a.runs.unwrap_or(10);
    if runs < 2 {
        return Err(config_err(format!("--runs must be >= 2, got {runs}")));
    }
    let n_samples = a.samples.unwrap_or(10);
    if n_samples == 0 {
        return Err(config_err("--samples must be >= 1"));
    }
    let budget = a.budget.unwrap_or(100);
    let family = parse_kernel(&a.kernel)?;
    let methods = a
        .methods
        .clone()
        .unwrap_or_else(|| vec!["unravel".into(), "lime".into()]);
    let configs = methods
        .iter()
        .map(|m| match m.as_str() {
            "unravel" => Ok(ExplainerConfig::Unravel {
                budget,
                kernel: family,
                starts: a.starts,
            }),
            "unravel-lime" => Ok(ExplainerConfig::UnravelLime {
                budget,
                kernel: family,
                lambda: None,
                starts: a.starts,
            }),
            "lime" => Ok(ExplainerConfig::Lime {
                n_samples: a.lime_samples.unwrap_or(budget),
                kernel_width: None,
                lambda: None,
            }),
            other => Err(config_err(format!(
                "unknown method `{other}` (expected unravel, unravel-lime or lime)"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    for c in &configs {
        c.validate().map_err(eval_err)?;
    }

    let data = load_data(&a.model)?;
    let d = match (&data, a.model.dim) {
        (Some(data), _) => data.names.len(),
        (None, Some(d)) => d,
        (None, None) => return Err(config_err("--dim or --dataset is required")),
    };
    let top_k = a.top_k.unwrap_or(5.min(d));
    let (mut model, scale) = open_model(&a.model, d, data.as_ref())?;
    let stats = match &data {
        Some(data) => data.stats.clone(),
        None => FeatureStats::isotropic(d, scale),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index_samples: Vec<Vec<f64>> = match &data {
        Some(data) => {
            if n_samples > data.rows.len() {
                return Err(config_err(format!(
                    "--samples {n_samples} exceeds {} rows",
                    data.rows.len()
                )));
            }
            sample(&mut rng, data.rows.len(), n_samples)
                .into_iter()
                .map(|i| data.rows[i].clone())
                .collect()
        }
        None => (0..n_samples)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            })
            .collect(),
    };
    let opts = StabilityOptions {
        runs,
        top_k,
        base_seed: seed,
        force_seed: a.force_seed.unwrap_or(false),
    };

    let dir = prepare_out_dir(&out_dir)?;
    let mut reports = Vec::new();
    for c in &configs {
        let r = stability_experiment(c, model.as_mut(), &index_samples, &stats, &opts)
            .map_err(eval_err)?;
        log::info!("{}: overall mean {:.4}", r.method, r.overall_mean);
        reports.push(serde_json::to_value(&r).map_err(runtime_err)?);
    }
    let mut out = metadata(seed, &hash);
    out["index_samples"] = json!(index_samples);
    out["methods"] = Value::Array(reports);
    write_json(&dir.join("stability.json"), &out)
}

fn cmd_regret(flags: RegretArgs) -> Result<(), CliError> {
    let out_dir = flags.out_dir.clone();
    let a = merge_config(flags.clone(), flags.config.as_deref())?;
    let hash = config_hash(&a);
    let seed = a.seed.unwrap_or(0);
    let eps = a.eps_l.clone().unwrap_or_else(|| vec![1.0]);
    if eps.is_empty() {
        return Err(config_err("--eps-l needs at least one value"));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(config_err(format!("--eps-l must be > 0, got {e}")));
    }
    let name = a.objective.clone().unwrap_or_else(|| "forrester".into());
    let d = match (name.as_str(), a.dim) {
        ("forrester" | "forrester-squared", _) => 1,
        (_, Some(d)) => d,
        (_, None) => match &a.x0 {
            Some(x) => x.len(),
            None => return Err(config_err("--dim is required for this objective")),
        },
    };
    if d > 2 {
        return Err(config_err(format!(
            "the regret grid oracle supports d <= 2, got d = {d}"
        )));
    }
    let mut objective = builtin_model(&name, d, a.model_seed.unwrap_or(0)).map_err(model_err)?;
    let scale = objective.natural_scale();
    let x0 = match &a.x0 {
        Some(x) if x.len() != d => {
            return Err(config_err(format!(
                "--x0 has {} values for d = {d}",
                x.len()
            )))
        }
        Some(x) => x.clone(),
        None if matches!(objective, Builtin::Forrester | Builtin::ForresterSquared) => vec![0.5],
        None => vec![0.0; d],
    };
    let domain = BoxDomain::around(&x0, &vec![scale; d]).map_err(config_err)?;
    let config = RegretConfig {
        x0,
        domain,
        budget: a.budget.unwrap_or(20),
        trials: a.trials.unwrap_or(50),
        seed,
        kernel: parse_kernel(&a.kernel)?,
    };

    let dir = prepare_out_dir(&out_dir)?;
    let sim = simulate_regret(&mut objective, &config).map_err(eval_err)?;
    let reports = eps
        .iter()
        .map(|e| {
            analyze_regret(&sim, *e)
                .map_err(eval_err)
                .and_then(|r| serde_json::to_value(r).map_err(runtime_err))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = metadata(seed, &hash);
    out["objective"] = json!(name);
    out["config"] = serde_json::to_value(&config).map_err(runtime_err)?;
    out["reports"] = Value::Array(reports);
    write_json(&dir.join("regret.json"), &out)?;

    let mut text = metadata_line(seed, &hash).into_bytes();
    write_trials_csv(&sim, &mut text).map_err(runtime_err)?;
    write_file(&dir.join("regret_rounds.csv"), &text)
}
