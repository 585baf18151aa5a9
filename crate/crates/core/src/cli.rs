//! Command-line surface: argument parsing, TOML run configuration and the
//! subcommands behind the `distboost` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::booster::{
    fit_expectile_model, fit_step1, fit_step2_with_holdout, BoostConfig, LssModel,
};
use crate::data::{format_float, load_csv, load_features_csv, Dataset};
use crate::distributions::Family;
use crate::error::Error;
use crate::explain::{
    importance_gain, importance_permutation, partial_dependence, ImportanceReport,
};
use crate::scoring::{evaluate, gaic_select, quantile_residuals, CRPS_SAMPLES};
use crate::simulation::{simulate, truth_quantiles, SimSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// A failed command: the message for standard error and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::UnknownFamily { .. }
            | Error::BadTau(_)
            | Error::BadProbability(_)
            | Error::BadFraction(_)
            | Error::Unsupported(..) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub quantiles: Vec<f64>,
    pub intervals: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub crps_samples: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            crps_samples: CRPS_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub candidates: Vec<String>,
    pub penalty: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            candidates: ["normal", "lognormal", "gamma", "weibull"]
                .map(String::from)
                .to_vec(),
            penalty: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_noise: usize,
    /// Levels of the truth-quantile table.
    pub probs: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let spec = SimSpec::default();
        SimulateConfig {
            n_train: spec.n_train,
            n_test: spec.n_test,
            n_noise: spec.n_noise,
            probs: vec![0.05, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Parameter names or 0-based indices; empty means every parameter.
    pub params: Vec<String>,
    /// `gain` and/or `permutation`.
    pub methods: Vec<String>,
    pub n_repeats: usize,
    /// Features to compute partial dependence for.
    pub pdp: Vec<String>,
    pub grid_size: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            params: Vec::new(),
            methods: vec!["gain".into()],
            n_repeats: 5,
            pdp: Vec::new(),
            grid_size: 50,
        }
    }
}

/// Everything a run can be configured with. Loaded from a TOML file, then
/// overridden by command-line flags, then echoed to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub categorical: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    /// Expectile levels when training, quantile-loss levels when evaluating.
    pub taus: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Output file (train, predict, select-family) or directory (evaluate,
    /// simulate, explain).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub seed: u64,
    pub boost: BoostConfig,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub select: SelectConfig,
    pub simulate: SimulateConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            response: None,
            family: None,
            categorical: Vec::new(),
            weight: None,
            taus: Vec::new(),
            holdout: None,
            model: None,
            out: None,
            threads: 0,
            seed: SimSpec::default().seed,
            boost: BoostConfig::default(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
            select: SelectConfig::default(),
            simulate: SimulateConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "distboost",
    version,
    about = "Distributional gradient boosting"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "DISTBOOST_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it with its training log.
    Train(TrainArgs),
    /// Predict parameters, quantiles, intervals and samples.
    Predict(PredictArgs),
    /// Score a model on labelled data.
    Evaluate(EvaluateArgs),
    /// Rank candidate families by GAIC.
    SelectFamily(SelectArgs),
    /// Write the heteroskedastic benchmark data.
    Simulate(SimulateArgs),
    /// Feature importance and partial dependence.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub family: Option<String>,
    /// Expectile levels (family `expectile` only).
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    #[arg(long)]
    pub weight: Option<String>,
    /// Labelled data whose deviance caps the number of Step-2 cycles.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Model file to write; the training log goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_iters: Option<usize>,
    #[arg(long)]
    pub shrinkage: Option<f64>,
    #[arg(long)]
    pub n_iters_per_cycle: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Central interval levels, e.g. 0.9.
    #[arg(long, value_delimiter = ',')]
    pub interval: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Prediction CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Quantile-loss levels.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long)]
    pub crps_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<String>>,
    /// GAIC penalty per parameter.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// GAIC table CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub n_noise: Option<usize>,
    /// Levels of the truth-quantile table.
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data for permutation importance and partial dependence.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Parameter names or 0-based indices (default: all).
    #[arg(long, value_delimiter = ',')]
    pub params: Option<Vec<String>>,
    /// `gain`, `permutation` or both.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub n_repeats: Option<usize>,
    /// Features for partial dependence.
    #[arg(long, value_delimiter = ',')]
    pub pdp: Option<Vec<String>>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn required<'a, T>(value: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::usage(format!("missing `{name}` (flag --{name} or config key)")))
}

impl TrainArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.response, self.response);
        set_opt(&mut c.family, self.family);
        set(&mut c.taus, self.taus);
        set(&mut c.categorical, self.categorical);
        set_opt(&mut c.weight, self.weight);
        set_opt(&mut c.holdout, self.holdout);
        set_opt(&mut c.out, self.out);
        let b = &mut c.boost;
        set(&mut b.n_iters_step1, self.n_iters);
        set(&mut b.shrinkage, self.shrinkage);
        set(&mut b.n_iters_per_cycle, self.n_iters_per_cycle);
        set(&mut b.epsilon, self.epsilon);
        set(&mut b.max_cycles, self.max_cycles);
        set(&mut b.tree.max_depth, self.max_depth);
        set(&mut b.tree.min_samples_leaf, self.min_samples_leaf);
        set(&mut b.tree.lambda, self.lambda);
        set(&mut b.tree.gamma, self.gamma);
        set(&mut b.seed, self.seed);
    }
}

impl PredictArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.model, self.model);
        set_opt(&mut c.data, self.data);
        set(&mut c.predict.quantiles, self.quantiles);
        set(&mut c.predict.intervals, self.interval);
        set(&mut c.predict.samples, self.samples);
        set(&mut c.seed, self.seed);
        set_opt(&mut c.out, self.out);
    }
}

impl EvaluateArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.model, self.model);
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.response, self.response);
        set(&mut c.taus, self.taus);
        set(&mut c.evaluate.crps_samples, self.crps_samples);
        set(&mut c.seed, self.seed);
        set_opt(&mut c.out, self.out);
    }
}

impl SelectArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.response, self.response);
        set(&mut c.select.candidates, self.candidates);
        set(&mut c.select.penalty, self.penalty);
        set_opt(&mut c.out, self.out);
    }
}

impl SimulateArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.seed, self.seed);
        set(&mut c.simulate.n_train, self.n_train);
        set(&mut c.simulate.n_test, self.n_test);
        set(&mut c.simulate.n_noise, self.n_noise);
        set(&mut c.simulate.probs, self.probs);
        set_opt(&mut c.out, self.out);
    }
}

impl ExplainArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.model, self.model);
        set_opt(&mut c.data, self.data);
        set_opt(&mut c.response, self.response);
        set(&mut c.explain.params, self.params);
        set(&mut c.explain.methods, self.methods);
        set(&mut c.explain.n_repeats, self.n_repeats);
        set(&mut c.explain.pdp, self.pdp);
        set(&mut c.explain.grid_size, self.grid_size);
        set(&mut c.seed, self.seed);
        set_opt(&mut c.out, self.out);
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are printed to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Resolves the configuration and runs one command.
pub fn execute(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.threads, cli.threads);
    let name = match cli.command {
        Command::Train(a) => {
            a.apply(&mut cfg);
            "train"
        }
        Command::Predict(a) => {
            a.apply(&mut cfg);
            "predict"
        }
        Command::Evaluate(a) => {
            a.apply(&mut cfg);
            "evaluate"
        }
        Command::SelectFamily(a) => {
            a.apply(&mut cfg);
            "select-family"
        }
        Command::Simulate(a) => {
            a.apply(&mut cfg);
            "simulate"
        }
        Command::Explain(a) => {
            a.apply(&mut cfg);
            "explain"
        }
    };
    // the global pool can only be built once per process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global();
    match name {
        "train" => cmd_train(&cfg),
        "predict" => cmd_predict(&cfg),
        "evaluate" => cmd_evaluate(&cfg),
        "select-family" => cmd_select_family(&cfg),
        "simulate" => cmd_simulate(&cfg),
        _ => cmd_explain(&cfg),
    }
}

fn out_dir_of_file(out: &Path) -> CliResult<PathBuf> {
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

fn make_dir(dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(dir.to_path_buf())
}

fn echo_config(cfg: &RunConfig, dir: &Path, command: &str) -> CliResult<()> {
    fs::write(dir.join(format!("{command}_config.toml")), cfg.to_toml()?).map_err(Error::from)?;
    Ok(())
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(header).map_err(Error::from)?;
    for r in rows {
        w.write_record(&r).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn optional_float(v: Option<&f64>) -> String {
    v.map_or_else(String::new, |v| format_float(*v))
}

fn model_categoricals(model: &LssModel) -> Vec<String> {
    model
        .features
        .iter()
        .filter(|m| m.is_categorical())
        .map(|m| m.name.clone())
        .collect()
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let data_path = required(&cfg.data, "data")?;
    let response = required(&cfg.response, "response")?;
    let family = Family::from_name(required(&cfg.family, "family")?)?;
    let out = required(&cfg.out, "out")?;
    cfg.boost.validate()?;
    let is_expectile = matches!(family, Family::Expectile { .. });
    if is_expectile && cfg.taus.is_empty() {
        return Err(CliError::usage("family `expectile` needs --taus"));
    }
    if !is_expectile && !cfg.taus.is_empty() {
        return Err(CliError::usage("--taus only applies to family `expectile`"));
    }
    if is_expectile && cfg.holdout.is_some() {
        return Err(CliError::usage(
            "--holdout is not supported for expectile models",
        ));
    }
    let dir = out_dir_of_file(out)?;
    echo_config(cfg, &dir, "train")?;

    let data = load_csv(data_path, response, &cfg.categorical, cfg.weight.as_deref())?;
    let model = if is_expectile {
        fit_expectile_model(&data, &cfg.taus, &cfg.boost)?
    } else {
        let holdout = match &cfg.holdout {
            Some(p) => Some(load_csv(
                p,
                response,
                &cfg.categorical,
                cfg.weight.as_deref(),
            )?),
            None => None,
        };
        let model = fit_step1(&data, family, &cfg.boost)?;
        fit_step2_with_holdout(model, &data, holdout.as_ref(), &cfg.boost)?
    };
    model.save(out)?;
    write_training_log(&model, &dir)?;
    Ok(())
}

/// `training_log.csv`: row 0 is Step 1, then one row per Step-2 cycle.
/// `step1_log.csv`: per-parameter NLL trace of Step 1.
fn write_training_log(model: &LssModel, dir: &Path) -> CliResult<()> {
    let log = &model.training_log;
    let diffs = log.relative_diffs();
    let n = log.deviance.len().max(log.holdout_deviance.len());
    let header = [
        "cycle",
        "deviance",
        "relative_diff",
        "holdout_deviance",
        "stop",
    ]
    .map(String::from);
    let rows = (0..n).map(|q| {
        vec![
            q.to_string(),
            optional_float(log.deviance.get(q)),
            optional_float(q.checked_sub(1).and_then(|p| diffs.get(p))),
            optional_float(log.holdout_deviance.get(q)),
            if q + 1 == n {
                serde_json::to_value(log.stop)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            } else {
                String::new()
            },
        ]
    });
    write_rows(&dir.join("training_log.csv"), &header, rows)?;

    let names = model.family.param_names();
    let header = ["param", "iteration", "nll"].map(String::from);
    let rows = log.step1_nll.iter().enumerate().flat_map(|(k, trace)| {
        trace
            .iter()
            .enumerate()
            .map(move |(it, v)| vec![names[k].to_string(), it.to_string(), format_float(*v)])
    });
    write_rows(&dir.join("step1_log.csv"), &header, rows)
}

fn prob_label(p: f64) -> String {
    p.to_string()
}

pub fn cmd_predict(cfg: &RunConfig) -> CliResult<()> {
    let model = LssModel::load(required(&cfg.model, "model")?)?;
    let data_path = required(&cfg.data, "data")?;
    let out = required(&cfg.out, "out")?;
    let p = &cfg.predict;
    let dir = out_dir_of_file(out)?;
    echo_config(cfg, &dir, "predict")?;

    let data = load_features_csv(data_path, None, &model_categoricals(&model))?;
    let mut header: Vec<String> = (1..=model.ensembles.len())
        .map(|k| format!("theta_{k}"))
        .collect();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if !model.taus.is_empty() {
        if !p.quantiles.is_empty() || !p.intervals.is_empty() || p.samples > 0 {
            return Err(
                Error::Unsupported("quantiles, intervals and samples", "expectile".into()).into(),
            );
        }
        let e = model.predict_expectiles(&data)?;
        for k in 0..model.ensembles.len() {
            columns.push(e.iter().map(|r| r[k]).collect());
        }
    } else {
        let pd = model.predictive(&data)?;
        for k in 0..model.family.n_params() {
            columns.push(pd.params.iter().map(|pv| pv.theta[k]).collect());
        }
        if !p.quantiles.is_empty() {
            let q = pd.quantiles(&p.quantiles)?;
            for (j, &prob) in p.quantiles.iter().enumerate() {
                header.push(format!("q_{}", prob_label(prob)));
                columns.push(q.iter().map(|r| r[j]).collect());
            }
        }
        for &level in &p.intervals {
            let (lo, hi) = pd.interval(level)?;
            header.push(format!("lo_{}", prob_label(level)));
            header.push(format!("hi_{}", prob_label(level)));
            columns.push(lo);
            columns.push(hi);
        }
        if p.samples > 0 {
            let s = pd.sample(p.samples, cfg.seed)?;
            for j in 0..p.samples {
                header.push(format!("sample_{}", j + 1));
                columns.push(s.iter().map(|r| r[j]).collect());
            }
        }
    }
    let rows = (0..data.n_rows()).map(|i| columns.iter().map(|c| format_float(c[i])).collect());
    write_rows(out, &header, rows)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let model = LssModel::load(required(&cfg.model, "model")?)?;
    let data_path = required(&cfg.data, "data")?;
    let response = required(&cfg.response, "response")?;
    let dir = make_dir(required(&cfg.out, "out")?)?;
    echo_config(cfg, &dir, "evaluate")?;
    if !model.taus.is_empty() {
        return Err(Error::Unsupported("evaluation", "expectile".into()).into());
    }
    let data = load_csv(data_path, response, &model_categoricals(&model), None)?;
    let report = evaluate(
        &model,
        &data,
        &cfg.taus,
        cfg.evaluate.crps_samples,
        cfg.seed,
    )?;
    write_json(&dir.join("score_report.json"), &report)?;

    let pvs = model.predict_params(&data)?;
    let r = quantile_residuals(model.family, &pvs, data.response(), cfg.seed)?;
    let header = ["row", "y", "residual"].map(String::from);
    let rows = data
        .response()
        .iter()
        .zip(&r)
        .enumerate()
        .map(|(i, (y, r))| vec![i.to_string(), format_float(*y), format_float(*r)]);
    write_rows(&dir.join("quantile_residuals.csv"), &header, rows)
}

pub fn cmd_select_family(cfg: &RunConfig) -> CliResult<()> {
    let data_path = required(&cfg.data, "data")?;
    let response = required(&cfg.response, "response")?;
    let out = required(&cfg.out, "out")?;
    let candidates = cfg
        .select
        .candidates
        .iter()
        .map(|name| Family::from_name(name))
        .collect::<Result<Vec<_>, _>>()?;
    if candidates.is_empty() {
        return Err(CliError::usage("no candidate families given"));
    }
    let dir = out_dir_of_file(out)?;
    echo_config(cfg, &dir, "select-family")?;

    let data = load_csv(data_path, response, &cfg.categorical, None)?;
    let ranking = gaic_select(data.response(), &candidates, cfg.select.penalty)?;
    for (name, reason) in &ranking.skipped {
        eprintln!("warning: skipped family {name}: {reason}");
    }
    if ranking.ranked.is_empty() {
        return Err(Error::AllCandidatesFailed.into());
    }
    let header = ["rank", "family", "n_params", "deviance", "gaic", "theta"].map(String::from);
    let rows = ranking.ranked.iter().enumerate().map(|(i, e)| {
        vec![
            (i + 1).to_string(),
            e.family.clone(),
            e.n_params.to_string(),
            format_float(e.deviance),
            format_float(e.gaic),
            e.theta
                .iter()
                .map(|t| format_float(*t))
                .collect::<Vec<_>>()
                .join(" "),
        ]
    });
    write_rows(out, &header, rows)
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let dir = make_dir(required(&cfg.out, "out")?)?;
    let s = &cfg.simulate;
    for &p in &s.probs {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::BadProbability(p).into());
        }
    }
    echo_config(cfg, &dir, "simulate")?;
    let spec = SimSpec {
        n_train: s.n_train,
        n_test: s.n_test,
        n_noise: s.n_noise,
        seed: cfg.seed,
    };
    let (train, test) = simulate(&spec)?;
    train.write_csv(dir.join("train.csv"), "y")?;
    test.write_csv(dir.join("test.csv"), "y")?;
    let truth = truth_quantiles(&test, &s.probs)?;
    let x = test.column(0);
    let mut header = vec!["x".to_string()];
    header.extend(s.probs.iter().map(|p| format!("q_{}", prob_label(*p))));
    let rows = truth.iter().zip(x).map(|(q, x)| {
        std::iter::once(format_float(*x))
            .chain(q.iter().map(|v| format_float(*v)))
            .collect()
    });
    write_rows(&dir.join("truth.csv"), &header, rows)
}

fn resolve_params(model: &LssModel, requested: &[String]) -> CliResult<Vec<usize>> {
    let names: Vec<String> = if model.taus.is_empty() {
        model
            .family
            .param_names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        model
            .taus
            .iter()
            .map(|t| format!("expectile_{t}"))
            .collect()
    };
    if requested.is_empty() {
        return Ok((0..names.len()).collect());
    }
    requested
        .iter()
        .map(|r| {
            names
                .iter()
                .position(|n| n == r)
                .or_else(|| r.parse::<usize>().ok().filter(|&k| k < names.len()))
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "unknown parameter `{r}`; valid: {}",
                        names.join(", ")
                    ))
                })
        })
        .collect()
}

fn write_importance(dir: &Path, report: &ImportanceReport) -> CliResult<()> {
    let method = serde_json::to_value(report.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let stem = format!("importance_{}_{method}", report.param_name);
    let header = ["feature", "score"].map(String::from);
    let rows = report
        .scores
        .iter()
        .map(|s| vec![s.feature.clone(), format_float(s.score)]);
    write_rows(&dir.join(format!("{stem}.csv")), &header, rows)?;
    write_json(&dir.join(format!("{stem}.json")), report)
}

pub fn cmd_explain(cfg: &RunConfig) -> CliResult<()> {
    let model = LssModel::load(required(&cfg.model, "model")?)?;
    let e = &cfg.explain;
    for m in &e.methods {
        if m != "gain" && m != "permutation" {
            return Err(CliError::usage(format!(
                "unknown importance method `{m}`; valid: gain, permutation"
            )));
        }
    }
    let params = resolve_params(&model, &e.params)?;
    let needs_data = e.methods.iter().any(|m| m == "permutation") || !e.pdp.is_empty();
    let dir = make_dir(required(&cfg.out, "out")?)?;
    echo_config(cfg, &dir, "explain")?;

    let data: Option<Dataset> = if needs_data {
        let path = required(&cfg.data, "data")?;
        let cats = model_categoricals(&model);
        Some(match &cfg.response {
            Some(r) => load_csv(path, r, &cats, None)?,
            None => load_features_csv(path, None, &cats)?,
        })
    } else {
        None
    };
    for &k in &params {
        for m in &e.methods {
            let report = if m == "gain" {
                importance_gain(&model, k)?
            } else {
                let d = data.as_ref().expect("loaded above");
                if !d.has_response() {
                    return Err(CliError::usage("permutation importance needs --response"));
                }
                importance_permutation(&model, d, k, e.n_repeats, cfg.seed)?
            };
            write_importance(&dir, &report)?;
        }
        for feature in &e.pdp {
            let d = data.as_ref().expect("loaded above");
            let pd = partial_dependence(&model, d, k, feature, e.grid_size, true)?;
            let stem = format!("pdp_{}_{feature}", pd.param_name);
            let mut header = vec![feature.clone(), format!("mean_{}", pd.param_name)];
            if pd.mean_variance.is_some() {
                header.push("mean_variance".into());
            }
            let rows = (0..pd.grid.len()).map(|i| {
                let mut r = vec![format_float(pd.grid[i]), format_float(pd.mean_param[i])];
                if let Some(v) = &pd.mean_variance {
                    r.push(format_float(v[i]));
                }
                r
            });
            write_rows(&dir.join(format!("{stem}.csv")), &header, rows)?;
            write_json(&dir.join(format!("{stem}.json")), &pd)?;
        }
    }
    Ok(())
}
