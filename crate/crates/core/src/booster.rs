//! Distributional boosting: one tree ensemble per distribution parameter.
//!
//! Training runs in two steps. Step 1 boosts each parameter on its own with
//! the other parameters frozen at their intercept-only maximum likelihood
//! values. Step 2 then cycles over the parameters, appending a small batch of
//! trees to each one in turn with derivatives taken at the current full
//! model, until the relative change of the training deviance drops below
//! `epsilon` or `max_cycles` cycles have run.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{encode_categoricals, Dataset, EncoderState, FeatureMeta};
use crate::distributions::{
    anchored_mean, unconditional_mle, Family, Link, ParamVector, HESSIAN_FLOOR,
};
use crate::error::{Error, Result};
use crate::tree::{fit_tree_presorted, SortedColumns, TreeConfig, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

/// Largest number of distribution parameters of any family.
const MAX_PARAMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    /// Trees per parameter in Step 1.
    pub n_iters_step1: usize,
    pub shrinkage: f64,
    /// Trees appended per parameter in each Step-2 cycle.
    pub n_iters_per_cycle: usize,
    /// Relative deviance tolerance of the Step-2 stopping rule.
    pub epsilon: f64,
    pub max_cycles: usize,
    pub tree: TreeConfig,
    pub seed: u64,
    /// Prior weight of the global mean in the categorical target statistics.
    pub cat_smoothing: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_iters_step1: 100,
            shrinkage: 0.1,
            n_iters_per_cycle: 25,
            epsilon: 1e-5,
            max_cycles: 10,
            tree: TreeConfig::default(),
            seed: 0,
            cat_smoothing: 1.0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters_step1 < 1 {
            return Err(Error::Config("n_iters_step1 must be at least 1".into()));
        }
        if self.n_iters_per_cycle < 1 {
            return Err(Error::Config("n_iters_per_cycle must be at least 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!(
                "shrinkage must lie in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.cat_smoothing >= 0.0 && self.cat_smoothing.is_finite()) {
            return Err(Error::Config("cat_smoothing must be non-negative".into()));
        }
        self.tree.validate()
    }
}

/// Additive model for one parameter on its raw predictor scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_eta: f64,
    pub shrinkage: f64,
    pub trees: Vec<TreeNode>,
}

impl Ensemble {
    pub fn new(base_eta: f64, shrinkage: f64) -> Self {
        Ensemble {
            base_eta,
            shrinkage,
            trees: Vec::new(),
        }
    }

    /// Trees are added one at a time in training order, so this reproduces
    /// the values seen during fitting bit for bit.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_eta;
        for t in &self.trees {
            acc += self.shrinkage * t.eval(|j| row[j]);
        }
        acc
    }

    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = self.base_eta;
                for t in &self.trees {
                    acc += self.shrinkage * t.eval_at(columns, i);
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Step 2 has not run.
    Step1Only,
    Converged,
    CycleCap,
    /// The last cycle raised the training deviance; its trees were kept.
    DevianceIncreased,
    /// The last cycle raised the holdout deviance; its trees were dropped.
    HoldoutIncreased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Training NLL of each parameter's Step-1 run, before the first tree and
    /// after every tree, with the other parameters frozen.
    pub step1_nll: Vec<Vec<f64>>,
    /// Training deviance after Step 1 followed by one entry per Step-2 cycle.
    pub deviance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holdout_deviance: Vec<f64>,
    pub stop: StopReason,
    /// Relative deviance change of the last cycle.
    pub final_diff: Option<f64>,
}

impl TrainingLog {
    pub fn cycles(&self) -> usize {
        self.deviance.len().saturating_sub(1)
    }

    /// Relative change of each cycle against the previous deviance.
    pub fn relative_diffs(&self) -> Vec<f64> {
        self.deviance
            .windows(2)
            .map(|w| relative_diff(w[0], w[1]))
            .collect()
    }
}

fn relative_diff(prev: f64, next: f64) -> f64 {
    // deviance can be negative for continuous densities
    (next - prev).abs() / prev.abs()
}

/// A fitted distributional model.
#[derive(Debug, Clone, PartialEq)]
pub struct LssModel {
    pub family: Family,
    /// Expectile levels, one per ensemble, for expectile models.
    pub taus: Vec<f64>,
    pub features: Vec<FeatureMeta>,
    pub encoder: EncoderState,
    pub ensembles: Vec<Ensemble>,
    pub training_log: TrainingLog,
}

/// Encoded training data with everything the booster needs per iteration.
struct TrainSet {
    columns: Vec<Vec<f64>>,
    sorted: SortedColumns,
    y: Vec<f64>,
    w: Option<Vec<f64>>,
}

impl TrainSet {
    fn new(columns: Vec<Vec<f64>>, y: Vec<f64>, w: Option<Vec<f64>>) -> Self {
        let sorted = SortedColumns::new(&columns);
        TrainSet {
            columns,
            sorted,
            y,
            w,
        }
    }

    fn weight(&self, i: usize) -> f64 {
        self.w.as_ref().map_or(1.0, |w| w[i])
    }
}

fn check_training_data(data: &Dataset, family: Family, cfg: &BoostConfig) -> Result<()> {
    cfg.validate()?;
    if !data.has_response() {
        return Err(Error::InvalidData("training data has no response".into()));
    }
    let needed = (2 * cfg.tree.min_samples_leaf).max(2);
    if data.n_rows() < needed {
        return Err(Error::TooFewRows {
            got: data.n_rows(),
            needed,
        });
    }
    for &y in data.response() {
        family.check_support(y)?;
    }
    Ok(())
}

/// Row-wise natural parameters from per-parameter raw predictors.
fn theta_row(links: &[Link], etas: &[Vec<f64>], i: usize) -> [f64; MAX_PARAMS] {
    let mut th = [0.0; MAX_PARAMS];
    for (k, l) in links.iter().enumerate() {
        th[k] = l.inverse(etas[k][i]);
    }
    th
}

/// Weighted training NLL, summed in row order.
fn total_nll(family: Family, ts: &TrainSet, etas: &[Vec<f64>]) -> f64 {
    let links = family.links();
    let k = links.len();
    let per_row: Vec<f64> = (0..ts.y.len())
        .into_par_iter()
        .map(|i| ts.weight(i) * family.nll_theta(ts.y[i], &theta_row(links, etas, i)[..k]))
        .collect();
    per_row.iter().sum()
}

/// Appends `n_trees` Newton trees to `ensemble` for parameter `k`, updating
/// `etas[k]` in place. Derivatives are taken at the current `etas`.
#[allow(clippy::too_many_arguments)]
fn boost_param(
    family: Family,
    ts: &TrainSet,
    etas: &mut [Vec<f64>],
    k: usize,
    n_trees: usize,
    cfg: &BoostConfig,
    ensemble: &mut Ensemble,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<()> {
    let links = family.links();
    let n_params = links.len();
    let floor = links[k].eta_floor();
    for _ in 0..n_trees {
        let (g, h): (Vec<f64>, Vec<f64>) = (0..ts.y.len())
            .into_par_iter()
            .map(|i| {
                let th = theta_row(links, etas, i);
                let (mut g, h) = family.grad_hess_theta(ts.y[i], &th[..n_params], k);
                // a parameter pinned at its floor cannot move further down
                if matches!(floor, Some(f) if etas[k][i] <= f && g > 0.0) {
                    g = 0.0;
                }
                let w = ts.weight(i);
                (w * g, (w * h).max(HESSIAN_FLOOR))
            })
            .unzip();
        let tree = fit_tree_presorted(&ts.columns, &ts.sorted, &g, &h, &cfg.tree)?;
        for (i, eta) in etas[k].iter_mut().enumerate() {
            *eta += ensemble.shrinkage * tree.eval_at(&ts.columns, i);
        }
        ensemble.trees.push(tree);
        if let Some(t) = trace.as_deref_mut() {
            t.push(total_nll(family, ts, etas));
        }
    }
    Ok(())
}

fn finite_deviance(d: f64) -> Result<f64> {
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::InvalidData("training deviance is not finite".into()))
    }
}

/// Step 1: each parameter is boosted separately with its co-parameters frozen
/// at the unconditional MLE.
pub fn fit_step1(data: &Dataset, family: Family, cfg: &BoostConfig) -> Result<LssModel> {
    check_training_data(data, family, cfg)?;
    let (encoded, encoder) = encode_categoricals(data, cfg.cat_smoothing)?;
    let ts = TrainSet::new(
        encoded.columns().to_vec(),
        encoded.response().to_vec(),
        encoded.weights().map(<[f64]>::to_vec),
    );
    let mle = unconditional_mle(family, &ts.y, ts.w.as_deref())?;
    let n = ts.y.len();
    let n_params = family.n_params();
    let mut ensembles = Vec::with_capacity(n_params);
    let mut step1_nll = Vec::with_capacity(n_params);
    let mut fitted = Vec::with_capacity(n_params);
    for k in 0..n_params {
        let mut etas: Vec<Vec<f64>> = mle.eta.iter().map(|&e| vec![e; n]).collect();
        let mut ensemble = Ensemble::new(mle.eta[k], cfg.shrinkage);
        let mut trace = vec![total_nll(family, &ts, &etas)];
        boost_param(
            family,
            &ts,
            &mut etas,
            k,
            cfg.n_iters_step1,
            cfg,
            &mut ensemble,
            Some(&mut trace),
        )?;
        fitted.push(std::mem::take(&mut etas[k]));
        ensembles.push(ensemble);
        step1_nll.push(trace);
    }
    let deviance = finite_deviance(2.0 * total_nll(family, &ts, &fitted))?;
    Ok(LssModel {
        family,
        taus: Vec::new(),
        features: encoded.meta().to_vec(),
        encoder,
        ensembles,
        training_log: TrainingLog {
            step1_nll,
            deviance: vec![deviance],
            holdout_deviance: Vec::new(),
            stop: StopReason::Step1Only,
            final_diff: None,
        },
    })
}

/// Step 2 on the data Step 1 was fitted to.
pub fn fit_step2(model: LssModel, data: &Dataset, cfg: &BoostConfig) -> Result<LssModel> {
    fit_step2_with_holdout(model, data, None, cfg)
}

/// Step 2 with an optional holdout set. When given, a cycle that raises the
/// holdout deviance is undone and the run stops.
pub fn fit_step2_with_holdout(
    mut model: LssModel,
    data: &Dataset,
    holdout: Option<&Dataset>,
    cfg: &BoostConfig,
) -> Result<LssModel> {
    let family = model.family;
    check_training_data(data, family, cfg)?;
    if model.is_multi_expectile() {
        return Err(Error::Unsupported("Step 2", "multi-level expectile".into()));
    }
    if cfg.max_cycles == 0 {
        return Ok(model);
    }
    let columns = model.prepare(data)?;
    let ts = TrainSet::new(
        columns,
        data.response().to_vec(),
        data.weights().map(<[f64]>::to_vec),
    );
    let mut etas = model.predict_eta_columns(&ts.columns)?;
    let hold = match holdout {
        Some(h) => {
            let cols = model.prepare(h)?;
            Some(TrainSet::new(
                cols,
                h.response().to_vec(),
                h.weights().map(<[f64]>::to_vec),
            ))
        }
        None => None,
    };
    let mut prev = *model
        .training_log
        .deviance
        .last()
        .expect("Step 1 records a deviance");
    let mut prev_hold = match &hold {
        Some(hs) => Some(2.0 * total_nll(family, hs, &model.predict_eta_columns(&hs.columns)?)),
        None => None,
    };
    if let Some(d) = prev_hold {
        model.training_log.holdout_deviance.push(d);
    }
    for q in 1..=cfg.max_cycles {
        let lengths: Vec<usize> = model.ensembles.iter().map(|e| e.trees.len()).collect();
        for k in 0..family.n_params() {
            boost_param(
                family,
                &ts,
                &mut etas,
                k,
                cfg.n_iters_per_cycle,
                cfg,
                &mut model.ensembles[k],
                None,
            )?;
        }
        if let (Some(hs), Some(before)) = (&hold, prev_hold) {
            let d = 2.0 * total_nll(family, hs, &model.predict_eta_columns(&hs.columns)?);
            model.training_log.holdout_deviance.push(d);
            if d > before {
                for (e, &len) in model.ensembles.iter_mut().zip(&lengths) {
                    e.trees.truncate(len);
                }
                model.training_log.stop = StopReason::HoldoutIncreased;
                return Ok(model);
            }
            prev_hold = Some(d);
        }
        let dev = finite_deviance(2.0 * total_nll(family, &ts, &etas))?;
        let diff = relative_diff(prev, dev);
        let log = &mut model.training_log;
        log.deviance.push(dev);
        log.final_diff = Some(diff);
        if dev > prev {
            log.stop = StopReason::DevianceIncreased;
            break;
        }
        if diff < cfg.epsilon {
            log.stop = StopReason::Converged;
            break;
        }
        if q == cfg.max_cycles {
            log.stop = StopReason::CycleCap;
        }
        prev = dev;
    }
    Ok(model)
}

/// Step 1 followed by Step 2.
pub fn fit(data: &Dataset, family: Family, cfg: &BoostConfig) -> Result<LssModel> {
    let model = fit_step1(data, family, cfg)?;
    fit_step2(model, data, cfg)
}

/// One independent ensemble per expectile level, each started at the sample
/// mean. `taus` must be strictly increasing.
pub fn fit_expectiles(data: &Dataset, taus: &[f64], cfg: &BoostConfig) -> Result<Vec<Ensemble>> {
    if taus.is_empty() {
        return Err(Error::Config(
            "at least one expectile level is required".into(),
        ));
    }
    for &tau in taus {
        Family::expectile(tau)?;
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "expectile levels must be strictly increasing".into(),
        ));
    }
    check_training_data(data, Family::Normal, cfg)?;
    let (encoded, _) = encode_categoricals(data, cfg.cat_smoothing)?;
    let ts = TrainSet::new(
        encoded.columns().to_vec(),
        encoded.response().to_vec(),
        encoded.weights().map(<[f64]>::to_vec),
    );
    let base = anchored_mean(&ts.y, ts.w.as_deref());
    taus.iter()
        .map(|&tau| {
            let mut ensemble = Ensemble::new(base, cfg.shrinkage);
            let mut etas = vec![vec![base; ts.y.len()]];
            boost_param(
                Family::Expectile { tau },
                &ts,
                &mut etas,
                0,
                cfg.n_iters_step1,
                cfg,
                &mut ensemble,
                None,
            )?;
            Ok(ensemble)
        })
        .collect()
}

/// Expectile model over several levels, stored in the same format as any
/// other model.
pub fn fit_expectile_model(data: &Dataset, taus: &[f64], cfg: &BoostConfig) -> Result<LssModel> {
    let ensembles = fit_expectiles(data, taus, cfg)?;
    let (encoded, encoder) = encode_categoricals(data, cfg.cat_smoothing)?;
    Ok(LssModel {
        family: Family::Expectile { tau: taus[0] },
        taus: taus.to_vec(),
        features: encoded.meta().to_vec(),
        encoder,
        ensembles,
        training_log: TrainingLog {
            step1_nll: Vec::new(),
            deviance: Vec::new(),
            holdout_deviance: Vec::new(),
            stop: StopReason::Step1Only,
            final_diff: None,
        },
    })
}

impl LssModel {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn is_multi_expectile(&self) -> bool {
        self.taus.len() > 1
    }

    /// Aligns `data` to the training schema by column name and applies the
    /// categorical encoder. Returns the encoded columns.
    pub fn prepare(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let aligned = data.align_to(&self.features)?;
        Ok(self.encoder.transform(&aligned)?.columns().to_vec())
    }

    /// Raw predictors, one vector per ensemble, for encoded columns.
    pub fn predict_eta_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if columns.len() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: columns.len(),
            });
        }
        Ok(self
            .ensembles
            .iter()
            .map(|e| e.predict_columns(columns))
            .collect())
    }

    /// Parameters for one encoded row.
    pub fn predict_row(&self, row: &[f64]) -> Result<ParamVector> {
        self.check_params()?;
        if row.len() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        let eta: Vec<f64> = self.ensembles.iter().map(|e| e.predict_row(row)).collect();
        self.family.params_from_eta(&eta)
    }

    fn check_params(&self) -> Result<()> {
        if self.is_multi_expectile() {
            return Err(Error::Unsupported(
                "distribution parameters",
                "multi-level expectile".into(),
            ));
        }
        Ok(())
    }

    pub fn predict_params_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<ParamVector>> {
        self.check_params()?;
        let etas = self.predict_eta_columns(columns)?;
        let n = columns.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                let eta: Vec<f64> = etas.iter().map(|e| e[i]).collect();
                self.family.params_from_eta(&eta)
            })
            .collect()
    }

    pub fn predict_params(&self, data: &Dataset) -> Result<Vec<ParamVector>> {
        self.predict_params_columns(&self.prepare(data)?)
    }

    pub fn predictive(&self, data: &Dataset) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution {
            family: self.family,
            params: self.predict_params(data)?,
        })
    }

    pub fn predict_quantiles(&self, data: &Dataset, probs: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.predictive(data)?.quantiles(probs)
    }

    pub fn predict_interval(&self, data: &Dataset, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.predictive(data)?.interval(level)
    }

    pub fn sample_predictive(
        &self,
        data: &Dataset,
        n_samples: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        self.predictive(data)?.sample(n_samples, seed)
    }

    /// Expectile predictions, one row per observation and one column per level.
    pub fn predict_expectiles(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        if self.taus.is_empty() {
            return Err(Error::Unsupported(
                "expectile prediction",
                self.family.name().into(),
            ));
        }
        let etas = self.predict_eta_columns(&self.prepare(data)?)?;
        let n = etas.first().map_or(0, Vec::len);
        Ok((0..n)
            .map(|i| etas.iter().map(|e| e[i]).collect())
            .collect())
    }

    /// Training deviance of this model on `data`.
    pub fn deviance(&self, data: &Dataset) -> Result<f64> {
        let pvs = self.predict_params(data)?;
        let mut total = 0.0;
        for (i, (pv, &y)) in pvs.iter().zip(data.response()).enumerate() {
            total += self.family.nll(y, pv, data.weight(i))?;
        }
        Ok(2.0 * total)
    }
}

/// Fitted per-row parameters of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub family: Family,
    pub params: Vec<ParamVector>,
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::BadProbability(p))
    }
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn cdf(&self, i: usize, y: f64) -> Result<f64> {
        self.family.cdf(y, &self.params[i])
    }

    pub fn density(&self, i: usize, y: f64) -> Result<f64> {
        self.family.density(y, &self.params[i])
    }

    pub fn quantile(&self, i: usize, p: f64) -> Result<f64> {
        self.family.quantile(p, &self.params[i])
    }

    pub fn mean(&self) -> Vec<f64> {
        self.params.iter().map(|p| self.family.mean(p)).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| self.family.variance(p))
            .collect()
    }

    /// Quantile matrix with one row per observation, columns in the order of
    /// `probs`. Each row is non-decreasing along increasing probabilities.
    pub fn quantiles(&self, probs: &[f64]) -> Result<Vec<Vec<f64>>> {
        for &p in probs {
            check_prob(p)?;
        }
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
        self.params
            .par_iter()
            .map(|pv| {
                let mut row = vec![0.0; probs.len()];
                let mut running = f64::NEG_INFINITY;
                for &j in &order {
                    // guards against bisection noise between close levels
                    running = running.max(self.family.quantile(probs[j], pv)?);
                    row[j] = running;
                }
                Ok(row)
            })
            .collect()
    }

    /// Central interval of the given level, from the quantiles at
    /// `(1 - level) / 2` and `(1 + level) / 2`.
    pub fn interval(&self, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        check_prob(level)?;
        let q = self.quantiles(&interval_probs(level))?;
        Ok(q.into_iter().map(|r| (r[0], r[1])).unzip())
    }

    /// `n_samples` draws per observation. Row `i` uses stream `i` of a
    /// ChaCha8 generator seeded with `seed`.
    pub fn sample(&self, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.params
            .par_iter()
            .enumerate()
            .map(|(i, pv)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                (0..n_samples)
                    .map(|_| self.family.sample_with(pv, &mut rng))
                    .collect()
            })
            .collect()
    }
}

/// Tail probabilities of a central interval, rounded to 12 decimals so that
/// level 0.9 gives exactly the probabilities written as 0.05 and 0.95.
pub fn interval_probs(level: f64) -> [f64; 2] {
    let round = |p: f64| (p * 1e12).round() / 1e12;
    [round((1.0 - level) / 2.0), round((1.0 + level) / 2.0)]
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    name: String,
    link: Link,
    #[serde(flatten)]
    ensemble: Ensemble,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    family: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    taus: Vec<f64>,
    features: Vec<FeatureMeta>,
    encoder: EncoderState,
    params: Vec<ParamFile>,
    training_log: TrainingLog,
}

impl LssModel {
    pub fn to_json(&self) -> Result<String> {
        let names: Vec<String> = if self.taus.is_empty() {
            self.family
                .param_names()
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            self.taus.iter().map(|t| format!("expectile_{t}")).collect()
        };
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            family: self.family.name().to_string(),
            taus: self.taus.clone(),
            features: self.features.clone(),
            encoder: self.encoder.clone(),
            params: self
                .ensembles
                .iter()
                .zip(names)
                .enumerate()
                .map(|(k, (e, name))| ParamFile {
                    name,
                    link: if self.taus.is_empty() {
                        self.family.links()[k]
                    } else {
                        Link::Identity
                    },
                    ensemble: e.clone(),
                })
                .collect(),
            training_log: self.training_log.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<LssModel> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let family = match Family::from_name(&file.family) {
            Ok(Family::Expectile { .. }) => {
                let tau = *file
                    .taus
                    .first()
                    .ok_or_else(|| Error::Model("expectile model without taus".into()))?;
                Family::expectile(tau).map_err(|e| Error::Model(e.to_string()))?
            }
            Ok(f) => f,
            Err(e) => return Err(Error::Model(e.to_string())),
        };
        let expected = if file.taus.is_empty() {
            family.n_params()
        } else {
            file.taus.len()
        };
        if file.params.len() != expected {
            return Err(Error::Model(format!(
                "{} expects {expected} parameter ensembles, found {}",
                file.family,
                file.params.len()
            )));
        }
        if file.taus.is_empty() {
            for (p, link) in file.params.iter().zip(family.links()) {
                if p.link != *link {
                    return Err(Error::Model(format!(
                        "parameter `{}` has an unexpected link",
                        p.name
                    )));
                }
            }
        }
        let width = file.features.len();
        for p in &file.params {
            if p.ensemble
                .trees
                .iter()
                .any(|t| t.max_feature().is_some_and(|j| j >= width))
            {
                return Err(Error::Model(format!(
                    "a tree of `{}` references a missing feature",
                    p.name
                )));
            }
        }
        Ok(LssModel {
            family,
            taus: file.taus,
            features: file.features,
            encoder: file.encoder,
            ensembles: file.params.into_iter().map(|p| p.ensemble).collect(),
            training_log: file.training_log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LssModel> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
