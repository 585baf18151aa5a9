//! Per-parameter feature importance and partial dependence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::LssModel;
use crate::data::Dataset;
use crate::distributions::Family;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMethod {
    Gain,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub param_index: usize,
    pub param_name: String,
    pub method: ImportanceMethod,
    /// In the model's feature order.
    pub scores: Vec<FeatureScore>,
}

impl ImportanceReport {
    pub fn score(&self, feature: &str) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.feature == feature)
            .map(|s| s.score)
    }
}

fn param_name(model: &LssModel, k: usize) -> Result<String> {
    if k >= model.ensembles.len() {
        return Err(Error::InvalidParams(format!(
            "parameter index {k} out of range ({} ensembles)",
            model.ensembles.len()
        )));
    }
    Ok(if model.taus.is_empty() {
        model.family.param_names()[k].to_string()
    } else {
        format!("expectile_{}", model.taus[k])
    })
}

/// Split gains of ensemble `k` summed per feature and normalized to sum 1.
/// All scores are zero when the ensemble has no splits.
pub fn importance_gain(model: &LssModel, k: usize) -> Result<ImportanceReport> {
    let name = param_name(model, k)?;
    let mut totals = vec![0.0; model.n_features()];
    for tree in &model.ensembles[k].trees {
        for (j, g) in tree.gain_by_feature() {
            totals[j] += g;
        }
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        totals.iter_mut().for_each(|t| *t /= sum);
    }
    Ok(ImportanceReport {
        param_index: k,
        param_name: name,
        method: ImportanceMethod::Gain,
        scores: model
            .features
            .iter()
            .zip(totals)
            .map(|(m, score)| FeatureScore {
                feature: m.name.clone(),
                score,
            })
            .collect(),
    })
}

/// Family and raw predictors that score ensemble `k`. Multi-level expectile
/// models are scored one level at a time.
fn scoring_view(model: &LssModel, k: usize, etas: &[Vec<f64>]) -> (Family, Vec<Vec<f64>>) {
    if model.is_multi_expectile() {
        (
            Family::Expectile { tau: model.taus[k] },
            vec![etas[k].clone()],
        )
    } else {
        (model.family, etas.to_vec())
    }
}

fn mean_nll(family: Family, etas: &[Vec<f64>], y: &[f64], w: Option<&[f64]>) -> Result<f64> {
    let mut total = 0.0;
    let mut eta = vec![0.0; etas.len()];
    for i in 0..y.len() {
        for (e, col) in eta.iter_mut().zip(etas) {
            *e = col[i];
        }
        let pv = family.params_from_eta(&eta)?;
        total += family.nll(y[i], &pv, w.map_or(1.0, |w| w[i]))?;
    }
    Ok(total / y.len() as f64)
}

/// Mean increase in per-row NLL on `data` when one feature is permuted,
/// averaged over `n_repeats` seeded permutations. Only ensemble `k` sees the
/// permuted column; the other parameters keep the intact data.
pub fn importance_permutation(
    model: &LssModel,
    data: &Dataset,
    k: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    let columns = model.prepare(data)?;
    importance_permutation_columns(
        model,
        &columns,
        data.response(),
        data.weights(),
        k,
        n_repeats,
        seed,
    )
}

/// As [`importance_permutation`] on already encoded columns.
pub fn importance_permutation_columns(
    model: &LssModel,
    columns: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    k: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    permutation_with(model, columns, y, weights, k, n_repeats, |j, r, idx| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((j as u64) << 32) | r as u64);
        idx.shuffle(&mut rng);
    })
}

fn permutation_with(
    model: &LssModel,
    columns: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    k: usize,
    n_repeats: usize,
    permute: impl Fn(usize, usize, &mut [usize]) + Sync,
) -> Result<ImportanceReport> {
    let name = param_name(model, k)?;
    if n_repeats == 0 {
        return Err(Error::Config("n_repeats must be at least 1".into()));
    }
    if y.len() != columns.first().map_or(0, Vec::len) || y.is_empty() {
        return Err(Error::InvalidData(
            "permutation importance needs a response for every row".into(),
        ));
    }
    let etas = model.predict_eta_columns(columns)?;
    let (family, base_etas) = scoring_view(model, k, &etas);
    let slot = if model.is_multi_expectile() { 0 } else { k };
    let baseline = mean_nll(family, &base_etas, y, weights)?;
    let n = y.len();
    let ensemble = &model.ensembles[k];
    let scores = (0..model.n_features())
        .into_par_iter()
        .map(|j| {
            if !ensemble.trees.iter().any(|t| t.uses_feature(j)) {
                return Ok(0.0);
            }
            let mut total = 0.0;
            for r in 0..n_repeats {
                let mut idx: Vec<usize> = (0..n).collect();
                permute(j, r, &mut idx);
                let mut cols = columns.to_vec();
                cols[j] = idx.iter().map(|&i| columns[j][i]).collect();
                let mut perturbed = base_etas.clone();
                perturbed[slot] = ensemble.predict_columns(&cols);
                total += mean_nll(family, &perturbed, y, weights)? - baseline;
            }
            Ok(total / n_repeats as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ImportanceReport {
        param_index: k,
        param_name: name,
        method: ImportanceMethod::Permutation,
        scores: model
            .features
            .iter()
            .zip(scores)
            .map(|(m, score)| FeatureScore {
                feature: m.name.clone(),
                score,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    pub feature: String,
    pub param_name: String,
    pub grid: Vec<f64>,
    /// Mean of the parameter on its natural scale at each grid value.
    pub mean_param: Vec<f64>,
    /// Mean predictive variance at each grid value, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_variance: Option<Vec<f64>>,
}

/// `grid_size` equally spaced values from the observed minimum to maximum.
pub fn grid(values: &[f64], grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::Config("grid_size must be at least 2".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(Error::EmptyInput);
    }
    let step = (hi - lo) / (grid_size - 1) as f64;
    let mut g: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    g[grid_size - 1] = hi;
    Ok(g)
}

/// Unsmoothed partial dependence of parameter `k` on `feature`: at each grid
/// value the column is set to that value for every row and the predicted
/// parameter is averaged. With `with_variance` the mean predictive variance
/// is reported as well.
pub fn partial_dependence(
    model: &LssModel,
    data: &Dataset,
    k: usize,
    feature: &str,
    grid_size: usize,
    with_variance: bool,
) -> Result<PartialDependence> {
    let name = param_name(model, k)?;
    let j = model
        .features
        .iter()
        .position(|m| m.name == feature)
        .ok_or_else(|| Error::MissingColumn(feature.to_string()))?;
    if model.features[j].is_categorical() {
        return Err(Error::CategoricalUnsupported(feature.to_string()));
    }
    let columns = model.prepare(data)?;
    let grid = grid(&columns[j], grid_size)?;
    let multi = model.is_multi_expectile();
    let n = columns[0].len() as f64;
    let points = grid
        .par_iter()
        .map(|&v| {
            let mut cols = columns.clone();
            cols[j] = vec![v; cols[j].len()];
            if multi {
                let eta = model.ensembles[k].predict_columns(&cols);
                return Ok((eta.iter().sum::<f64>() / n, f64::NAN));
            }
            let pvs = model.predict_params_columns(&cols)?;
            let m = pvs.iter().map(|p| p.theta[k]).sum::<f64>() / n;
            let var = pvs.iter().map(|p| model.family.variance(p)).sum::<f64>() / n;
            Ok((m, var))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let variance_ok = with_variance && !multi && !matches!(model.family, Family::Expectile { .. });
    Ok(PartialDependence {
        feature: feature.to_string(),
        param_name: name,
        grid,
        mean_param: points.iter().map(|p| p.0).collect(),
        mean_variance: variance_ok.then(|| points.iter().map(|p| p.1).collect()),
    })
}
