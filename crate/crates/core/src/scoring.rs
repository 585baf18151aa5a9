//! Probabilistic and point forecast evaluation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::LssModel;
use crate::data::Dataset;
use crate::distributions::{unconditional_mle, Family, ParamVector};
use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf, normal_quantile};

/// Default number of draws of the sample CRPS estimator.
pub const CRPS_SAMPLES: usize = 1000;

/// Clamp applied to PIT values before the normal quantile transform.
pub const PIT_CLAMP: f64 = 1e-10;

/// Closed-form CRPS of a normal forecast.
pub fn crps_normal(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma
        * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z)
            - 1.0 / std::f64::consts::PI.sqrt())
}

/// Sample CRPS estimator `mean|X - y| - 1/2 mean|X - X'|` with the unbiased
/// pairwise term, computed on the sorted sample.
pub fn crps_from_samples(samples: &mut [f64], y: f64) -> f64 {
    let s = samples.len();
    assert!(s >= 2, "need at least two samples");
    samples.sort_by(f64::total_cmp);
    let first = samples.iter().map(|x| (x - y).abs()).sum::<f64>() / s as f64;
    // sum over i < j of x_(j) - x_(i)
    let pairs: f64 = samples
        .iter()
        .enumerate()
        .map(|(j, x)| x * (2.0 * j as f64 - (s as f64 - 1.0)))
        .sum();
    first - pairs / (s as f64 * (s as f64 - 1.0))
}

/// CRPS by Monte Carlo with `n_samples` seeded draws.
pub fn crps_sampled(
    family: Family,
    pv: &ParamVector,
    y: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::Config(
            "the CRPS estimator needs at least two samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = (0..n_samples)
        .map(|_| family.sample_with(pv, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    Ok(crps_from_samples(&mut xs, y).max(0.0))
}

/// CRPS of one forecast. Normal forecasts use the closed form, every other
/// family the sample estimator with [`CRPS_SAMPLES`] draws.
pub fn crps(family: Family, pv: &ParamVector, y: f64) -> Result<f64> {
    crps_with(family, pv, y, CRPS_SAMPLES, 0)
}

pub fn crps_with(
    family: Family,
    pv: &ParamVector,
    y: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    // validates the parameters
    family.params_from_theta(&pv.theta)?;
    match family {
        Family::Normal => Ok(crps_normal(pv.theta[0], pv.theta[1], y)),
        _ => crps_sampled(family, pv, y, n_samples, seed),
    }
}

/// Negative log density (or mass) at `y`.
pub fn log_score(family: Family, pv: &ParamVector, y: f64) -> Result<f64> {
    family.nll(y, pv, 1.0)
}

/// Sum of pinball losses `2[tau (y - q) 1(y > q) + (1 - tau)(q - y) 1(y <= q)]`
/// divided by the sum of `|y|`.
pub fn quantile_loss(y: &[f64], yhat: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::BadTau(tau));
    }
    check_aligned(y, yhat)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let loss: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&y, &q)| {
            let d = y - q;
            if d > 0.0 {
                2.0 * tau * d
            } else {
                2.0 * (1.0 - tau) * -d
            }
        })
        .sum();
    Ok(loss / denom)
}

fn check_aligned(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != yhat.len() {
        return Err(Error::InvalidData(format!(
            "{} observations but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

/// Normal quantile residuals `Phi^-1(F(y))`. Discrete families draw the PIT
/// uniformly between `F(y - 1)` and `F(y)`; row `i` uses stream `i` of a
/// ChaCha8 generator seeded with `seed`.
pub fn quantile_residuals(
    family: Family,
    pvs: &[ParamVector],
    y: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    if pvs.len() != y.len() {
        return Err(Error::InvalidData(format!(
            "{} parameter vectors but {} observations",
            pvs.len(),
            y.len()
        )));
    }
    pvs.par_iter()
        .zip(y)
        .enumerate()
        .map(|(i, (pv, &y))| {
            family.check_support(y)?;
            let upper = family.cdf(y, pv)?;
            let u = if family.is_discrete() {
                let lower = family.cdf(y - 1.0, pv)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                lower + rng.random::<f64>() * (upper - lower)
            } else {
                upper
            };
            Ok(normal_quantile(u.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP)))
        })
        .collect()
}

/// Kolmogorov-Smirnov distance of a sample from the standard normal.
pub fn ks_normal(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaicEntry {
    pub family: String,
    pub n_params: usize,
    pub deviance: f64,
    pub gaic: f64,
    /// Fitted parameters on the natural scale.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaicRanking {
    /// Ascending by GAIC.
    pub ranked: Vec<GaicEntry>,
    /// Candidates that could not be fitted, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Ranks candidate families by `2 * sum(nll) + penalty * K` of their
/// intercept-only maximum likelihood fits. Candidates are deduplicated by
/// name; candidates whose support excludes some `y` or whose fit fails are
/// skipped. Ties go to fewer parameters, then to the name.
pub fn gaic_select(y: &[f64], candidates: &[Family], penalty: f64) -> Result<GaicRanking> {
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::Config(format!(
            "GAIC penalty must be non-negative, got {penalty}"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = GaicRanking::default();
    for &family in candidates {
        if !seen.insert(family.name()) {
            continue;
        }
        let fitted = unconditional_mle(family, y, None).and_then(|pv| {
            let mut total = 0.0;
            for &v in y {
                total += family.nll(v, &pv, 1.0)?;
            }
            Ok((pv, total))
        });
        match fitted {
            Ok((pv, nll)) => {
                let k = family.n_params();
                out.ranked.push(GaicEntry {
                    family: family.name().to_string(),
                    n_params: k,
                    deviance: 2.0 * nll,
                    gaic: 2.0 * nll + penalty * k as f64,
                    theta: pv.theta,
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", family.name());
                out.skipped.push((family.name().to_string(), e.to_string()));
            }
        }
    }
    if out.ranked.is_empty() {
        return Err(Error::AllCandidatesFailed);
    }
    out.ranked.sort_by(|a, b| {
        a.gaic
            .total_cmp(&b.gaic)
            .then(a.n_params.cmp(&b.n_params))
            .then(a.family.cmp(&b.family))
    });
    Ok(out)
}

/// Point forecast metrics. A metric whose domain condition fails (zero
/// response for the percentage errors, values at or below -1 for RMSLE, a
/// constant response for the relative metrics) is left out of the map.
pub fn point_metrics(y: &[f64], yhat: &[f64]) -> Result<BTreeMap<String, f64>> {
    check_aligned(y, yhat)?;
    let n = y.len() as f64;
    let mean_y = y.iter().sum::<f64>() / n;
    let err: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    let sse: f64 = err.iter().map(|e| e * e).sum();
    let sae: f64 = err.iter().map(|e| e.abs()).sum();
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let sat: f64 = y.iter().map(|v| (v - mean_y).abs()).sum();

    let mut m = BTreeMap::new();
    let mse = sse / n;
    m.insert("mse".into(), mse);
    m.insert("rmse".into(), mse.sqrt());
    m.insert("mae".into(), sae / n);
    let mut abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    let median = if abs.len() % 2 == 1 {
        abs[mid]
    } else {
        0.5 * (abs[mid - 1] + abs[mid])
    };
    m.insert("median_ae".into(), median);
    if y.iter().all(|&v| v != 0.0) {
        let pct: Vec<f64> = err.iter().zip(y).map(|(e, v)| e / v).collect();
        m.insert("mape".into(), pct.iter().map(|p| p.abs()).sum::<f64>() / n);
        m.insert(
            "rmspe".into(),
            (pct.iter().map(|p| p * p).sum::<f64>() / n).sqrt(),
        );
    }
    if y.iter().chain(yhat).all(|&v| v > -1.0) {
        let s: f64 = y
            .iter()
            .zip(yhat)
            .map(|(a, b)| (a.ln_1p() - b.ln_1p()).powi(2))
            .sum();
        m.insert("rmsle".into(), (s / n).sqrt());
    }
    if sst > 0.0 {
        m.insert("rae".into(), sae / sat);
        m.insert("rrse".into(), (sse / sst).sqrt());
        m.insert("r2".into(), 1.0 - sse / sst);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub crps: f64,
    pub log_score: f64,
    pub point_metrics: BTreeMap<String, f64>,
    /// Keyed by the level as written, e.g. "0.05".
    pub quantile_losses: BTreeMap<String, f64>,
}

/// Scores a fitted model on labelled data. Point forecasts are predictive
/// means; quantile losses use the predictive quantiles at `taus`.
pub fn evaluate(
    model: &LssModel,
    data: &Dataset,
    taus: &[f64],
    crps_samples: usize,
    seed: u64,
) -> Result<ScoreReport> {
    if !data.has_response() {
        return Err(Error::InvalidData("evaluation data has no response".into()));
    }
    let family = model.family;
    let y = data.response();
    let pd = model.predictive(data)?;
    let rows: Vec<(f64, f64)> = pd
        .params
        .par_iter()
        .zip(y)
        .enumerate()
        .map(|(i, (pv, &y))| {
            let c = crps_with(family, pv, y, crps_samples, seed.wrapping_add(i as u64))?;
            Ok((c, log_score(family, pv, y)?))
        })
        .collect::<Result<_>>()?;
    let n = y.len() as f64;
    let crps = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let log_score = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let point_metrics = point_metrics(y, &pd.mean())?;
    let mut quantile_losses = BTreeMap::new();
    if !taus.is_empty() {
        let q = pd.quantiles(taus)?;
        for (j, &tau) in taus.iter().enumerate() {
            let col: Vec<f64> = q.iter().map(|r| r[j]).collect();
            quantile_losses.insert(tau.to_string(), quantile_loss(y, &col, tau)?);
        }
    }
    Ok(ScoreReport {
        crps,
        log_score,
        point_metrics,
        quantile_losses,
    })
}
