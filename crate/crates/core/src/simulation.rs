//! Heteroskedastic benchmark: y ~ N(10, s2(x)) with
//! s2(x) = 1 + 4 * 1(0.3 < x < 0.5) + 2 * 1(x > 0.7), x ~ U(0, 1), plus
//! independent uniform noise features X1..Xn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::special::normal_quantile;

pub const LOCATION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub n_noise: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_train: 7000,
            n_test: 3000,
            n_noise: 10,
            seed: 42,
        }
    }
}

/// Variance of the response at `x`. Interval bounds are strict.
pub fn variance(x: f64) -> f64 {
    let mut v = 1.0;
    if x > 0.3 && x < 0.5 {
        v += 4.0;
    }
    if x > 0.7 {
        v += 2.0;
    }
    v
}

/// True conditional quantile of the response at level `p`.
pub fn truth(p: f64, x: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::BadProbability(p));
    }
    Ok(LOCATION + normal_quantile(p) * variance(x).sqrt())
}

/// Feature names: `x` followed by `X1..Xn`.
pub fn feature_names(n_noise: usize) -> Vec<String> {
    std::iter::once("x".to_string())
        .chain((1..=n_noise).map(|j| format!("X{j}")))
        .collect()
}

fn generate(n: usize, n_noise: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut columns = vec![Vec::with_capacity(n); n_noise + 1];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        columns[0].push(x);
        for col in columns.iter_mut().skip(1) {
            col.push(rng.random());
        }
        let z: f64 = rng.sample(StandardNormal);
        y.push(LOCATION + variance(x).sqrt() * z);
    }
    let names = feature_names(n_noise);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Dataset::from_columns(&refs, columns, y)
}

/// Seeded train and test sets. The test set continues the same random stream.
pub fn simulate(spec: &SimSpec) -> Result<(Dataset, Dataset)> {
    if spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::Config(
            "simulation row counts must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = generate(spec.n_train, spec.n_noise, &mut rng)?;
    let test = generate(spec.n_test, spec.n_noise, &mut rng)?;
    Ok((train, test))
}

/// True quantiles at `probs` for every row of `data` (which must carry `x`
/// as its first column).
pub fn truth_quantiles(data: &Dataset, probs: &[f64]) -> Result<Vec<Vec<f64>>> {
    let x = data
        .feature_index("x")
        .ok_or_else(|| Error::MissingColumn("x".into()))?;
    data.column(x)
        .iter()
        .map(|&x| probs.iter().map(|&p| truth(p, x)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_examples() {
        assert_eq!(truth(0.5, 0.1).unwrap(), 10.0);
        assert_eq!(truth(0.5, 0.4).unwrap(), 10.0);
        let q = truth(0.95, 0.4).unwrap();
        assert!((q - (10.0 + 1.644_853_626_951_472 * 5f64.sqrt())).abs() < 1e-12);
        assert!((q - 13.678).abs() < 1e-3);
        assert_eq!(variance(0.3), 1.0);
        assert_eq!(variance(0.5), 1.0);
        assert_eq!(variance(0.7), 1.0);
        assert_eq!(variance(0.71), 3.0);
    }

    #[test]
    fn generator_moments() {
        let spec = SimSpec {
            n_train: 100_000,
            n_test: 1,
            ..Default::default()
        };
        let (train, _) = simulate(&spec).unwrap();
        let x = train.column(0);
        let y = train.response();
        let inner: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(x, _)| **x > 0.31 && **x < 0.49)
            .map(|(_, y)| *y)
            .collect();
        let m = inner.iter().sum::<f64>() / inner.len() as f64;
        let v = inner.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (inner.len() - 1) as f64;
        assert!((v / 5.0 - 1.0).abs() < 0.05, "{v}");

        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        assert!((mean - 10.0).abs() < 4.0 * 5f64.sqrt() / n.sqrt());
        let sy = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for j in 1..train.n_cols() {
            let c = train.column(j);
            let mc = c.iter().sum::<f64>() / n;
            let sc = (c.iter().map(|v| (v - mc).powi(2)).sum::<f64>() / n).sqrt();
            let cov = c
                .iter()
                .zip(y)
                .map(|(a, b)| (a - mc) * (b - mean))
                .sum::<f64>()
                / n;
            assert!((cov / (sc * sy)).abs() < 3.0 / n.sqrt());
        }
    }

    #[test]
    fn seeded_and_named() {
        let spec = SimSpec {
            n_train: 50,
            n_test: 20,
            ..Default::default()
        };
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
        let (train, test) = simulate(&spec).unwrap();
        assert_eq!(train.n_rows(), 50);
        assert_eq!(test.n_rows(), 20);
        assert_eq!(train.feature_names()[..3], ["x", "X1", "X2"]);
        assert_eq!(train.n_cols(), 11);
    }
}
