//! Overdispersed counts with a negative binomial model, then probabilistic
//! samples from the fitted predictive distribution.

use distboost::booster::{fit, BoostConfig};
use distboost::data::Dataset;
use distboost::distributions::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> distboost::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let y = x
        .iter()
        .map(|&x| {
            let pv = Family::NegativeBinomial.params_from_theta(&[2.0 + 10.0 * x, 0.5])?;
            Family::NegativeBinomial.sample_with(&pv, &mut rng)
        })
        .collect::<distboost::Result<Vec<f64>>>()?;
    let data = Dataset::from_columns(&["x"], vec![x], y)?;
    let cfg = BoostConfig {
        max_cycles: 2,
        ..Default::default()
    };
    let model = fit(&data, Family::NegativeBinomial, &cfg)?;

    let grid = Dataset::from_columns(&["x"], vec![vec![0.1, 0.5, 0.9]], vec![])?;
    let pvs = model.predict_params(&grid)?;
    let samples = model.sample_predictive(&grid, 5, 42)?;
    for ((x, pv), s) in [0.1, 0.5, 0.9].iter().zip(&pvs).zip(&samples) {
        println!(
            "x {x}: mu {:.2} (true {:.1}), dispersion {:.2}, samples {s:?}",
            pv.theta[0],
            2.0 + 10.0 * x,
            pv.theta[1]
        );
    }
    Ok(())
}
