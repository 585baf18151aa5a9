//! Per-parameter feature importance and partial dependence of the scale.

use distboost::booster::{fit, BoostConfig};
use distboost::distributions::Family;
use distboost::explain::{importance_gain, importance_permutation, partial_dependence};
use distboost::simulation::{simulate, SimSpec};

fn main() -> distboost::Result<()> {
    let spec = SimSpec {
        n_train: 4000,
        n_test: 1000,
        n_noise: 4,
        seed: 11,
    };
    let (train, test) = simulate(&spec)?;
    let cfg = BoostConfig {
        max_cycles: 2,
        ..Default::default()
    };
    let model = fit(&train, Family::Normal, &cfg)?;

    let gain = importance_gain(&model, 1)?;
    let perm = importance_permutation(&model, &test, 1, 3, 0)?;
    println!("{:<6} {:>8} {:>12}", "feature", "gain", "permutation");
    for (g, p) in gain.scores.iter().zip(&perm.scores) {
        println!("{:<6} {:>8.3} {:>12.4}", g.feature, g.score, p.score);
    }

    let pd = partial_dependence(&model, &test, 1, "x", 11, true)?;
    println!("\n{:>6} {:>8} {:>10}", "x", "sigma", "variance");
    let var = pd.mean_variance.unwrap_or_default();
    for ((x, s), v) in pd.grid.iter().zip(&pd.mean_param).zip(&var) {
        println!("{x:>6.2} {s:>8.3} {v:>10.3}");
    }
    Ok(())
}
