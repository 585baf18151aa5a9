//! Boost several expectiles at once and compare them on held-out data.

use distboost::booster::{fit_expectile_model, BoostConfig};
use distboost::simulation::{simulate, SimSpec};

fn main() -> distboost::Result<()> {
    let spec = SimSpec {
        n_train: 3000,
        n_test: 1000,
        n_noise: 2,
        seed: 5,
    };
    let (train, test) = simulate(&spec)?;
    let taus = [0.05, 0.5, 0.95];
    let model = fit_expectile_model(&train, &taus, &BoostConfig::default())?;

    let pred = model.predict_expectiles(&test)?;
    let n = pred.len() as f64;
    for (j, tau) in taus.iter().enumerate() {
        let mean = pred.iter().map(|r| r[j]).sum::<f64>() / n;
        println!("tau {tau:<5} mean prediction {mean:.3}");
    }
    let x = test.column(0);
    let width = |lo: f64, hi: f64| {
        let rows: Vec<&Vec<f64>> = pred
            .iter()
            .zip(x)
            .filter(|(_, x)| **x > lo && **x < hi)
            .map(|(r, _)| r)
            .collect();
        rows.iter().map(|r| r[2] - r[0]).sum::<f64>() / rows.len() as f64
    };
    println!(
        "mean 5%-95% expectile spread for x in (0.05, 0.25): {:.3}",
        width(0.05, 0.25)
    );
    println!(
        "mean 5%-95% expectile spread for x in (0.35, 0.45): {:.3}",
        width(0.35, 0.45)
    );
    Ok(())
}
