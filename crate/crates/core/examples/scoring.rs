//! Score a fitted model with CRPS, log score, point metrics and quantile
//! losses, and check its quantile residuals.

use distboost::booster::{fit, BoostConfig};
use distboost::distributions::Family;
use distboost::scoring::{evaluate, ks_normal, quantile_residuals, CRPS_SAMPLES};
use distboost::simulation::{simulate, SimSpec};

fn main() -> distboost::Result<()> {
    let spec = SimSpec {
        n_train: 3000,
        n_test: 1000,
        n_noise: 3,
        seed: 7,
    };
    let (train, test) = simulate(&spec)?;
    let cfg = BoostConfig {
        max_cycles: 3,
        ..Default::default()
    };
    let model = fit(&train, Family::Normal, &cfg)?;

    let report = evaluate(&model, &test, &[0.05, 0.95], CRPS_SAMPLES, 0)?;
    println!("CRPS      {:.4}", report.crps);
    println!("log score {:.4}", report.log_score);
    for (name, v) in &report.point_metrics {
        println!("{name:<10}{v:.4}");
    }
    for (tau, v) in &report.quantile_losses {
        println!("QL({tau})  {v:.4}");
    }

    let pvs = model.predict_params(&test)?;
    let r = quantile_residuals(model.family, &pvs, test.response(), 0)?;
    println!(
        "KS distance of quantile residuals from N(0, 1): {:.4}",
        ks_normal(&r)
    );
    Ok(())
}
