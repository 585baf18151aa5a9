//! Fit a Normal model to the heteroskedastic benchmark and check the
//! coverage of its 90% prediction intervals on the test set.

use distboost::booster::{fit, BoostConfig};
use distboost::distributions::Family;
use distboost::simulation::{simulate, SimSpec};

fn main() -> distboost::Result<()> {
    let (train, test) = simulate(&SimSpec::default())?;
    let model = fit(&train, Family::Normal, &BoostConfig::default())?;

    let (lo, hi) = model.predict_interval(&test, 0.9)?;
    let y = test.response();
    let inside = (0..y.len())
        .filter(|&i| lo[i] <= y[i] && y[i] <= hi[i])
        .count();
    println!(
        "90% interval coverage: {:.3}",
        inside as f64 / y.len() as f64
    );

    let log = &model.training_log;
    println!("Step-2 cycles: {}, stop: {:?}", log.cycles(), log.stop);
    for (q, d) in log.deviance.iter().enumerate() {
        println!("  cycle {q:>2}  deviance {d:.1}");
    }
    Ok(())
}
