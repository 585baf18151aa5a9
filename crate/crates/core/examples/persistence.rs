//! Save a model to JSON, load it back and confirm predictions are identical.

use distboost::booster::{fit, BoostConfig, LssModel};
use distboost::distributions::Family;
use distboost::simulation::{simulate, SimSpec};

fn main() -> distboost::Result<()> {
    let spec = SimSpec {
        n_train: 1000,
        n_test: 200,
        n_noise: 2,
        seed: 1,
    };
    let (train, test) = simulate(&spec)?;
    let cfg = BoostConfig {
        n_iters_step1: 30,
        max_cycles: 1,
        ..Default::default()
    };
    let model = fit(&train, Family::StudentT, &cfg)?;

    let path = std::env::temp_dir().join("distboost_example_model.json");
    model.save(&path)?;
    let loaded = LssModel::load(&path)?;
    let same = model.predict_params(&test)? == loaded.predict_params(&test)?;
    println!(
        "saved {} bytes to {}",
        std::fs::metadata(&path)?.len(),
        path.display()
    );
    println!("reloaded predictions identical: {same}");
    std::fs::remove_file(&path)?;
    Ok(())
}
