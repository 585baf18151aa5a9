//! A positive, skewed response with a categorical feature: the categories
//! are encoded with smoothed target statistics and a Gamma model is fitted.

use distboost::booster::{fit, BoostConfig};
use distboost::data::{Dataset, FeatureMeta};
use distboost::distributions::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> distboost::Result<()> {
    let districts = ["north", "south", "east", "west"];
    let level = [6.0, 9.0, 12.0, 7.5];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let (mut code, mut area, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let c = rng.random_range(0..districts.len());
        let a: f64 = rng.random_range(30.0..120.0);
        let mean = level[c] * a / 50.0;
        let pv = Family::Gamma.params_from_theta(&[mean, 4.0])?;
        code.push(c as f64);
        area.push(a);
        y.push(Family::Gamma.sample_with(&pv, &mut rng)?);
    }
    let meta = vec![
        FeatureMeta::categorical(
            "district",
            districts.iter().map(|s| s.to_string()).collect(),
        ),
        FeatureMeta::numeric("area"),
    ];
    let data = Dataset::new(vec![code, area], y, meta, None)?;
    let cfg = BoostConfig {
        max_cycles: 2,
        ..Default::default()
    };
    let model = fit(&data, Family::Gamma, &cfg)?;

    for (c, name) in districts.iter().enumerate() {
        println!(
            "{name:<6} encoded as {:.3}",
            model.encoder.value("district", name)
        );
        let probe = Dataset::new(
            vec![vec![c as f64], vec![75.0]],
            vec![],
            data.meta().to_vec(),
            None,
        )?;
        let pd = model.predictive(&probe)?;
        let q = pd.quantiles(&[0.1, 0.5, 0.9])?;
        println!(
            "       area 75: mean {:.2}, 10/50/90% {:.2} {:.2} {:.2}",
            pd.mean()[0],
            q[0][0],
            q[0][1],
            q[0][2]
        );
    }
    Ok(())
}
