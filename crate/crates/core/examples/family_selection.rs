//! Screen candidate response distributions by GAIC on a skewed sample.

use distboost::distributions::Family;
use distboost::scoring::gaic_select;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> distboost::Result<()> {
    let truth = Family::Gamma.params_from_theta(&[8.0, 3.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = (0..3000)
        .map(|_| Family::Gamma.sample_with(&truth, &mut rng))
        .collect::<distboost::Result<Vec<f64>>>()?;

    let candidates = [
        Family::Normal,
        Family::Gamma,
        Family::LogNormal,
        Family::Weibull,
    ];
    let ranking = gaic_select(&y, &candidates, 2.0)?;
    println!("{:<10} {:>12} {:>12}", "family", "deviance", "GAIC");
    for e in &ranking.ranked {
        println!(
            "{:<10} {:>12.2} {:>12.2}  theta = {:?}",
            e.family, e.deviance, e.gaic, e.theta
        );
    }
    Ok(())
}
