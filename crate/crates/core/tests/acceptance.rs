//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero when any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use distboost::booster::{fit, fit_expectile_model, fit_step1, BoostConfig, LssModel};
use distboost::data::Dataset;
use distboost::distributions::{Family, ParamVector, FAMILY_NAMES};
use distboost::explain::importance_gain;
use distboost::scoring::{
    crps_normal, crps_sampled, gaic_select, ks_normal, quantile_loss, quantile_residuals,
};
use distboost::simulation::{simulate, truth_quantiles, variance, SimSpec};
use distboost::tree::TreeConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn pv(f: Family, theta: &[f64]) -> ParamVector {
    f.params_from_theta(theta).unwrap()
}

// ---------------------------------------------------------------- criterion 1

fn random_theta(f: Family, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match f {
        Family::Normal => vec![rng.random_range(-5.0..5.0), rng.random_range(0.2..5.0)],
        Family::LogNormal => vec![rng.random_range(-1.0..2.0), rng.random_range(0.2..2.0)],
        Family::Gamma => vec![rng.random_range(0.5..20.0), rng.random_range(0.3..20.0)],
        Family::Weibull => vec![rng.random_range(0.5..10.0), rng.random_range(0.5..5.0)],
        Family::StudentT => vec![
            rng.random_range(-5.0..5.0),
            rng.random_range(0.3..4.0),
            rng.random_range(2.5..50.0),
        ],
        Family::Poisson => vec![rng.random_range(0.2..30.0)],
        Family::NegativeBinomial => vec![rng.random_range(0.3..30.0), rng.random_range(0.01..3.0)],
        Family::Expectile { .. } => vec![rng.random_range(-5.0..5.0)],
    }
}

/// Analytic derivatives against central differences at step 1e-6: the
/// gradient against differences of the NLL, the Hessian against differences
/// of the analytic gradient. Error is |a - fd| / max(|fd|, 1e-2).
fn criterion_derivatives() -> Outcome {
    let start = Instant::now();
    let step = 1e-6;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let families: Vec<Family> = FAMILY_NAMES
        .iter()
        .map(|n| Family::from_name(n).unwrap())
        .filter(|f| !matches!(f, Family::Expectile { .. }))
        .chain([0.1, 0.5, 0.9].map(|tau| Family::Expectile { tau }))
        .collect();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0;
    for f in families {
        for k in 0..f.n_params() {
            for _ in 0..200 {
                let at = pv(f, &random_theta(f, &mut rng));
                let y = match f {
                    Family::Expectile { .. } => rng.random_range(-8.0..8.0),
                    _ => f.sample_with(&at, &mut rng).unwrap(),
                };
                let shifted = |d: f64| {
                    let mut eta = at.eta.clone();
                    eta[k] += d;
                    f.params_from_eta(&eta).unwrap()
                };
                let (up, down) = (shifted(step), shifted(-step));
                let g_fd =
                    (f.nll(y, &up, 1.0).unwrap() - f.nll(y, &down, 1.0).unwrap()) / (2.0 * step);
                let h_fd = (f.grad_hess_raw(y, &up, k, 1.0).unwrap().0
                    - f.grad_hess_raw(y, &down, k, 1.0).unwrap().0)
                    / (2.0 * step);
                let (g, h) = f.grad_hess_raw(y, &at, k, 1.0).unwrap();
                for (e, what) in [(rel(g, g_fd), "g"), (rel(h, h_fd), "h")] {
                    if e > worst || e.is_nan() {
                        worst = if e.is_nan() { f64::INFINITY } else { e };
                        worst_at = format!("{} k={k} {what}", f.name());
                    }
                }
                checked += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && within(t, 5.0),
        format!(
            "{checked} points, max rel err {worst:.2e} ({worst_at}), {:.2}s",
            t.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------- reference booster

/// Plain least-squares regression tree with an L2 leaf penalty, written
/// independently of the library tree learner.
enum RefTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RefTree>,
        right: Box<RefTree>,
    },
}

impl RefTree {
    fn eval(&self, x: &[Vec<f64>], i: usize) -> f64 {
        match self {
            RefTree::Leaf(v) => *v,
            RefTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature][i] <= *threshold {
                    left.eval(x, i)
                } else {
                    right.eval(x, i)
                }
            }
        }
    }
}

fn ref_tree(x: &[Vec<f64>], r: &[f64], rows: &[usize], depth: usize, cfg: &TreeConfig) -> RefTree {
    let lambda = cfg.lambda;
    let s: f64 = rows.iter().map(|&i| r[i]).sum();
    let n = rows.len() as f64;
    let leaf = RefTree::Leaf(s / (n + lambda));
    if depth == cfg.max_depth {
        return leaf;
    }
    // (gain, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    for (j, col) in x.iter().enumerate() {
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut sl = 0.0;
        for p in 0..order.len() - 1 {
            sl += r[order[p]];
            let nl = p + 1;
            let nr = order.len() - nl;
            if nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf {
                continue;
            }
            let (a, b) = (col[order[p]], col[order[p + 1]]);
            if a == b {
                continue;
            }
            let sr = s - sl;
            let gain = 0.5
                * (sl * sl / (nl as f64 + lambda) + sr * sr / (nr as f64 + lambda)
                    - s * s / (n + lambda))
                - cfg.gamma;
            if gain > 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, j, 0.5 * (a + b)));
            }
        }
    }
    match best {
        None => leaf,
        Some((_, feature, threshold)) => {
            let (l, rt): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| x[feature][i] <= threshold);
            RefTree::Split {
                feature,
                threshold,
                left: Box::new(ref_tree(x, r, &l, depth + 1, cfg)),
                right: Box::new(ref_tree(x, r, &rt, depth + 1, cfg)),
            }
        }
    }
}

/// Squared-error gradient boosting from the sample mean; returns the
/// predictions on `test`.
fn ref_boost(
    x: &[Vec<f64>],
    y: &[f64],
    test: &[Vec<f64>],
    n_trees: usize,
    shrinkage: f64,
    cfg: &TreeConfig,
) -> Vec<f64> {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let rows: Vec<usize> = (0..n).collect();
    let mut fit = vec![base; n];
    let n_test = test[0].len();
    let mut pred = vec![base; n_test];
    for _ in 0..n_trees {
        let r: Vec<f64> = y.iter().zip(&fit).map(|(y, f)| y - f).collect();
        let tree = ref_tree(x, &r, &rows, 0, cfg);
        for (i, f) in fit.iter_mut().enumerate() {
            *f += shrinkage * tree.eval(x, i);
        }
        for (i, p) in pred.iter_mut().enumerate() {
            *p += shrinkage * tree.eval(test, i);
        }
    }
    pred
}

fn regression_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.random()).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            3.0 * (std::f64::consts::TAU * cols[0][i]).sin() + 2.0 * cols[1][i] + e
        })
        .collect();
    Dataset::from_columns(&["a", "b", "c"], cols, y).unwrap()
}

// ---------------------------------------------------------------- criterion 2

fn criterion_squared_error_equivalence() -> Outcome {
    let start = Instant::now();
    let data = regression_data(1000, 7);
    let tree = TreeConfig {
        max_depth: 3,
        min_samples_leaf: 5,
        lambda: 0.0,
        gamma: 0.0,
    };
    let cfg = BoostConfig {
        n_iters_step1: 50,
        max_cycles: 0,
        tree,
        ..Default::default()
    };
    // Step 1 boosts the location with the scale frozen at its MLE
    let model = fit_step1(&data, Family::Normal, &cfg).unwrap();
    let ours = model.ensembles[0].predict_columns(data.columns());
    let reference = ref_boost(
        data.columns(),
        data.response(),
        data.columns(),
        50,
        cfg.shrinkage,
        &tree,
    );
    let max_diff = ours
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let t = start.elapsed();
    outcome(
        max_diff < 1e-10 && within(t, 10.0),
        format!(
            "n=1000, 50 trees, max |diff| {max_diff:.2e}, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------- criteria 3 to 8

struct SimRun {
    model: LssModel,
    test: Dataset,
    elapsed: Duration,
}

fn sim_run() -> SimRun {
    let start = Instant::now();
    let (train, test) = simulate(&SimSpec::default()).unwrap();
    let model = fit(&train, Family::Normal, &BoostConfig::default()).unwrap();
    SimRun {
        model,
        test,
        elapsed: start.elapsed(),
    }
}

fn criterion_coverage(run: &SimRun) -> Outcome {
    let start = Instant::now();
    let (lo, hi) = run.model.predict_interval(&run.test, 0.9).unwrap();
    let y = run.test.response();
    let inside = y
        .iter()
        .zip(lo.iter().zip(&hi))
        .filter(|(y, (l, h))| *l <= *y && *y <= *h)
        .count();
    let coverage = inside as f64 / y.len() as f64;
    let t = run.elapsed + start.elapsed();
    outcome(
        (0.88..=0.92).contains(&coverage) && within(t, 120.0),
        format!(
            "90% interval coverage {coverage:.4} (need [0.88, 0.92]), {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_quantile_accuracy(run: &SimRun) -> Outcome {
    let probs = [0.05, 0.95];
    let pred = run.model.predict_quantiles(&run.test, &probs).unwrap();
    let truth = truth_quantiles(&run.test, &probs).unwrap();
    let n = pred.len() as f64;
    let mad: Vec<f64> = (0..2)
        .map(|j| {
            pred.iter()
                .zip(&truth)
                .map(|(p, t)| (p[j] - t[j]).abs())
                .sum::<f64>()
                / n
        })
        .collect();
    let overall = (mad[0] + mad[1]) / 2.0;
    outcome(
        overall < 0.35,
        format!(
            "MAD {overall:.4} (q05 {:.4}, q95 {:.4}; need < 0.35)",
            mad[0], mad[1]
        ),
    )
}

fn criterion_importance(run: &SimRun) -> Outcome {
    let report = importance_gain(&run.model, 1).unwrap();
    let x = report.score("x").unwrap();
    let noise = report
        .scores
        .iter()
        .filter(|s| s.feature != "x")
        .map(|s| s.score)
        .fold(0.0, f64::max);
    outcome(
        x > 0.5 && noise < 0.1,
        format!("scale gain share x {x:.4} (need > 0.5), max noise {noise:.4} (need < 0.1)"),
    )
}

fn criterion_heteroskedasticity(run: &SimRun) -> Outcome {
    let var = run.model.predictive(&run.test).unwrap().variance();
    let x = run.test.column(0);
    let mean_in = |lo: f64, hi: f64| {
        let v: Vec<f64> = x
            .iter()
            .zip(&var)
            .filter(|(x, _)| **x > lo && **x < hi)
            .map(|(_, v)| *v)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let base = mean_in(0.05, 0.25);
    let bump = mean_in(0.35, 0.45);
    let right = mean_in(0.75, 0.95);
    outcome(
        bump > 3.0 * base && right > 2.0 * base,
        format!(
            "mean variance {base:.3} / {bump:.3} / {right:.3}; ratios {:.2} (need > 3), {:.2} (need > 2); true 1 / {} / {}",
            bump / base,
            right / base,
            variance(0.4),
            variance(0.8)
        ),
    )
}

fn criterion_deviance(run: &SimRun) -> Outcome {
    use distboost::booster::StopReason;
    let log = &run.model.training_log;
    let monotone = log.deviance.windows(2).all(|w| w[1] <= w[0]);
    let eps = BoostConfig::default().epsilon;
    let stopped = match log.stop {
        StopReason::Converged => log.final_diff.is_some_and(|d| d < eps),
        StopReason::CycleCap => true,
        _ => false,
    };
    outcome(
        monotone && stopped,
        format!(
            "{} cycles, deviance {:.1} -> {:.1}, non-increasing {monotone}, stop {:?}, final diff {:.2e}",
            log.cycles(),
            log.deviance[0],
            log.deviance.last().unwrap(),
            log.stop,
            log.final_diff.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_residual_calibration(run: &SimRun) -> Outcome {
    let family = run.model.family;
    let pvs = run.model.predict_params(&run.test).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let y: Vec<f64> = pvs
        .iter()
        .map(|p| family.sample_with(p, &mut rng).unwrap())
        .collect();
    let r = quantile_residuals(family, &pvs, &y, 8).unwrap();
    let ks = ks_normal(&r);
    outcome(
        ks < 0.05,
        format!("n={}, KS {ks:.4} (need < 0.05)", y.len()),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_crps() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let mu: f64 = rng.random_range(-5.0..5.0);
        // Monte Carlo error grows with sigma; the absolute bar assumes unit scale
        let sigma: f64 = rng.random_range(0.2..1.0);
        let z: f64 = rng.sample(StandardNormal);
        let y = mu + sigma * z;
        let exact = crps_normal(mu, sigma, y);
        let mc = crps_sampled(
            Family::Normal,
            &pv(Family::Normal, &[mu, sigma]),
            y,
            100_000,
            1000 + t,
        )
        .unwrap();
        worst = worst.max((exact - mc).abs());
    }
    let t = start.elapsed();
    outcome(
        worst < 0.01 && within(t, 30.0),
        format!(
            "100 triples (sigma in [0.2, 1]), 1e5 samples, max |diff| {worst:.2e}, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

// --------------------------------------------------------------- criterion 10

fn criterion_quantile_loss() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let y: Vec<f64> = (0..1000).map(|_| rng.random_range(-10.0..10.0)).collect();
    let q: Vec<f64> = (0..1000).map(|_| rng.random_range(-10.0..10.0)).collect();
    let mut worst = 0.0f64;
    for tau in [0.01, 0.5, 0.99] {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            let u = y[i] - q[i];
            num += 2.0 * (tau * u).max((tau - 1.0) * u);
            den += y[i].abs();
        }
        worst = worst.max((quantile_loss(&y, &q, tau).unwrap() - num / den).abs());
    }
    outcome(
        worst < 1e-12,
        format!("1000 pairs x 3 levels, max |diff| {worst:.2e}"),
    )
}

// --------------------------------------------------------------- criterion 11

fn criterion_gaic() -> Outcome {
    let truths = [
        (Family::Normal, vec![10.0, 2.0]),
        (Family::Gamma, vec![5.0, 2.0]),
        (Family::LogNormal, vec![1.0, 0.5]),
        (Family::Weibull, vec![2.0, 1.5]),
    ];
    let candidates = [
        Family::Normal,
        Family::Gamma,
        Family::LogNormal,
        Family::Weibull,
    ];
    let mut winners = Vec::new();
    for (i, (family, theta)) in truths.iter().enumerate() {
        let p = pv(*family, theta);
        let mut rng = ChaCha8Rng::seed_from_u64(110 + i as u64);
        let y: Vec<f64> = (0..5000)
            .map(|_| family.sample_with(&p, &mut rng).unwrap())
            .collect();
        let ranking = gaic_select(&y, &candidates, 2.0).unwrap();
        winners.push((family.name(), ranking.ranked[0].family.clone()));
    }
    let pass = winners.iter().all(|(t, w)| t == w);
    let detail = winners
        .iter()
        .map(|(t, w)| format!("{t}->{w}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, detail)
}

// --------------------------------------------------------------- criterion 12

fn criterion_expectiles() -> Outcome {
    let train = regression_data(2000, 12);
    let test = regression_data(1000, 13);
    let cfg = BoostConfig::default();
    let model = fit_expectile_model(&train, &[0.1, 0.5, 0.9], &cfg).unwrap();
    let pred = model.predict_expectiles(&test).unwrap();
    let n = pred.len() as f64;
    let m: Vec<f64> = (0..3)
        .map(|j| pred.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let reference = ref_boost(
        train.columns(),
        train.response(),
        test.columns(),
        cfg.n_iters_step1,
        cfg.shrinkage,
        &cfg.tree,
    );
    let diff = pred
        .iter()
        .zip(&reference)
        .map(|(p, r)| (p[1] - r).abs())
        .fold(0.0, f64::max);
    outcome(
        m[0] <= m[1] && m[1] <= m[2] && diff < 1e-10,
        format!(
            "means {:.4} <= {:.4} <= {:.4}, tau=0.5 vs squared error max |diff| {diff:.2e}",
            m[0], m[1], m[2]
        ),
    )
}

// --------------------------------------------------------------- criterion 13

fn criterion_determinism(run: &SimRun) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    run.model.save(&path).unwrap();
    let loaded = LssModel::load(&path).unwrap();
    let bits = |m: &LssModel| -> Vec<u64> {
        m.predict_params(&run.test)
            .unwrap()
            .iter()
            .flat_map(|p| p.theta.iter().map(|t| t.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let reload_equal = bits(&run.model) == bits(&loaded)
        && run
            .model
            .predict_quantiles(&run.test, &[0.05, 0.95])
            .unwrap()
            == loaded.predict_quantiles(&run.test, &[0.05, 0.95]).unwrap();

    let small = SimSpec {
        n_train: 1000,
        n_test: 200,
        ..Default::default()
    };
    let cfg = BoostConfig {
        n_iters_step1: 20,
        max_cycles: 2,
        n_iters_per_cycle: 5,
        ..Default::default()
    };
    let once = || {
        let (train, test) = simulate(&small).unwrap();
        let model = fit(&train, Family::Normal, &cfg).unwrap();
        let samples = model.sample_predictive(&test, 3, 5).unwrap();
        (train, test, model.to_json().unwrap(), samples)
    };
    let (a, b) = (once(), once());
    let repeat_equal = a.0 == b.0 && a.1 == b.1 && a.2 == b.2 && a.3 == b.3;

    let bin = env!("CARGO_BIN_EXE_distboost");
    let cli_run = |out: &std::path::Path| {
        std::process::Command::new(bin)
            .args([
                "simulate",
                "--seed",
                "42",
                "--n-train",
                "500",
                "--n-test",
                "100",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap()
            .success()
    };
    let (d1, d2) = (dir.path().join("s1"), dir.path().join("s2"));
    let mut cli_equal = cli_run(&d1) && cli_run(&d2);
    for f in ["train.csv", "test.csv", "truth.csv"] {
        cli_equal &= std::fs::read(d1.join(f)).unwrap() == std::fs::read(d2.join(f)).unwrap();
    }
    outcome(
        reload_equal && repeat_equal && cli_equal,
        format!("reload bit-identical {reload_equal}, repeated library runs {repeat_equal}, repeated CLI runs {cli_equal}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (
            1,
            "derivatives vs finite differences",
            criterion_derivatives(),
        ),
        (
            2,
            "squared-error equivalence",
            criterion_squared_error_equivalence(),
        ),
    ];
    let run = sim_run();
    results.push((3, "simulation interval coverage", criterion_coverage(&run)));
    results.push((
        4,
        "simulation quantile accuracy",
        criterion_quantile_accuracy(&run),
    ));
    results.push((5, "simulation scale importance", criterion_importance(&run)));
    results.push((
        6,
        "simulation variance recovery",
        criterion_heteroskedasticity(&run),
    ));
    results.push((7, "deviance monotonicity", criterion_deviance(&run)));
    results.push((
        8,
        "quantile residual calibration",
        criterion_residual_calibration(&run),
    ));
    results.push((
        9,
        "normal CRPS closed form vs Monte Carlo",
        criterion_crps(),
    ));
    results.push((
        10,
        "quantile loss vs scalar loop",
        criterion_quantile_loss(),
    ));
    results.push((11, "GAIC family recovery", criterion_gaic()));
    results.push((
        12,
        "expectile ordering and symmetric case",
        criterion_expectiles(),
    ));
    results.push((
        13,
        "determinism and persistence",
        criterion_determinism(&run),
    ));

    let mut failed = 0;
    for (id, name, o) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
