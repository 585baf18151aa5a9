//! Scalar special functions. Thin wrappers over `statrs` and `libm` plus
//! trigamma, which neither provides.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{digamma, gamma, gamma_lr, gamma_ur, ln_gamma};

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal quantile. `p` must lie in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Second derivative of `ln_gamma`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic series in 1/x
    acc + inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
}

/// CDF of Student's t with `nu` degrees of freedom at `t`.
pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_reference_values() {
        // psi'(1) = pi^2 / 6, psi'(1/2) = pi^2 / 2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        // finite difference of digamma
        for &x in &[0.3, 2.7, 11.0, 150.0] {
            let fd = (digamma(x + 1e-5) - digamma(x - 1e-5)) / 2e-5;
            assert!((trigamma(x) - fd).abs() / fd < 1e-6, "x={x}");
        }
    }

    #[test]
    fn normal_quantile_precision() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-13);
        assert_eq!(normal_quantile(0.5), 0.0);
        for &p in &[1e-10, 0.001, 0.3, 0.77, 0.999999] {
            let err = (normal_cdf(normal_quantile(p)) - p).abs();
            assert!(err < 1e-15 + 1e-13 * p, "p={p} err={err:e}");
        }
    }

    #[test]
    fn student_t_matches_normal_limit() {
        assert!((student_t_cdf(1.3, 1e8) - normal_cdf(1.3)).abs() < 1e-7);
        assert!((student_t_cdf(0.0, 3.0) - 0.5).abs() < 1e-15);
        // t with 1 df is Cauchy
        assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
    }
}
