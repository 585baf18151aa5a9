//! Response distributions parametrized on the raw predictor scale.
//!
//! Each [`Family`] carries one [`Link`] per parameter. Derivatives are of the
//! per-observation negative log-likelihood with respect to the raw predictor
//! `eta_k`, and are analytic. Finite differences only appear in tests.
//!
//! | family        | parameters (link)                                 |
//! |---------------|---------------------------------------------------|
//! | `normal`      | mu (identity), sigma (log)                        |
//! | `lognormal`   | mu of log y (identity), sigma of log y (log)      |
//! | `gamma`       | mean (log), shape (log)                           |
//! | `weibull`     | scale (log), shape (log)                          |
//! | `studentt`    | mu (identity), sigma (log), nu = 2 + exp(eta)     |
//! | `poisson`     | rate (log)                                        |
//! | `negbinomial` | mean (log), dispersion (log), var = m + a m^2     |
//! | `expectile`   | expectile (identity), asymmetric squared loss     |

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson as PoissonDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    beta_reg, digamma, gamma, gamma_lr, gamma_ur, ln_gamma, normal_cdf, normal_quantile,
    student_t_cdf, trigamma,
};

/// Lower clamp applied to every Hessian handed to the tree learner.
pub const HESSIAN_FLOOR: f64 = 1e-6;

/// Lower bound for every log-linked parameter on its natural scale.
pub const POSITIVE_FLOOR: f64 = 1e-6;

/// Tolerance of numeric quantile inversion: absolute, or relative for
/// quantiles smaller than 1 in magnitude.
pub const QUANTILE_TOL: f64 = 1e-10;

/// Stable family names, in catalogue order.
pub const FAMILY_NAMES: [&str; 8] = [
    "normal",
    "lognormal",
    "gamma",
    "weibull",
    "studentt",
    "poisson",
    "negbinomial",
    "expectile",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    /// theta = shift + exp(eta)
    ShiftedLog {
        shift: f64,
    },
}

impl Link {
    /// Natural scale to raw predictor scale.
    pub fn forward(&self, theta: f64) -> f64 {
        match *self {
            Link::Identity => theta,
            Link::Log => theta.ln(),
            Link::ShiftedLog { shift } => (theta - shift).ln(),
        }
    }

    /// Raw predictor scale to natural scale. Log links never go below
    /// [`POSITIVE_FLOOR`].
    pub fn inverse(&self, eta: f64) -> f64 {
        match *self {
            Link::Identity => eta,
            Link::Log => eta.exp().max(POSITIVE_FLOOR),
            Link::ShiftedLog { shift } => shift + eta.exp().max(POSITIVE_FLOOR),
        }
    }

    /// Smallest meaningful raw predictor, if bounded.
    pub fn eta_floor(&self) -> Option<f64> {
        match self {
            Link::Identity => None,
            _ => Some(POSITIVE_FLOOR.ln()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    Positive,
    NonNegativeInteger,
}

/// A response distribution. Families are stateless apart from the expectile
/// level of the expectile pseudo-family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Normal,
    LogNormal,
    Gamma,
    Weibull,
    StudentT,
    Poisson,
    NegativeBinomial,
    Expectile { tau: f64 },
}

/// Per-observation parameters on both scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Family {
    pub fn from_name(name: &str) -> Result<Family> {
        Ok(match name {
            "normal" => Family::Normal,
            "lognormal" => Family::LogNormal,
            "gamma" => Family::Gamma,
            "weibull" => Family::Weibull,
            "studentt" => Family::StudentT,
            "poisson" => Family::Poisson,
            "negbinomial" => Family::NegativeBinomial,
            "expectile" => Family::Expectile { tau: 0.5 },
            _ => {
                return Err(Error::UnknownFamily {
                    name: name.to_string(),
                    valid: FAMILY_NAMES.join(", "),
                })
            }
        })
    }

    pub fn expectile(tau: f64) -> Result<Family> {
        check_tau(tau)?;
        Ok(Family::Expectile { tau })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::LogNormal => "lognormal",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::StudentT => "studentt",
            Family::Poisson => "poisson",
            Family::NegativeBinomial => "negbinomial",
            Family::Expectile { .. } => "expectile",
        }
    }

    pub fn n_params(&self) -> usize {
        self.links().len()
    }

    pub fn links(&self) -> &'static [Link] {
        use Link::*;
        match self {
            Family::Normal | Family::LogNormal => &[Identity, Log],
            Family::Gamma | Family::Weibull | Family::NegativeBinomial => &[Log, Log],
            Family::StudentT => &[Identity, Log, ShiftedLog { shift: 2.0 }],
            Family::Poisson => &[Log],
            Family::Expectile { .. } => &[Identity],
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Family::Normal | Family::LogNormal => &["mu", "sigma"],
            Family::Gamma => &["mean", "shape"],
            Family::Weibull => &["scale", "shape"],
            Family::StudentT => &["mu", "sigma", "nu"],
            Family::Poisson => &["rate"],
            Family::NegativeBinomial => &["mean", "dispersion"],
            Family::Expectile { .. } => &["expectile"],
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Family::Normal | Family::StudentT | Family::Expectile { .. } => Support::Real,
            Family::LogNormal | Family::Gamma | Family::Weibull => Support::Positive,
            Family::Poisson | Family::NegativeBinomial => Support::NonNegativeInteger,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.support() == Support::NonNegativeInteger
    }

    pub fn in_support(&self, y: f64) -> bool {
        y.is_finite()
            && match self.support() {
                Support::Real => true,
                Support::Positive => y > 0.0,
                Support::NonNegativeInteger => y >= 0.0 && y.fract() == 0.0,
            }
    }

    pub fn check_support(&self, y: f64) -> Result<()> {
        if self.in_support(y) {
            Ok(())
        } else {
            Err(Error::SupportViolation {
                family: self.name().to_string(),
                y,
            })
        }
    }

    pub fn params_from_eta(&self, eta: &[f64]) -> Result<ParamVector> {
        if eta.len() != self.n_params() {
            return Err(Error::InvalidParams(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.n_params(),
                eta.len()
            )));
        }
        let theta = self.theta_from_eta(eta);
        self.validate_theta(&theta)?;
        Ok(ParamVector {
            eta: eta.to_vec(),
            theta,
        })
    }

    pub fn params_from_theta(&self, theta: &[f64]) -> Result<ParamVector> {
        if theta.len() != self.n_params() {
            return Err(Error::InvalidParams(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.n_params(),
                theta.len()
            )));
        }
        self.validate_theta(theta)?;
        let eta = self
            .links()
            .iter()
            .zip(theta)
            .map(|(l, &t)| l.forward(t))
            .collect();
        Ok(ParamVector {
            eta,
            theta: theta.to_vec(),
        })
    }

    pub(crate) fn theta_from_eta(&self, eta: &[f64]) -> Vec<f64> {
        self.links()
            .iter()
            .zip(eta)
            .map(|(l, &e)| l.inverse(e))
            .collect()
    }

    fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        for (k, (&t, link)) in theta.iter().zip(self.links()).enumerate() {
            let ok = t.is_finite()
                && match link {
                    Link::Identity => true,
                    Link::Log => t > 0.0,
                    Link::ShiftedLog { shift } => t > *shift,
                };
            if !ok {
                return Err(Error::InvalidParams(format!(
                    "{} parameter `{}` = {t}",
                    self.name(),
                    self.param_names()[k]
                )));
            }
        }
        Ok(())
    }

    /// `weight * -log f(y | theta)`. For the expectile pseudo-family this is
    /// the weighted asymmetric squared loss.
    pub fn nll(&self, y: f64, pv: &ParamVector, weight: f64) -> Result<f64> {
        self.check_support(y)?;
        self.validate_theta(&pv.theta)?;
        Ok(weight * self.nll_theta(y, &pv.theta))
    }

    /// Weighted gradient and Hessian of the NLL with respect to `eta_k`,
    /// Hessian clamped below at [`HESSIAN_FLOOR`].
    pub fn grad_hess(&self, y: f64, pv: &ParamVector, k: usize, weight: f64) -> Result<(f64, f64)> {
        let (g, h) = self.grad_hess_raw(y, pv, k, weight)?;
        Ok((g, h.max(HESSIAN_FLOOR)))
    }

    /// As [`Family::grad_hess`] without the Hessian clamp.
    pub fn grad_hess_raw(
        &self,
        y: f64,
        pv: &ParamVector,
        k: usize,
        weight: f64,
    ) -> Result<(f64, f64)> {
        if k >= self.n_params() {
            return Err(Error::InvalidParams(format!(
                "parameter index {k} out of range for {}",
                self.name()
            )));
        }
        self.check_support(y)?;
        self.validate_theta(&pv.theta)?;
        let (g, h) = self.grad_hess_theta(y, &pv.theta, k);
        Ok((weight * g, weight * h))
    }

    /// Unweighted NLL at natural parameters; no validation.
    pub(crate) fn nll_theta(&self, y: f64, th: &[f64]) -> f64 {
        match *self {
            Family::Normal => {
                let z = (y - th[0]) / th[1];
                0.5 * (2.0 * PI).ln() + th[1].ln() + 0.5 * z * z
            }
            Family::LogNormal => {
                let ly = y.ln();
                let z = (ly - th[0]) / th[1];
                0.5 * (2.0 * PI).ln() + th[1].ln() + 0.5 * z * z + ly
            }
            Family::Gamma => {
                let (m, a) = (th[0], th[1]);
                -a * a.ln() + a * m.ln() - (a - 1.0) * y.ln() + a * y / m + ln_gamma(a)
            }
            Family::Weibull => {
                let (lam, k) = (th[0], th[1]);
                let t = (k * (y.ln() - lam.ln())).exp();
                -k.ln() + k * lam.ln() - (k - 1.0) * y.ln() + t
            }
            Family::StudentT => {
                let (mu, s, nu) = (th[0], th[1], th[2]);
                let z = (y - mu) / s;
                -ln_gamma(0.5 * (nu + 1.0))
                    + ln_gamma(0.5 * nu)
                    + 0.5 * (nu * PI).ln()
                    + s.ln()
                    + 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
            }
            Family::Poisson => {
                let lam = th[0];
                lam - y * lam.ln() + ln_gamma(y + 1.0)
            }
            Family::NegativeBinomial => {
                let (mu, r) = (th[0], 1.0 / th[1]);
                -ln_rising(r, y) + ln_gamma(y + 1.0) + r * (mu / r).ln_1p() + y * (r / mu).ln_1p()
            }
            Family::Expectile { tau } => {
                let w = expectile_weight(tau, y, th[0]);
                w * (y - th[0]).powi(2)
            }
        }
    }

    /// Unweighted, unclamped derivatives with respect to `eta_k`.
    pub(crate) fn grad_hess_theta(&self, y: f64, th: &[f64], k: usize) -> (f64, f64) {
        match (*self, k) {
            (Family::Normal, _) => normal_grad_hess(y, th[0], th[1], k),
            (Family::LogNormal, _) => normal_grad_hess(y.ln(), th[0], th[1], k),
            (Family::Gamma, 0) => {
                let (m, a) = (th[0], th[1]);
                (a * (1.0 - y / m), a * y / m)
            }
            (Family::Gamma, _) => {
                let (m, a) = (th[0], th[1]);
                let d1 = -a.ln() - 1.0 + m.ln() - y.ln() + y / m + digamma(a);
                let d2 = trigamma(a) - 1.0 / a;
                (a * d1, a * d1 + a * a * d2)
            }
            (Family::Weibull, 0) => {
                let (lam, kk) = (th[0], th[1]);
                let t = (kk * (y.ln() - lam.ln())).exp();
                (kk * (1.0 - t), kk * kk * t)
            }
            (Family::Weibull, _) => {
                let (lam, kk) = (th[0], th[1]);
                let kl = kk * (y.ln() - lam.ln());
                let t = kl.exp();
                (-1.0 + kl * (t - 1.0), kl * (t - 1.0) + kl * kl * t)
            }
            (Family::StudentT, 0) => {
                let (mu, s, nu) = (th[0], th[1], th[2]);
                let r = y - mu;
                let d = nu * s * s + r * r;
                (
                    -(nu + 1.0) * r / d,
                    (nu + 1.0) * (nu * s * s - r * r) / (d * d),
                )
            }
            (Family::StudentT, 1) => {
                let (mu, s, nu) = (th[0], th[1], th[2]);
                let z = (y - mu) / s;
                let a = z * z / nu;
                (
                    1.0 - (nu + 1.0) * a / (1.0 + a),
                    2.0 * (nu + 1.0) * a / ((1.0 + a) * (1.0 + a)),
                )
            }
            (Family::StudentT, _) => {
                let (mu, s, nu) = (th[0], th[1], th[2]);
                let z2 = ((y - mu) / s).powi(2);
                let a = (z2 / nu).ln_1p();
                let a1 = -z2 / (nu * (nu + z2));
                let a2 = 1.0 / (nu * nu) - 1.0 / ((nu + z2) * (nu + z2));
                let d1 = -0.5 * digamma(0.5 * (nu + 1.0))
                    + 0.5 * digamma(0.5 * nu)
                    + 0.5 / nu
                    + 0.5 * a
                    + 0.5 * (nu + 1.0) * a1;
                let d2 = -0.25 * trigamma(0.5 * (nu + 1.0)) + 0.25 * trigamma(0.5 * nu)
                    - 0.5 / (nu * nu)
                    + a1
                    + 0.5 * (nu + 1.0) * a2;
                let sft = nu - 2.0;
                (sft * d1, sft * d1 + sft * sft * d2)
            }
            (Family::Poisson, _) => (th[0] - y, th[0]),
            (Family::NegativeBinomial, 0) => {
                let (mu, r) = (th[0], 1.0 / th[1]);
                (
                    r * (mu - y) / (r + mu),
                    mu * r * (r + y) / ((r + mu) * (r + mu)),
                )
            }
            (Family::NegativeBinomial, _) => {
                let (mu, r) = (th[0], 1.0 / th[1]);
                let d1 = -digamma_rising(r, y) + (mu / r).ln_1p() + (y - mu) / (r + mu);
                let d2 =
                    -trigamma_rising(r, y) - mu / (r * (r + mu)) + (mu - y) / ((r + mu) * (r + mu));
                (-r * d1, r * d1 + r * r * d2)
            }
            (Family::Expectile { tau }, _) => {
                let w = expectile_weight(tau, y, th[0]);
                (2.0 * w * (th[0] - y), 2.0 * w)
            }
        }
    }

    pub fn cdf(&self, y: f64, pv: &ParamVector) -> Result<f64> {
        self.validate_theta(&pv.theta)?;
        self.cdf_theta(y, &pv.theta)
    }

    pub(crate) fn cdf_theta(&self, y: f64, th: &[f64]) -> Result<f64> {
        let p = match *self {
            Family::Normal => normal_cdf((y - th[0]) / th[1]),
            Family::LogNormal => {
                if y <= 0.0 {
                    0.0
                } else {
                    normal_cdf((y.ln() - th[0]) / th[1])
                }
            }
            Family::Gamma => {
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(th[1], th[1] * y / th[0])
                }
            }
            Family::Weibull => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-(y / th[0]).powf(th[1])).exp_m1()
                }
            }
            Family::StudentT => student_t_cdf((y - th[0]) / th[1], th[2]),
            Family::Poisson => {
                if y < 0.0 {
                    0.0
                } else {
                    gamma_ur(y.floor() + 1.0, th[0])
                }
            }
            Family::NegativeBinomial => {
                if y < 0.0 {
                    0.0
                } else {
                    let r = 1.0 / th[1];
                    beta_reg(r, y.floor() + 1.0, r / (r + th[0]))
                }
            }
            Family::Expectile { .. } => return Err(Error::Unsupported("cdf", self.name().into())),
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// Density (continuous) or mass (discrete) at `y`.
    pub fn density(&self, y: f64, pv: &ParamVector) -> Result<f64> {
        if let Family::Expectile { .. } = self {
            return Err(Error::Unsupported("density", self.name().into()));
        }
        self.validate_theta(&pv.theta)?;
        if !self.in_support(y) {
            return Ok(0.0);
        }
        Ok((-self.nll_theta(y, &pv.theta)).exp())
    }

    pub fn quantile(&self, p: f64, pv: &ParamVector) -> Result<f64> {
        self.validate_theta(&pv.theta)?;
        self.quantile_theta(p, &pv.theta)
    }

    pub(crate) fn quantile_theta(&self, p: f64, th: &[f64]) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::BadProbability(p));
        }
        Ok(match *self {
            Family::Normal => th[0] + th[1] * normal_quantile(p),
            Family::LogNormal => (th[0] + th[1] * normal_quantile(p)).exp(),
            Family::Weibull => th[0] * (-(-p).ln_1p()).powf(1.0 / th[1]),
            Family::Gamma | Family::StudentT => self.bisect_quantile(p, th)?,
            Family::Poisson | Family::NegativeBinomial => self.discrete_quantile(p, th)?,
            Family::Expectile { .. } => {
                return Err(Error::Unsupported("quantile", self.name().into()))
            }
        })
    }

    /// Bracketed bisection on the CDF, bracket grown geometrically from the mean.
    fn bisect_quantile(&self, p: f64, th: &[f64]) -> Result<f64> {
        let centre = self.mean_theta(th);
        let mut step = self.variance_theta(th).sqrt().max(1e-8);
        let positive = self.support() == Support::Positive;
        let (mut lo, mut hi) = (centre, centre);
        while self.cdf_theta(lo, th)? > p {
            if positive {
                lo *= 0.5;
                if lo < f64::MIN_POSITIVE {
                    return Ok(0.0);
                }
            } else {
                lo -= step;
                step *= 2.0;
            }
        }
        step = self.variance_theta(th).sqrt().max(1e-8);
        while self.cdf_theta(hi, th)? < p {
            hi += step;
            step *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InvalidParams("quantile bracket diverged".into()));
            }
        }
        for _ in 0..2000 {
            // absolute tolerance, relative once the quantile is below 1
            if hi - lo <= QUANTILE_TOL * hi.abs().min(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf_theta(mid, th)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Smallest non-negative integer whose CDF reaches `p`.
    fn discrete_quantile(&self, p: f64, th: &[f64]) -> Result<f64> {
        if self.cdf_theta(0.0, th)? >= p {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = self.mean_theta(th).ceil().max(1.0);
        while self.cdf_theta(hi, th)? < p {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InvalidParams("quantile bracket diverged".into()));
            }
        }
        // invariant: cdf(lo) < p <= cdf(hi)
        while hi - lo > 1.0 {
            let mid = ((lo + hi) * 0.5).floor();
            if self.cdf_theta(mid, th)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn mean(&self, pv: &ParamVector) -> f64 {
        self.mean_theta(&pv.theta)
    }

    pub fn variance(&self, pv: &ParamVector) -> f64 {
        self.variance_theta(&pv.theta)
    }

    pub(crate) fn mean_theta(&self, th: &[f64]) -> f64 {
        match self {
            Family::Normal | Family::StudentT | Family::Expectile { .. } => th[0],
            Family::LogNormal => (th[0] + 0.5 * th[1] * th[1]).exp(),
            Family::Gamma | Family::Poisson | Family::NegativeBinomial => th[0],
            Family::Weibull => th[0] * gamma(1.0 + 1.0 / th[1]),
        }
    }

    pub(crate) fn variance_theta(&self, th: &[f64]) -> f64 {
        match self {
            Family::Normal => th[1] * th[1],
            Family::LogNormal => {
                let s2 = th[1] * th[1];
                s2.exp_m1() * (2.0 * th[0] + s2).exp()
            }
            Family::Gamma => th[0] * th[0] / th[1],
            Family::Weibull => {
                let g1 = gamma(1.0 + 1.0 / th[1]);
                th[0] * th[0] * (gamma(1.0 + 2.0 / th[1]) - g1 * g1)
            }
            Family::StudentT => th[1] * th[1] * th[2] / (th[2] - 2.0),
            Family::Poisson => th[0],
            Family::NegativeBinomial => th[0] + th[1] * th[0] * th[0],
            Family::Expectile { .. } => f64::NAN,
        }
    }

    /// One draw under a fixed seed.
    pub fn sample(&self, pv: &ParamVector, seed: u64) -> Result<f64> {
        self.validate_theta(&pv.theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_theta(&pv.theta, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, pv: &ParamVector, rng: &mut R) -> Result<f64> {
        self.sample_theta(&pv.theta, rng)
    }

    pub(crate) fn sample_theta<R: Rng + ?Sized>(&self, th: &[f64], rng: &mut R) -> Result<f64> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParams(e.to_string());
        Ok(match *self {
            Family::Normal => {
                let z: f64 = rng.sample(StandardNormal);
                th[0] + th[1] * z
            }
            Family::LogNormal => {
                let z: f64 = rng.sample(StandardNormal);
                (th[0] + th[1] * z).exp()
            }
            Family::Gamma => GammaDist::new(th[1], th[0] / th[1])
                .map_err(|e| bad(&e))?
                .sample(rng),
            Family::Weibull => {
                let u: f64 = rng.random();
                // inverse CDF with 1 - u in (0, 1]
                th[0] * (-(1.0 - u).ln()).powf(1.0 / th[1])
            }
            Family::StudentT => {
                let z: f64 = rng.sample(StandardNormal);
                let chi2 = GammaDist::new(0.5 * th[2], 2.0)
                    .map_err(|e| bad(&e))?
                    .sample(rng);
                th[0] + th[1] * z / (chi2 / th[2]).sqrt()
            }
            Family::Poisson => poisson_draw(th[0], rng)?,
            Family::NegativeBinomial => {
                let r = 1.0 / th[1];
                let lam = GammaDist::new(r, th[0] / r)
                    .map_err(|e| bad(&e))?
                    .sample(rng);
                poisson_draw(lam, rng)?
            }
            Family::Expectile { .. } => {
                return Err(Error::Unsupported("sampling", self.name().into()))
            }
        })
    }
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64> {
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    PoissonDist::new(lambda)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::InvalidParams(e.to_string()))
}

/// Counts up to this size use explicit sums for the rising-factorial terms,
/// which stay accurate when the negative binomial is close to Poisson.
const RISING_SUM_MAX: f64 = 64.0;

/// ln Gamma(r + y) - ln Gamma(r) for integer y >= 0.
fn ln_rising(r: f64, y: f64) -> f64 {
    if y <= RISING_SUM_MAX {
        (0..y as u32).map(|j| (r + f64::from(j)).ln()).sum()
    } else {
        ln_gamma(r + y) - ln_gamma(r)
    }
}

/// digamma(r + y) - digamma(r).
fn digamma_rising(r: f64, y: f64) -> f64 {
    if y <= RISING_SUM_MAX {
        (0..y as u32).map(|j| 1.0 / (r + f64::from(j))).sum()
    } else {
        digamma(r + y) - digamma(r)
    }
}

/// trigamma(r + y) - trigamma(r).
fn trigamma_rising(r: f64, y: f64) -> f64 {
    if y <= RISING_SUM_MAX {
        -(0..y as u32)
            .map(|j| (r + f64::from(j)).powi(-2))
            .sum::<f64>()
    } else {
        trigamma(r + y) - trigamma(r)
    }
}

fn normal_grad_hess(y: f64, mu: f64, sigma: f64, k: usize) -> (f64, f64) {
    if k == 0 {
        let s2 = sigma * sigma;
        ((mu - y) / s2, 1.0 / s2)
    } else {
        let z = (y - mu) / sigma;
        (1.0 - z * z, 2.0 * z * z)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::BadTau(tau))
    }
}

fn expectile_weight(tau: f64, y: f64, yhat: f64) -> f64 {
    if y > yhat {
        tau
    } else {
        1.0 - tau
    }
}

/// Asymmetric squared loss of an expectile prediction, with its gradient and
/// Hessian in `yhat`. Ties fall in the `y <= yhat` branch.
pub fn expectile_loss(tau: f64, y: f64, yhat: f64) -> Result<(f64, f64, f64)> {
    check_tau(tau)?;
    let w = expectile_weight(tau, y, yhat);
    Ok((w * (y - yhat).powi(2), 2.0 * w * (yhat - y), 2.0 * w))
}

/// Weighted mean anchored at the first value, exact for constant input.
pub(crate) fn anchored_mean(y: &[f64], w: Option<&[f64]>) -> f64 {
    let anchor = y[0];
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        num += wi * (v - anchor);
        den += wi;
    }
    anchor + num / den
}

const MLE_MAX_ITER: usize = 200;
const MLE_TOL: f64 = 1e-8;
const MLE_ACCEPT: f64 = 1e-4;

/// Intercept-only maximum likelihood fit, returned on the raw predictor scale.
///
/// Normal and LogNormal use the closed form. Every other family runs cyclic
/// one-parameter Newton steps (with step halving whenever the pooled NLL
/// would rise) on the weight-averaged NLL until the gradient's max-norm drops
/// below 1e-8 or 200 sweeps have run.
pub fn unconditional_mle(
    family: Family,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<ParamVector> {
    if y.len() < 2 {
        return Err(Error::TooFewRows {
            got: y.len(),
            needed: 2,
        });
    }
    for &v in y {
        family.check_support(v)?;
    }
    match family {
        Family::Normal | Family::LogNormal => {
            let t: Vec<f64> = if family == Family::LogNormal {
                y.iter().map(|v| v.ln()).collect()
            } else {
                y.to_vec()
            };
            let mu = anchored_mean(&t, weights);
            let (mut ss, mut den) = (0.0, 0.0);
            for (i, &v) in t.iter().enumerate() {
                let wi = weights.map_or(1.0, |w| w[i]);
                ss += wi * (v - mu) * (v - mu);
                den += wi;
            }
            let sigma = (ss / den).sqrt().max(POSITIVE_FLOOR);
            family.params_from_theta(&[mu, sigma])
        }
        _ => newton_mle(family, y, weights),
    }
}

fn starting_theta(family: Family, y: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    let mean = anchored_mean(y, weights);
    let (mut ss, mut den) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let wi = weights.map_or(1.0, |w| w[i]);
        ss += wi * (v - mean) * (v - mean);
        den += wi;
    }
    let var = (ss / den).max(POSITIVE_FLOOR * POSITIVE_FLOOR);
    match family {
        Family::Gamma => vec![mean, (mean * mean / var).clamp(1e-3, 1e6)],
        Family::Weibull => {
            let cv = var.sqrt() / mean;
            let k = cv.powf(-1.086).clamp(0.05, 1e3);
            vec![mean / gamma(1.0 + 1.0 / k), k]
        }
        Family::StudentT => vec![mean, (0.8 * var.sqrt()).max(POSITIVE_FLOOR), 10.0],
        Family::Poisson => vec![mean.max(POSITIVE_FLOOR)],
        Family::NegativeBinomial => {
            let m = mean.max(POSITIVE_FLOOR);
            vec![m, ((var - m) / (m * m)).clamp(1e-3, 1e3)]
        }
        Family::Expectile { .. } => vec![mean],
        Family::Normal | Family::LogNormal => unreachable!("closed form"),
    }
}

fn newton_mle(family: Family, y: &[f64], weights: Option<&[f64]>) -> Result<ParamVector> {
    let links = family.links();
    let k_params = family.n_params();
    let total_w: f64 = weights.map_or(y.len() as f64, |w| w.iter().sum());
    let mut eta: Vec<f64> = starting_theta(family, y, weights)
        .iter()
        .zip(links)
        .map(|(&t, l)| l.forward(t))
        .collect();

    let pooled = |eta: &[f64]| -> f64 {
        let th = family.theta_from_eta(eta);
        let s: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &v)| weights.map_or(1.0, |w| w[i]) * family.nll_theta(v, &th))
            .sum();
        s / total_w
    };
    let derivs = |eta: &[f64], k: usize| -> (f64, f64) {
        let th = family.theta_from_eta(eta);
        let (mut g, mut h) = (0.0, 0.0);
        for (i, &v) in y.iter().enumerate() {
            let wi = weights.map_or(1.0, |w| w[i]);
            let (gi, hi) = family.grad_hess_theta(v, &th, k);
            g += wi * gi;
            h += wi * hi;
        }
        (g / total_w, h / total_w)
    };
    // A parameter sitting on its floor with the gradient pushing further
    // down is at a boundary optimum.
    let projected = |eta: &[f64], k: usize, g: f64| -> f64 {
        match links[k].eta_floor() {
            Some(f) if eta[k] <= f && g > 0.0 => 0.0,
            _ => g,
        }
    };

    let mut current = pooled(&eta);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MLE_MAX_ITER {
        for k in 0..k_params {
            let (g, h) = derivs(&eta, k);
            if projected(&eta, k, g) == 0.0 {
                continue;
            }
            let mut step = if h > 0.0 { -g / h } else { -g };
            for _ in 0..60 {
                let mut trial = eta.clone();
                trial[k] += step;
                if let Some(f) = links[k].eta_floor() {
                    trial[k] = trial[k].max(f);
                }
                let value = pooled(&trial);
                if value.is_finite() && value <= current {
                    eta = trial;
                    current = value;
                    break;
                }
                step *= 0.5;
            }
        }
        grad_norm = (0..k_params)
            .map(|k| projected(&eta, k, derivs(&eta, k).0).abs())
            .fold(0.0, f64::max);
        if grad_norm < MLE_TOL {
            break;
        }
    }
    if grad_norm.is_nan() || grad_norm >= MLE_ACCEPT {
        return Err(Error::NoConvergence {
            iterations: MLE_MAX_ITER,
            grad_norm,
        });
    }
    family.params_from_eta(&eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pv(f: Family, theta: &[f64]) -> ParamVector {
        f.params_from_theta(theta).unwrap()
    }

    #[test]
    fn nll_closed_forms() {
        let n = pv(Family::Normal, &[0.0, 1.0]);
        assert!(
            (Family::Normal.nll(0.0, &n, 1.0).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-12
        );
        let p = pv(Family::Poisson, &[1.0]);
        assert!((Family::Poisson.nll(0.0, &p, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let g = pv(Family::Gamma, &[1.0, 2.0]);
        assert!(matches!(
            Family::Gamma.nll(-1.0, &g, 1.0),
            Err(Error::SupportViolation { .. })
        ));
        assert!(matches!(
            Family::Poisson.nll(1.5, &p, 1.0),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn normal_gradients_hand_derived() {
        let f = Family::Normal;
        let at = pv(f, &[1.0, 1.0]);
        let (g, h) = f.grad_hess(1.0, &at, 0, 1.0).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(h, 1.0);
        let (g, h) = f.grad_hess(2.0, &at, 0, 1.0).unwrap();
        assert_eq!((g, h), (-1.0, 1.0));
        let (g, h) = f.grad_hess(1.0, &at, 1, 1.0).unwrap();
        assert_eq!(g, 1.0);
        assert_eq!(h, HESSIAN_FLOOR);
        assert_eq!(f.grad_hess_raw(1.0, &at, 1, 1.0).unwrap().1, 0.0);
        let (g, _) = f.grad_hess(2.0, &at, 0, 3.0).unwrap();
        assert_eq!(g, -3.0);
    }

    #[test]
    fn invalid_theta_is_rejected() {
        let f = Family::Normal;
        let bad = ParamVector {
            eta: vec![0.0, 0.0],
            theta: vec![f64::NAN, 1.0],
        };
        assert!(matches!(
            f.nll(0.0, &bad, 1.0),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            f.params_from_theta(&[0.0, -1.0]),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn quantile_and_cdf_examples() {
        let n = pv(Family::Normal, &[0.0, 1.0]);
        assert_eq!(Family::Normal.quantile(0.5, &n).unwrap(), 0.0);
        let n = pv(Family::Normal, &[10.0, 2.0]);
        assert!(
            (Family::Normal.quantile(0.975, &n).unwrap() - 13.919_927_969_080_108).abs() < 1e-9
        );
        let p = pv(Family::Poisson, &[1.0]);
        assert!((Family::Poisson.cdf(0.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(
            Family::Normal.quantile(1.0, &n),
            Err(Error::BadProbability(1.0))
        );
        assert_eq!(
            Family::Normal.quantile(0.0, &n),
            Err(Error::BadProbability(0.0))
        );
    }

    #[test]
    fn discrete_quantiles_are_minimal() {
        for (f, th) in [
            (Family::Poisson, vec![3.7]),
            (Family::NegativeBinomial, vec![5.0, 0.4]),
        ] {
            let p = pv(f, &th);
            for &prob in &[0.01, 0.2, 0.5, 0.9, 0.999] {
                let q = f.quantile(prob, &p).unwrap();
                assert!(f.cdf(q, &p).unwrap() >= prob);
                if q > 0.0 {
                    assert!(f.cdf(q - 1.0, &p).unwrap() < prob);
                }
            }
        }
    }

    #[test]
    fn negbinomial_reduces_to_poisson() {
        let nb = pv(Family::NegativeBinomial, &[2.5, 1e-9]);
        let po = pv(Family::Poisson, &[2.5]);
        for y in 0..8 {
            let y = f64::from(y);
            let a = Family::NegativeBinomial.nll(y, &nb, 1.0).unwrap();
            let b = Family::Poisson.nll(y, &po, 1.0).unwrap();
            assert!((a - b).abs() < 1e-6, "y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn lognormal_shift_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let y: f64 = rng.random_range(0.01..50.0);
            let th = [rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0)];
            let a = Family::LogNormal
                .nll(y, &pv(Family::LogNormal, &th), 1.0)
                .unwrap();
            let b = Family::Normal
                .nll(y.ln(), &pv(Family::Normal, &th), 1.0)
                .unwrap();
            assert!((a - (b + y.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn expectile_loss_examples() {
        let (l, g, h) = expectile_loss(0.9, 1.0, 0.0).unwrap();
        assert!((l - 0.9).abs() < 1e-15 && (g + 1.8).abs() < 1e-15 && (h - 1.8).abs() < 1e-15);
        assert_eq!(
            expectile_loss(0.3, 2.0, 2.0).unwrap(),
            (0.0, 0.0, 2.0 * 0.7)
        );
        let (l, g, h) = expectile_loss(0.5, 3.0, 1.0).unwrap();
        assert_eq!((l, g, h), (2.0, -2.0, 1.0));
        assert_eq!(expectile_loss(1.0, 0.0, 0.0), Err(Error::BadTau(1.0)));
        assert_eq!(Family::expectile(0.0), Err(Error::BadTau(0.0)));
    }

    #[test]
    fn mle_closed_form_cases() {
        let p = unconditional_mle(Family::Normal, &[1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(p.theta, vec![1.0, POSITIVE_FLOOR]);
        let p = unconditional_mle(Family::Normal, &[0.0, 2.0], None).unwrap();
        assert_eq!(p.theta, vec![1.0, 1.0]);
        assert_eq!(p.eta, vec![1.0, 0.0]);
        assert!(matches!(
            unconditional_mle(Family::Gamma, &[1.0, -1.0], None),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn gamma_mle_recovers_truth() {
        let truth = pv(Family::Gamma, &[3.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..100_000)
            .map(|_| Family::Gamma.sample_with(&truth, &mut rng).unwrap())
            .collect();
        let fit = unconditional_mle(Family::Gamma, &y, None).unwrap();
        assert!((fit.theta[0] / 3.0 - 1.0).abs() < 0.02, "{:?}", fit.theta);
        assert!((fit.theta[1] / 2.0 - 1.0).abs() < 0.02, "{:?}", fit.theta);
    }

    #[test]
    fn newton_mle_recovers_other_families() {
        let cases = [
            (Family::Weibull, vec![2.0, 1.5]),
            (Family::StudentT, vec![1.0, 2.0, 5.0]),
            (Family::Poisson, vec![4.0]),
            (Family::NegativeBinomial, vec![6.0, 0.5]),
        ];
        for (f, th) in cases {
            let truth = pv(f, &th);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let y: Vec<f64> = (0..50_000)
                .map(|_| f.sample_with(&truth, &mut rng).unwrap())
                .collect();
            let fit = unconditional_mle(f, &y, None).unwrap();
            for (a, b) in fit.theta.iter().zip(&th) {
                assert!(
                    (a / b - 1.0).abs() < 0.08,
                    "{}: {:?} vs {:?}",
                    f.name(),
                    fit.theta,
                    th
                );
            }
        }
    }

    #[test]
    fn expectile_mle_is_expectile() {
        let y = [0.0, 1.0, 2.0, 3.0, 10.0];
        let fit = unconditional_mle(Family::Expectile { tau: 0.5 }, &y, None).unwrap();
        assert!((fit.theta[0] - 3.2).abs() < 1e-9);
    }

    #[test]
    fn weibull_sampler_matches_mean() {
        let f = Family::Weibull;
        let p = pv(f, &[2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let m = (0..n)
            .map(|_| f.sample_with(&p, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let se = f.variance(&p).sqrt() / (n as f64).sqrt();
        assert!((m - f.mean(&p)).abs() < 4.0 * se);
    }

    #[test]
    fn unknown_family_lists_valid_names() {
        let e = Family::from_name("gaussiann").unwrap_err();
        let msg = e.to_string();
        for n in FAMILY_NAMES {
            assert!(msg.contains(n));
        }
    }

    /// Random natural parameters inside a comfortable region of each family.
    pub(crate) fn random_theta<R: Rng>(f: Family, rng: &mut R) -> Vec<f64> {
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
            Family::NegativeBinomial => {
                vec![rng.random_range(0.3..30.0), rng.random_range(0.01..3.0)]
            }
            Family::Expectile { .. } => vec![rng.random_range(-5.0..5.0)],
        }
    }

    fn all_families() -> Vec<Family> {
        FAMILY_NAMES
            .iter()
            .map(|n| Family::from_name(n).unwrap())
            .chain([Family::Expectile { tau: 0.2 }])
            .collect()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for f in all_families() {
            for k in 0..f.n_params() {
                for _ in 0..200 {
                    let th = random_theta(f, &mut rng);
                    let at = pv(f, &th);
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
                    let g_fd = (f.nll(y, &up, 1.0).unwrap() - f.nll(y, &down, 1.0).unwrap())
                        / (2.0 * step);
                    let h_fd = (f.grad_hess_raw(y, &up, k, 1.0).unwrap().0
                        - f.grad_hess_raw(y, &down, k, 1.0).unwrap().0)
                        / (2.0 * step);
                    let (g, h) = f.grad_hess_raw(y, &at, k, 1.0).unwrap();
                    assert!(
                        rel(g, g_fd) < 1e-4,
                        "{} k={k} y={y} th={th:?}: g {g} vs {g_fd}",
                        f.name()
                    );
                    assert!(
                        rel(h, h_fd) < 1e-4,
                        "{} k={k} y={y} th={th:?}: h {h} vs {h_fd}",
                        f.name()
                    );
                    assert!(f.grad_hess(y, &at, k, 1.0).unwrap().1 >= HESSIAN_FLOOR);
                }
            }
        }
    }

    #[test]
    fn cdf_and_quantile_are_inverse_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let probs = [1e-4, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 0.9999];
        for f in all_families()
            .into_iter()
            .filter(|f| f.name() != "expectile")
        {
            for _ in 0..20 {
                let at = pv(f, &random_theta(f, &mut rng));
                let qs: Vec<f64> = probs.iter().map(|&p| f.quantile(p, &at).unwrap()).collect();
                assert!(qs.windows(2).all(|w| w[0] <= w[1]), "{} {qs:?}", f.name());
                if f.is_discrete() {
                    continue;
                }
                for (&p, &q) in probs.iter().zip(&qs) {
                    let c = f.cdf(q, &at).unwrap();
                    assert!((c - p).abs() < 1e-7, "{} p={p} cdf(q)={c}", f.name());
                }
                let mut ys: Vec<f64> = (0..20)
                    .map(|_| f.sample_with(&at, &mut rng).unwrap())
                    .collect();
                ys.sort_by(f64::total_cmp);
                let cs: Vec<f64> = ys.iter().map(|&y| f.cdf(y, &at).unwrap()).collect();
                assert!(cs.windows(2).all(|w| w[0] <= w[1]));
                for (&y, &c) in ys.iter().zip(&cs) {
                    if c > 1e-9 && c < 1.0 - 1e-9 {
                        let back = f.quantile(c, &at).unwrap();
                        assert!(
                            (back - y).abs() < 1e-8 * y.abs().max(1.0),
                            "{} y={y} back={back}",
                            f.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn normal_sample_mean() {
        let f = Family::Normal;
        let at = pv(f, &[3.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let m = (0..n)
            .map(|_| f.sample_with(&at, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((m - 3.0).abs() < 4.0 * 2.0 / (n as f64).sqrt());
        assert_eq!(f.sample(&at, 5).unwrap(), f.sample(&at, 5).unwrap());
    }
}
