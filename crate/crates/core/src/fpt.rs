//! First-passage analytics for a Brownian motion crossing the linear
//! boundary `a' t + b'`.
//!
//! Threshold rules for the GBM state reduce to this problem on the log
//! scale: an up-crossing of `x*` from `x0 < x*` maps to the boundary with
//! `a' = sigma/2 - alpha/sigma` and `b' = ln(x*/x0)/sigma`. When `a' < 0`
//! the hitting time is inverse Gaussian `IG(b'/(-a'), b'^2)`; when `a' > 0`
//! the law is defective with mass `1 - exp(-2 a' b')` at infinity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{lambda_roots, MarketParams};

/// Which side of the threshold the state starts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Stop when the state first rises to the threshold.
    Up,
    /// Stop when the state first falls to the threshold.
    Down,
}

/// Standard normal CDF.
pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// log of the standard normal CDF, stable far into the left tail where the
/// direct CDF underflows.
pub(crate) fn ln_norm_cdf(z: f64) -> f64 {
    if z > -8.0 {
        norm_cdf(z).ln()
    } else {
        // asymptotic expansion of Mills' ratio
        let zi = 1.0 / (z * z);
        let series = 1.0 - zi * (1.0 - 3.0 * zi * (1.0 - 5.0 * zi));
        -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

/// Hitting problem of the line `a' t + b'` by a standard Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingLaw {
    /// Boundary slope; the boundary runs away from the path when positive.
    pub a_prime: f64,
    /// Boundary intercept, >= 0. Zero encodes immediate stopping.
    pub b_prime: f64,
}

impl HittingLaw {
    pub fn new(a_prime: f64, b_prime: f64) -> Result<Self> {
        if !a_prime.is_finite() || !b_prime.is_finite() {
            return Err(Error::domain("HittingLaw::new", "a', b' must be finite"));
        }
        if b_prime < 0.0 {
            return Err(Error::domain(
                "HittingLaw::new",
                format!("b' = {b_prime} < 0; the boundary must start above the path"),
            ));
        }
        Ok(HittingLaw { a_prime, b_prime })
    }

    /// Law of the stopping time of a threshold rule under `params`.
    ///
    /// `Up` requires `x0 <= x_star` and yields the boundary
    /// `(sigma/2 - alpha/sigma, ln(x_star/x0)/sigma)`. `Down` requires
    /// `x0 >= x_star` and returns the reflected problem, whose discounted
    /// factor is `(x_star/x0)^(-k1)`.
    pub fn for_threshold(params: &MarketParams, x_star: f64, direction: Direction) -> Result<Self> {
        if x_star <= 0.0 || !x_star.is_finite() {
            return Err(Error::domain("for_threshold", format!("x* must be positive, got {x_star}")));
        }
        let a = params.a_prime();
        match direction {
            Direction::Up => {
                if params.x0 > x_star {
                    return Err(Error::domain(
                        "for_threshold",
                        format!("up-crossing needs x0 <= x*, got x0 = {} > x* = {x_star}", params.x0),
                    ));
                }
                HittingLaw::new(a, (x_star / params.x0).ln() / params.sigma)
            }
            Direction::Down => {
                if params.x0 < x_star {
                    return Err(Error::domain(
                        "for_threshold",
                        format!("down-crossing needs x0 >= x*, got x0 = {} < x* = {x_star}", params.x0),
                    ));
                }
                HittingLaw::new(-a, (params.x0 / x_star).ln() / params.sigma)
            }
        }
    }

    /// Probability that the boundary is ever reached.
    pub fn hit_prob(&self) -> f64 {
        if self.a_prime <= 0.0 {
            1.0
        } else {
            (-2.0 * self.a_prime * self.b_prime).exp()
        }
    }

    /// `E[e^{-s tau}]` for `s > 0`; the event `{tau = inf}` contributes zero.
    pub fn discounted_factor(&self, s: f64) -> f64 {
        let (_, lambda_plus) = lambda_roots(self.a_prime, s)
            .expect("discriminant positive for s >= 0");
        (-lambda_plus * self.b_prime).exp()
    }

    /// Moment generating function `E[e^{t tau}]` on `{tau < inf}`,
    /// defined for `t <= a'^2 / 2`.
    pub fn mgf(&self, t: f64) -> Result<f64> {
        let half_sq = 0.5 * self.a_prime * self.a_prime;
        if t > half_sq {
            return Err(Error::domain(
                "mgf",
                format!("t = {t} exceeds a'^2/2 = {half_sq}; the MGF diverges"),
            ));
        }
        let (_, lambda_plus) = lambda_roots(self.a_prime, -t)?;
        Ok((-lambda_plus * self.b_prime).exp())
    }

    /// Mean of the hitting time; requires a proper law (`a' < 0`).
    pub fn mean(&self) -> Result<f64> {
        if self.a_prime >= 0.0 {
            return Err(Error::domain(
                "tau_mean",
                format!("a' = {} >= 0: the law has no finite mean", self.a_prime),
            ));
        }
        Ok(self.b_prime / -self.a_prime)
    }

    /// Variance of the hitting time; requires a proper law (`a' < 0`).
    pub fn var(&self) -> Result<f64> {
        if self.a_prime >= 0.0 {
            return Err(Error::domain(
                "tau_var",
                format!("a' = {} >= 0: the law has no finite variance", self.a_prime),
            ));
        }
        let m = -self.a_prime;
        Ok(self.b_prime / (m * m * m))
    }

    /// Inverse Gaussian parameters `(mu, rho) = (b'/(-a'), b'^2)` of a
    /// proper, non-degenerate law.
    pub fn ig_params(&self) -> Result<IgParams> {
        if self.a_prime >= 0.0 {
            return Err(Error::domain(
                "ig_params",
                format!("a' = {} >= 0: the hitting law is defective", self.a_prime),
            ));
        }
        if self.b_prime <= 0.0 {
            return Err(Error::domain("ig_params", "b' = 0: the stopping time is identically zero"));
        }
        Ok(IgParams { mu: self.b_prime / -self.a_prime, rho: self.b_prime * self.b_prime })
    }

    /// `P(tau <= t)`; a sub-distribution plateauing at `hit_prob` when the
    /// law is defective.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if self.b_prime == 0.0 {
            return 1.0;
        }
        let nu = -self.a_prime;
        let sq = t.sqrt();
        let term1 = norm_cdf((nu * t - self.b_prime) / sq);
        let z2 = (-nu * t - self.b_prime) / sq;
        let term2 = (2.0 * nu * self.b_prime + ln_norm_cdf(z2)).exp();
        (term1 + term2).min(1.0)
    }

    /// Density of the finite part of the law at `t > 0`; underflows to 0.
    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 || self.b_prime == 0.0 {
            return 0.0;
        }
        let d = self.b_prime + self.a_prime * t;
        self.b_prime / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-d * d / (2.0 * t)).exp()
    }

    /// Exact draw of the hitting time; `f64::INFINITY` when the boundary is
    /// never reached.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.b_prime;
        if b == 0.0 {
            return 0.0;
        }
        let a = self.a_prime;
        if a < 0.0 {
            sample_ig(rng, b / -a, b * b)
        } else if a > 0.0 {
            let u: f64 = rng.gen();
            if u > self.hit_prob() {
                f64::INFINITY
            } else {
                // conditioned on hitting, the drift flips toward the boundary
                sample_ig(rng, b / a, b * b)
            }
        } else {
            // zero slope: reflection gives tau = (b/Z)^2, Z standard normal
            let z: f64 = rng.sample(StandardNormal);
            (b / z) * (b / z)
        }
    }
}

/// Michael–Schucany–Haas transformation: one normal and one uniform per
/// inverse Gaussian draw.
fn sample_ig<R: Rng + ?Sized>(rng: &mut R, mu: f64, lambda: f64) -> f64 {
    let v: f64 = rng.sample(StandardNormal);
    let y = v * v;
    let x = mu + mu * mu * y / (2.0 * lambda)
        - mu / (2.0 * lambda) * (4.0 * mu * lambda * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// Inverse Gaussian law `IG(mu, rho)`: mean `mu`, shape `rho`, variance
/// `mu^3 / rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgParams {
    pub mu: f64,
    pub rho: f64,
}

impl IgParams {
    pub fn new(mu: f64, rho: f64) -> Result<Self> {
        if mu <= 0.0 || rho <= 0.0 || mu.is_nan() || rho.is_nan() {
            return Err(Error::domain("IgParams::new", format!("need mu > 0, rho > 0; got ({mu}, {rho})")));
        }
        Ok(IgParams { mu, rho })
    }

    pub fn variance(&self) -> f64 {
        self.mu * self.mu * self.mu / self.rho
    }

    /// The equivalent linear-boundary hitting problem.
    pub fn as_hitting_law(&self) -> HittingLaw {
        let b = self.rho.sqrt();
        HittingLaw { a_prime: -b / self.mu, b_prime: b }
    }

    /// Density at `t > 0`.
    pub fn pdf(&self, t: f64) -> Result<f64> {
        Ok(self.ln_pdf(t)?.exp())
    }

    /// Log-density at `t > 0`.
    pub fn ln_pdf(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::domain("ig_pdf", format!("density defined on t > 0, got {t}")));
        }
        let d = t - self.mu;
        Ok(0.5 * (self.rho / (2.0 * std::f64::consts::PI * t * t * t)).ln()
            - self.rho * d * d / (2.0 * self.mu * self.mu * t))
    }

    /// Distribution function, built from Gaussian CDFs.
    pub fn cdf(&self, t: f64) -> f64 {
        self.as_hitting_law().cdf(t)
    }

    /// Quantile by bisection on the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::domain("ig_quantile", format!("p must lie in [0, 1), got {p}")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let mut hi = self.mu + 10.0 * self.variance().sqrt();
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        Ok(crate::root::bisect(|t| self.cdf(t) - p, 0.0, hi, 1e-13 * hi.max(1.0)))
    }

    /// Exact draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_ig(rng, self.mu, self.rho / self.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(a: f64, b: f64) -> HittingLaw {
        HittingLaw::new(a, b).unwrap()
    }

    #[test]
    fn discounted_factor_fixtures() {
        // e^{-2 ln 2} = 1/4
        let v = law(0.5, 2f64.ln()).discounted_factor(1.0);
        assert!((v - 0.25).abs() < 1e-14);
        // immediate stop
        assert_eq!(law(-0.3, 0.0).discounted_factor(2.0), 1.0);
        // lambda_+ = 2 at (a' = -1/2, s = 3)
        let v = law(-0.5, 0.5).discounted_factor(3.0);
        assert!((v - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn mgf_fixtures() {
        let l = law(-0.5, 0.5);
        assert!((l.mgf(0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((l.mgf(-3.0).unwrap() - l.discounted_factor(3.0)).abs() < 1e-15);
        // discriminant boundary: lambda_+ = -1/2, so E e^{t tau} = e^{1/4}
        assert!((l.mgf(0.125).unwrap() - 0.25f64.exp()).abs() < 1e-14);
        assert!(l.mgf(0.2).is_err());
    }

    #[test]
    fn moments_fixtures() {
        let l = law(-0.5, 0.5);
        assert!((l.mean().unwrap() - 1.0).abs() < 1e-14);
        assert!((l.var().unwrap() - 4.0).abs() < 1e-14);
        let l = law(-1.0, 1.0);
        assert!((l.mean().unwrap() - 1.0).abs() < 1e-14);
        assert!((l.var().unwrap() - 1.0).abs() < 1e-14);
        let l = law(-0.5, 0.0);
        assert_eq!(l.mean().unwrap(), 0.0);
        assert_eq!(l.var().unwrap(), 0.0);
        assert!(law(0.5, 1.0).mean().is_err());
    }

    #[test]
    fn ig_params_fixtures() {
        let p = law(-0.5, 0.5).ig_params().unwrap();
        assert!((p.mu - 1.0).abs() < 1e-14 && (p.rho - 0.25).abs() < 1e-14);
        let p = law(-1.0, 2.0).ig_params().unwrap();
        assert!((p.mu - 2.0).abs() < 1e-14 && (p.rho - 4.0).abs() < 1e-14);
        let p = law(-0.25, 1.0).ig_params().unwrap();
        assert!((p.mu - 4.0).abs() < 1e-14 && (p.rho - 1.0).abs() < 1e-14);
        // variance identity mu^3 / rho
        assert!((p.variance() - law(-0.25, 1.0).var().unwrap()).abs() < 1e-14);
        assert!(law(0.1, 1.0).ig_params().is_err());
        assert!(law(-0.1, 0.0).ig_params().is_err());
    }

    #[test]
    fn ig_pdf_fixtures() {
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let p = IgParams::new(1.0, 1.0).unwrap();
        assert!((p.pdf(1.0).unwrap() - inv_sqrt_2pi).abs() < 1e-15);
        let p = IgParams::new(1.0, 0.25).unwrap();
        assert!((p.pdf(1.0).unwrap() - 0.5 * inv_sqrt_2pi).abs() < 1e-15);
        assert!(p.pdf(0.0).is_err());
        assert!(p.pdf(-1.0).is_err());
        // extreme arguments underflow rather than erroring
        assert_eq!(p.pdf(1e-12).unwrap(), 0.0);
        assert_eq!(p.pdf(1e18).unwrap(), 0.0);
    }

    #[test]
    fn threshold_mapping() {
        let p = MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 1.0).unwrap();
        let l = HittingLaw::for_threshold(&p, 2.0, Direction::Up).unwrap();
        assert!((l.a_prime - 0.5).abs() < 1e-15);
        assert!((l.b_prime - 2f64.ln()).abs() < 1e-15);

        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let l = HittingLaw::for_threshold(&p, 1.0, Direction::Up).unwrap();
        assert_eq!(l.b_prime, 0.0);

        // E e^{-beta tau} = (x*/x0)^{-k1} = 0.25^3 for the down-crossing
        let l = HittingLaw::for_threshold(&p, 0.25, Direction::Down).unwrap();
        assert!((l.discounted_factor(3.0) - 0.25f64.powi(3)).abs() < 1e-14);

        assert!(HittingLaw::for_threshold(&p, 0.5, Direction::Up).is_err());
        assert!(HittingLaw::for_threshold(&p, 2.0, Direction::Down).is_err());
    }

    #[test]
    fn hit_prob_matches_slope_sign() {
        assert_eq!(law(-0.5, 1.0).hit_prob(), 1.0);
        assert_eq!(law(0.0, 1.0).hit_prob(), 1.0);
        // exp(-2 a' b') = exp(-ln 2) = 1/2; cross-check: a GBM with
        // alpha = 0, sigma = 1 reaches 2 from 1 with probability
        // (x0/x*)^(2 |alpha - sigma^2/2| / sigma^2) = 1/2
        let l = law(0.5, 2f64.ln());
        assert!((l.hit_prob() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_limits_and_median_consistency() {
        let l = law(-0.5, 0.5);
        assert_eq!(l.cdf(0.0), 0.0);
        assert!((l.cdf(1e6) - 1.0).abs() < 1e-12);
        let p = l.ig_params().unwrap();
        let med = p.quantile(0.5).unwrap();
        assert!((p.cdf(med) - 0.5).abs() < 1e-10);
        // defective law plateaus at the hit probability
        let d = law(0.5, 2f64.ln());
        assert!((d.cdf(1e8) - d.hit_prob()).abs() < 1e-12);
    }

    #[test]
    fn sample_degenerate_cases() {
        let mut rng = crate::rng::stream(7, crate::rng::StreamKind::Sampling, 0, 0);
        assert_eq!(law(0.4, 0.0).sample(&mut rng), 0.0);
        assert_eq!(law(-0.4, 0.0).sample(&mut rng), 0.0);
        let v = law(0.0, 1.0).sample(&mut rng);
        assert!(v.is_finite() && v > 0.0);
    }
}
