//! Homogeneous agent market parameters and the characteristic roots of the
//! discounted GBM stopping operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients shared by every agent in the population.
///
/// The state follows a geometric Brownian motion
/// `dx = alpha x dt + sigma x dW`, stopped against a fixed transaction fee
/// `K` and discounted at `beta`. The payoff blends absolute and relative
/// performance with convex weight `theta`; the relative term is taken
/// against the affine population functional `l1 + l2 * average`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Drift rate (1/time).
    pub alpha: f64,
    /// Volatility (1/sqrt(time)), > 0.
    pub sigma: f64,
    /// Discount rate (1/time), > alpha.
    pub beta: f64,
    /// Initial state (price units), > 0.
    pub x0: f64,
    /// Transaction fee (price units), > 0.
    #[serde(rename = "K")]
    pub k: f64,
    /// Convex weight on absolute performance, in [0, 1].
    pub theta: f64,
    /// Affine tax basis, >= 0.
    pub l1: f64,
    /// Tax slope, > 0.
    pub l2: f64,
}

impl MarketParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        sigma: f64,
        beta: f64,
        x0: f64,
        k: f64,
        theta: f64,
        l1: f64,
        l2: f64,
    ) -> Result<Self> {
        let p = MarketParams { alpha, sigma, beta, x0, k, theta, l1, l2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, field: &'static str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, "must be finite"))
            }
        };
        finite(self.alpha, "alpha")?;
        finite(self.sigma, "sigma")?;
        finite(self.beta, "beta")?;
        finite(self.x0, "x0")?;
        finite(self.k, "K")?;
        finite(self.theta, "theta")?;
        finite(self.l1, "l1")?;
        finite(self.l2, "l2")?;
        if self.sigma <= 0.0 {
            return Err(Error::validation("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if self.x0 <= 0.0 {
            return Err(Error::validation("x0", format!("must be > 0, got {}", self.x0)));
        }
        if self.k <= 0.0 {
            return Err(Error::validation("K", format!("must be > 0, got {}", self.k)));
        }
        if self.beta <= 0.0 {
            return Err(Error::validation("beta", format!("must be > 0, got {}", self.beta)));
        }
        if self.beta <= self.alpha {
            return Err(Error::validation(
                "beta",
                format!(
                    "must exceed alpha for a well-posed stopping problem (beta = {}, alpha = {})",
                    self.beta, self.alpha
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::validation("theta", format!("must lie in [0, 1], got {}", self.theta)));
        }
        if self.l1 < 0.0 {
            return Err(Error::validation("l1", format!("must be >= 0, got {}", self.l1)));
        }
        if self.l2 <= 0.0 {
            return Err(Error::validation("l2", format!("must be > 0, got {}", self.l2)));
        }
        Ok(())
    }

    /// Boundary slope `a' = sigma/2 - alpha/sigma` of the shifted Brownian
    /// hitting problem.
    pub fn a_prime(&self) -> f64 {
        0.5 * self.sigma - self.alpha / self.sigma
    }

    /// Roots of `sigma^2/2 k^2 + (alpha - sigma^2/2) k - beta = 0`.
    pub fn characteristic_roots(&self) -> CharacteristicRoots {
        CharacteristicRoots::from_params(self)
    }
}

/// The two real roots of the characteristic quadratic, `k1 < 0 < 1 < k2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRoots {
    pub k1: f64,
    pub k2: f64,
}

impl CharacteristicRoots {
    /// Stable quadratic formula: q = -(b + sign(b) sqrt(b^2 - 4ac))/2 and
    /// the root pair (q/a, c/q), avoiding cancellation for small `beta`.
    pub fn from_params(params: &MarketParams) -> Self {
        let a = 0.5 * params.sigma * params.sigma;
        let b = params.alpha - 0.5 * params.sigma * params.sigma;
        let c = -params.beta;
        // beta > 0 makes the discriminant strictly positive
        let disc = (b * b - 4.0 * a * c).sqrt();
        let q = -0.5 * (b + b.signum() * disc);
        let (r1, r2) = if q == 0.0 {
            // b == 0 exactly: symmetric roots
            (-(-c / a).sqrt(), (-c / a).sqrt())
        } else {
            (q / a, c / q)
        };
        let (k1, k2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        CharacteristicRoots { k1, k2 }
    }

    /// Residual of the characteristic quadratic at `k`, relative to the
    /// size of its terms.
    pub fn relative_residual(&self, params: &MarketParams, k: f64) -> f64 {
        let a = 0.5 * params.sigma * params.sigma;
        let b = params.alpha - 0.5 * params.sigma * params.sigma;
        let c = -params.beta;
        let value = a * k * k + b * k + c;
        let scale = (a * k * k).abs() + (b * k).abs() + c.abs();
        value.abs() / scale.max(f64::MIN_POSITIVE)
    }
}

/// Roots `lambda = a' +- sqrt(a'^2 + 2 s)` of `lambda^2 - 2 a' lambda - 2 s = 0`.
///
/// For `s = beta` these coincide with `(k1 sigma, k2 sigma)`; with `s = -t`
/// they drive the moment generating function of the hitting time.
pub fn lambda_roots(a_prime: f64, s: f64) -> Result<(f64, f64)> {
    let disc = a_prime * a_prime + 2.0 * s;
    if disc < 0.0 {
        return Err(Error::domain(
            "lambda_roots",
            format!("a'^2 + 2s = {disc} < 0 (a' = {a_prime}, s = {s})"),
        ));
    }
    let root = disc.sqrt();
    Ok((a_prime - root, a_prime + root))
}
