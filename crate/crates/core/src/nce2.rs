//! Consistency fixed point of the mean-field resource-extraction game.
//!
//! Each firm accumulates running profit `f(x(t))` discounted at `beta` and
//! may abandon production at a fee, with relative-performance weighting
//! against the population average of accumulated profits. The limiting
//! problem is a perpetual down-crossing stopping problem whose value is
//! `A x^{k1} + p(x)` above the threshold, where `p` is the resolvent of
//! `f`. The three consistency equations reduce to a scalar equation for the
//! threshold alone, and the remaining unknowns follow in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::root;

/// Running-profit function; restricted to families whose resolvent has a
/// closed form so that smooth pasting stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfitFunction {
    /// `f(x) = c0 + c1 x`, nondecreasing for `c1 >= 0`.
    Affine { c0: f64, c1: f64 },
    /// `f(x) = c1 x^gamma`, nondecreasing for `c1 >= 0`, `gamma > 0`.
    Power { c1: f64, gamma: f64 },
}

impl ProfitFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ProfitFunction::Affine { c0, c1 } => c0 + c1 * x,
            ProfitFunction::Power { c1, gamma } => c1 * x.powf(gamma),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ProfitFunction::Affine { c0, c1 } => {
                if !c0.is_finite() || !c1.is_finite() {
                    return Err(Error::validation("profit", "coefficients must be finite"));
                }
                if c1 < 0.0 {
                    return Err(Error::validation("c1", "profit must be nondecreasing (c1 >= 0)"));
                }
            }
            ProfitFunction::Power { c1, gamma } => {
                if !c1.is_finite() || !gamma.is_finite() {
                    return Err(Error::validation("profit", "coefficients must be finite"));
                }
                if c1 < 0.0 {
                    return Err(Error::validation("c1", "profit must be nondecreasing (c1 >= 0)"));
                }
                if gamma <= 0.0 {
                    return Err(Error::validation("gamma", "power exponent must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Resolvent `p(x) = E int_0^inf e^{-beta t} f(x(t)) dt` and its
    /// derivative, in closed form.
    pub fn resolvent(&self, params: &MarketParams) -> Result<Resolvent> {
        self.validate()?;
        match *self {
            ProfitFunction::Affine { c0, c1 } => {
                // beta > alpha is enforced on MarketParams
                Ok(Resolvent::Affine { constant: c0 / params.beta, slope: c1 / (params.beta - params.alpha) })
            }
            ProfitFunction::Power { c1, gamma } => {
                let denom =
                    params.beta - params.alpha * gamma - 0.5 * params.sigma * params.sigma * gamma * (gamma - 1.0);
                if denom <= 0.0 {
                    return Err(Error::ResolventDivergence {
                        message: format!(
                            "beta - alpha*gamma - sigma^2 gamma (gamma-1)/2 = {denom} <= 0 for gamma = {gamma}"
                        ),
                    });
                }
                Ok(Resolvent::Power { coeff: c1 / denom, gamma })
            }
        }
    }
}

/// Closed-form resolvent evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolvent {
    Affine { constant: f64, slope: f64 },
    Power { coeff: f64, gamma: f64 },
}

impl Resolvent {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Resolvent::Affine { constant, slope } => constant + slope * x,
            Resolvent::Power { coeff, gamma } => coeff * x.powf(gamma),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Resolvent::Affine { slope, .. } => slope,
            Resolvent::Power { coeff, gamma } => coeff * gamma * x.powf(gamma - 1.0),
        }
    }
}

/// Solved fixed point of the extraction game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NceSolution2 {
    /// Coefficient of `x^{k1}` in the continuation value (0 if no stopping).
    pub coeff_a: f64,
    /// Down-crossing threshold in `(0, x0)`; absent when stopping never
    /// pays.
    pub x_star: Option<f64>,
    /// Effective weight.
    pub theta_bar2: f64,
    /// Adjusted fee `K / theta_bar2`.
    pub k_bar2: f64,
    /// Residuals of the three consistency equations at the solution.
    pub residuals: [f64; 3],
    /// True when no admissible threshold exists and agents never stop.
    pub no_stopping: bool,
}

/// Effective weight implied by a candidate threshold:
/// `theta_bar2 = -K k1 / (k1 p(x*) - p'(x*) x*)`.
fn theta_bar_of(x_star: f64, p: &Resolvent, params: &MarketParams, k1: f64) -> f64 {
    let inner = k1 * p.value(x_star) - p.derivative(x_star) * x_star;
    -params.k * k1 / inner
}

/// Scalar reduction of the consistency system: with `A` and `theta_bar2`
/// eliminated through the value-matching and smooth-pasting equations, the
/// remaining equation in the threshold alone reads
/// `p(x*)/(x*)^{k1} - p(x0)/x0^{k1}
///    + (1/(l2 x0^{k1})) [ (1-theta)/(theta_bar2(x*) - theta) - l1 ] = 0`.
pub fn scalar_equation_residual(
    x_star: f64,
    profit: &ProfitFunction,
    params: &MarketParams,
) -> Result<f64> {
    if x_star <= 0.0 || x_star >= params.x0 {
        return Err(Error::domain(
            "scalar_equation_residual",
            format!("x* must lie in (0, x0), got {x_star}"),
        ));
    }
    let p = profit.resolvent(params)?;
    let k1 = params.characteristic_roots().k1;
    let inner = k1 * p.value(x_star) - p.derivative(x_star) * x_star;
    if inner == 0.0 {
        return Err(Error::domain(
            "scalar_equation_residual",
            format!("k1 p(x*) - p'(x*) x* vanishes at x* = {x_star}"),
        ));
    }
    Ok(residual_unchecked(x_star, &p, params, k1))
}

fn residual_unchecked(x_star: f64, p: &Resolvent, params: &MarketParams, k1: f64) -> f64 {
    let tb = theta_bar_of(x_star, p, params, k1);
    p.value(x_star) / x_star.powf(k1) - p.value(params.x0) / params.x0.powf(k1)
        + ((1.0 - params.theta) / (tb - params.theta) - params.l1)
            / (params.l2 * params.x0.powf(k1))
}

/// Number of points in the threshold scan grid.
const SCAN_POINTS: usize = 200;
/// Acceptance tolerance on the consistency residuals.
const RESIDUAL_TOL: f64 = 1e-8;

/// Solve the consistency system for `(A, x*, theta_bar2)`.
///
/// The threshold is located as a root of [`scalar_equation_residual`] on a
/// log grid over `(1e-4 x0, x0)` followed by bisection; the other unknowns
/// then follow in closed form. No admissible root means stopping never
/// pays and the solution degenerates to the pure resolvent value
/// (`no_stopping = true`). More than one admissible root contradicts the
/// uniqueness of the fixed point and is surfaced as
/// [`Error::MultipleRoots`].
pub fn solve_system2(profit: &ProfitFunction, params: &MarketParams) -> Result<NceSolution2> {
    params.validate()?;
    let p = profit.resolvent(params)?;
    let roots = params.characteristic_roots();
    let k1 = roots.k1;

    let grid = root::geometric_grid(1e-4 * params.x0, params.x0 * (1.0 - 1e-9), SCAN_POINTS);
    let g = |x: f64| residual_unchecked(x, &p, params, k1);
    let brackets = root::sign_change_brackets(g, &grid);

    let mut admissible: Vec<(f64, (f64, f64))> = Vec::new();
    for &(lo, hi) in &brackets {
        let x_star = root::bisect(g, lo, hi, 0.0);
        let res = g(x_star);
        if !res.is_finite() || res.abs() > RESIDUAL_TOL {
            continue; // pole crossing, not a root
        }
        let tb = theta_bar_of(x_star, &p, params, k1);
        if !(tb.is_finite() && tb > params.theta && tb > 0.0) {
            continue;
        }
        admissible.push((x_star, (lo, hi)));
    }

    match admissible.len() {
        0 => {
            // never stopping: the population functional is the plain
            // resolvent at the start state
            let denom = params.l1 + params.l2 * p.value(params.x0);
            if denom <= 0.0 {
                return Err(Error::validation(
                    "l1",
                    format!("population functional denominator {denom} <= 0 with no stopping"),
                ));
            }
            let theta_bar2 = params.theta + (1.0 - params.theta) / denom;
            Ok(NceSolution2 {
                coeff_a: 0.0,
                x_star: None,
                theta_bar2,
                k_bar2: params.k / theta_bar2,
                residuals: [0.0; 3],
                no_stopping: true,
            })
        }
        1 => {
            let x_star = admissible[0].0;
            let coeff_a = -p.derivative(x_star) / (k1 * x_star.powf(k1 - 1.0));
            let theta_bar2 = theta_bar_of(x_star, &p, params, k1);
            let k_bar2 = params.k / theta_bar2;
            let residuals = system_residuals(coeff_a, x_star, theta_bar2, &p, params, k1);
            Ok(NceSolution2 {
                coeff_a,
                x_star: Some(x_star),
                theta_bar2,
                k_bar2,
                residuals,
                no_stopping: false,
            })
        }
        _ => Err(Error::MultipleRoots { brackets: admissible.iter().map(|a| a.1).collect() }),
    }
}

/// Residuals of the three consistency equations (value matching, smooth
/// pasting, population consistency) at a candidate solution.
pub fn system_residuals(
    coeff_a: f64,
    x_star: f64,
    theta_bar2: f64,
    p: &Resolvent,
    params: &MarketParams,
    k1: f64,
) -> [f64; 3] {
    let k_bar2 = params.k / theta_bar2;
    let eq1 = coeff_a * x_star.powf(k1) + p.value(x_star) + k_bar2;
    let eq2 = k1 * coeff_a * x_star.powf(k1 - 1.0) + p.derivative(x_star);
    let eq3 = coeff_a * params.x0.powf(k1) + p.value(params.x0)
        + k_bar2 * (x_star / params.x0).powf(-k1)
        - ((1.0 - params.theta) / (theta_bar2 - params.theta) - params.l1) / params.l2;
    [eq1, eq2, eq3]
}

/// Value of the limiting problem: `A x^{k1} + p(x)` in the continuation
/// region `x > x*`, the stopped value `-k_bar2` below, and `p(x)` everywhere
/// when stopping never pays.
pub fn value_function2(
    sol: &NceSolution2,
    profit: &ProfitFunction,
    params: &MarketParams,
    x: f64,
) -> Result<f64> {
    let p = profit.resolvent(params)?;
    match sol.x_star {
        None => Ok(p.value(x)),
        Some(x_star) => {
            let k1 = params.characteristic_roots().k1;
            if x > x_star {
                Ok(sol.coeff_a * x.powf(k1) + p.value(x))
            } else {
                Ok(-sol.k_bar2)
            }
        }
    }
}

/// Expected discounted profit accumulated until the stopping time:
/// `A x0^{k1} + p(x0) + k_bar2 (x*/x0)^{-k1}`, or `p(x0)` when the firm
/// never stops.
pub fn expected_running_profit(
    sol: &NceSolution2,
    profit: &ProfitFunction,
    params: &MarketParams,
) -> Result<f64> {
    let p = profit.resolvent(params)?;
    match sol.x_star {
        None => Ok(p.value(params.x0)),
        Some(x_star) => {
            let k1 = params.characteristic_roots().k1;
            Ok(sol.coeff_a * params.x0.powf(k1)
                + p.value(params.x0)
                + sol.k_bar2 * (x_star / params.x0).powf(-k1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Instance constructed by fixing x* = 1/4 and backing out the fee from
    /// the consistency equation: K = 256/261 exactly, and then
    /// A = 1/1536, theta_bar2 = 512/87, k_bar2 = 1/6.
    pub(crate) fn derived_instance() -> (ProfitFunction, MarketParams) {
        let f = ProfitFunction::Affine { c0: -1.0, c1: 1.0 };
        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, 256.0 / 261.0, 0.0, 0.0, 1.0).unwrap();
        (f, p)
    }

    #[test]
    fn resolvent_fixtures() {
        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let r = ProfitFunction::Affine { c0: 0.0, c1: 1.0 }.resolvent(&p).unwrap();
        assert!((r.value(2.0) - 1.0).abs() < 1e-15);
        assert!((r.derivative(2.0) - 0.5).abs() < 1e-15);

        let r = ProfitFunction::Affine { c0: 3.0, c1: 0.0 }.resolvent(&p).unwrap();
        assert!((r.value(5.0) - 1.0).abs() < 1e-15);

        let p0 = MarketParams::new(0.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let r = ProfitFunction::Power { c1: 1.0, gamma: 2.0 }.resolvent(&p0).unwrap();
        assert!((r.value(3.0) - 4.5).abs() < 1e-15);

        // integrability fails: beta - alpha*gamma - sigma^2 gamma(gamma-1)/2 = 0
        let err = ProfitFunction::Power { c1: 1.0, gamma: 2.0 }.resolvent(&p);
        assert!(matches!(err, Err(Error::ResolventDivergence { .. })));
    }

    #[test]
    fn scalar_residual_vanishes_on_derived_instance() {
        let (f, p) = derived_instance();
        let r = scalar_equation_residual(0.25, &f, &p).unwrap();
        assert!(r.abs() < 1e-12, "residual {r}");
        // continuous on the scan grid
        for &x in &root::geometric_grid(1e-4, 1.0 - 1e-9, 200) {
            assert!(scalar_equation_residual(x, &f, &p).unwrap().is_finite());
        }
        // sign change brackets the root
        let grid = root::geometric_grid(1e-4, 1.0 - 1e-9, 200);
        let br = root::sign_change_brackets(|x| scalar_equation_residual(x, &f, &p).unwrap(), &grid);
        assert!(br.iter().any(|&(lo, hi)| lo < 0.25 && 0.25 < hi));
    }

    #[test]
    fn solver_recovers_derived_instance() {
        let (f, p) = derived_instance();
        let sol = solve_system2(&f, &p).unwrap();
        assert!(!sol.no_stopping);
        let x_star = sol.x_star.unwrap();
        assert!((x_star - 0.25).abs() < 1e-9, "x* = {x_star}");
        assert!((sol.coeff_a - 1.0 / 1536.0).abs() < 1e-10);
        assert!((sol.k_bar2 - 1.0 / 6.0).abs() < 1e-9);
        assert!((sol.theta_bar2 - 512.0 / 87.0).abs() < 1e-7);
        for r in sol.residuals {
            assert!(r.abs() < 1e-8, "residuals {:?}", sol.residuals);
        }
    }

    #[test]
    fn strictly_positive_profit_never_stops() {
        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let f = ProfitFunction::Affine { c0: 0.0, c1: 1.0 };
        let sol = solve_system2(&f, &p).unwrap();
        assert!(sol.no_stopping);
        assert_eq!(sol.coeff_a, 0.0);
        assert!(sol.x_star.is_none());
        // theta_bar2 = theta + (1-theta)/(l1 + l2 p(x0)) = 1/p(1) = 2
        assert!((sol.theta_bar2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn expensive_fee_never_stops() {
        let f = ProfitFunction::Affine { c0: -1.0, c1: 1.0 };
        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, 100.0, 0.0, 0.0, 1.0).unwrap();
        let sol = solve_system2(&f, &p).unwrap();
        assert!(sol.no_stopping);
    }

    #[test]
    fn value_function_fixtures() {
        let (f, p) = derived_instance();
        let sol = solve_system2(&f, &p).unwrap();
        let v1 = value_function2(&sol, &f, &p, 1.0).unwrap();
        assert!((v1 - (1.0 / 1536.0 + 1.0 / 6.0)).abs() < 1e-9);
        // both branches meet at -k_bar2
        let xs = sol.x_star.unwrap();
        let above = value_function2(&sol, &f, &p, xs + 1e-12).unwrap();
        let below = value_function2(&sol, &f, &p, xs).unwrap();
        assert!((above - (-1.0 / 6.0)).abs() < 1e-8);
        assert!((below - (-sol.k_bar2)).abs() < 1e-15);

        // no-stopping case degenerates to the resolvent
        let fpos = ProfitFunction::Affine { c0: 0.0, c1: 1.0 };
        let ppos = MarketParams::new(1.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let sol = solve_system2(&fpos, &ppos).unwrap();
        assert_eq!(value_function2(&sol, &fpos, &ppos, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn running_profit_fixtures() {
        let (f, p) = derived_instance();
        let sol = solve_system2(&f, &p).unwrap();
        let value = expected_running_profit(&sol, &f, &p).unwrap();
        assert!((value - 0.169921875).abs() < 1e-9);
        // equals 1/theta_bar2 in the theta=0, l1=0, l2=1 specialization
        assert!((value - 1.0 / sol.theta_bar2).abs() < 1e-9);

        let fpos = ProfitFunction::Affine { c0: 0.0, c1: 1.0 };
        let ppos = MarketParams::new(1.0, 1.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let sol = solve_system2(&fpos, &ppos).unwrap();
        assert_eq!(expected_running_profit(&sol, &fpos, &ppos).unwrap(), 0.5);
    }

    #[test]
    fn closed_form_chain_reproduces_first_two_equations() {
        let (f, p) = derived_instance();
        let sol = solve_system2(&f, &p).unwrap();
        assert!(sol.residuals[0].abs() < 1e-12);
        assert!(sol.residuals[1].abs() < 1e-12);
    }
}
