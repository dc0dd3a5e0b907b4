//! Consistency fixed point of the mean-field best-time-to-sell game.
//!
//! Each agent stops a GBM against the fee `K`, but values the stopped state
//! relative to the population average of stopped states. In the infinite
//! population the average is deterministic, the payoff collapses to a
//! classical perpetual stopping problem with effective weight `theta_bar`
//! and adjusted fee `K / theta_bar`, and consistency pins `theta_bar` down
//! as the unique root of an increasing-vs-decreasing scalar equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpt::{Direction, HittingLaw};
use crate::market::MarketParams;
use crate::root;

/// Solved fixed point of the sale game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NceSolution1 {
    /// Effective weight; always exceeds `theta`.
    pub theta_bar: f64,
    /// Adjusted fee `K / theta_bar`.
    pub k_bar: f64,
    /// Stopping threshold `k_bar * k2 / (k2 - 1)`.
    pub x_star: f64,
    /// Coefficient of `x^{k2}` in the continuation value.
    pub value_coeff_b: f64,
    /// Consistency-equation residual at the returned `theta_bar`.
    pub residual: f64,
    /// Limiting equilibrium payoff `theta_bar * v(x0)`.
    pub limit_payoff: f64,
}

/// Left side of the consistency equation:
/// `l2 theta_bar^{k2-1} (K k2/(k2-1))^{1-k2} x0^{k2} + l1`, increasing in
/// `theta_bar`.
pub fn nce_lhs(theta_bar: f64, params: &MarketParams) -> f64 {
    let k2 = params.characteristic_roots().k2;
    let scale = params.k * k2 / (k2 - 1.0);
    params.l2 * theta_bar.powf(k2 - 1.0) * scale.powf(1.0 - k2) * params.x0.powf(k2) + params.l1
}

/// Right side `(1 - theta) / (theta_bar - theta)`, decreasing on
/// `theta_bar > theta`.
pub fn nce_rhs(theta_bar: f64, params: &MarketParams) -> Result<f64> {
    if theta_bar <= params.theta {
        return Err(Error::domain(
            "nce_rhs",
            format!("theta_bar = {theta_bar} must exceed theta = {}", params.theta),
        ));
    }
    Ok((1.0 - params.theta) / (theta_bar - params.theta))
}

/// Closed form for the `theta = 0, l1 = 0` specialization:
/// `theta_bar = x0^{-1} l2^{-1/k2} (K k2/(k2-1))^{(k2-1)/k2}`.
fn closed_form_theta_bar(params: &MarketParams) -> f64 {
    let k2 = params.characteristic_roots().k2;
    let scale = params.k * k2 / (k2 - 1.0);
    params.l2.powf(-1.0 / k2) * scale.powf((k2 - 1.0) / k2) / params.x0
}

/// Root of `nce_lhs - nce_rhs` by bisection with geometric bracket
/// expansion above `theta`.
fn bisection_theta_bar(params: &MarketParams) -> Result<f64> {
    let lo = params.theta + 1e-12;
    let g = |tb: f64| nce_lhs(tb, params) - (1.0 - params.theta) / (tb - params.theta);
    const MAX_HI: f64 = 1e12;
    root::bisect_with_expansion(g, lo, params.theta + 1.0, MAX_HI, 0.0).ok_or(Error::Bracket {
        op: "solve_theta_bar",
        lo,
        hi: MAX_HI,
    })
}

/// Solve the consistency condition and derive the decentralized threshold.
///
/// `theta = 1` short-circuits to the classical problem (the relative term
/// vanishes). An initial state already above the threshold is reported as
/// [`Error::InteriorStartViolation`]; the fixed point has no interior
/// solution there.
pub fn solve_theta_bar(params: &MarketParams) -> Result<NceSolution1> {
    params.validate()?;
    let k2 = params.characteristic_roots().k2;

    let (theta_bar, residual) = if params.theta == 1.0 {
        (1.0, 0.0)
    } else if params.theta == 0.0 && params.l1 == 0.0 {
        let cf = closed_form_theta_bar(params);
        let root = bisection_theta_bar(params)?;
        debug_assert!(
            (cf - root).abs() <= 1e-8 * cf.abs().max(1.0),
            "closed form {cf} disagrees with bisection {root}"
        );
        (cf, nce_lhs(cf, params) - nce_rhs(cf, params)?)
    } else {
        let tb = bisection_theta_bar(params)?;
        (tb, nce_lhs(tb, params) - nce_rhs(tb, params)?)
    };

    let k_bar = params.k / theta_bar;
    let x_star = k_bar * k2 / (k2 - 1.0);
    if params.x0 >= x_star {
        return Err(Error::InteriorStartViolation { x0: params.x0, x_star });
    }
    // mean-field denominator must stay positive when l1 = 0 is allowed
    let denom = params.l1 + params.l2 * x_star * (params.x0 / x_star).powf(k2);
    if denom <= 0.0 {
        return Err(Error::validation(
            "l1",
            format!("population functional denominator {denom} <= 0 at the fixed point"),
        ));
    }
    let value_coeff_b = 1.0 / (k2 * x_star.powf(k2 - 1.0));
    let limit_payoff = theta_bar * value_coeff_b * params.x0.powf(k2);
    Ok(NceSolution1 { theta_bar, k_bar, x_star, value_coeff_b, residual, limit_payoff })
}

/// Continuation/stopped value of the limiting problem:
/// `v(x) = x^{k2} / (k2 (x*)^{k2-1})` below the threshold, `x - k_bar`
/// above; the two branches paste smoothly at `x*`.
pub fn value_function1(sol: &NceSolution1, params: &MarketParams, x: f64) -> f64 {
    if x < sol.x_star {
        let k2 = params.characteristic_roots().k2;
        sol.value_coeff_b * x.powf(k2)
    } else {
        x - sol.k_bar
    }
}

/// A one-sided stop rule together with its hitting law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub x_star: f64,
    pub direction: Direction,
    pub law: HittingLaw,
}

/// The decentralized rule: stop at the first time the state reaches `x*`.
pub fn stopping_rule1(sol: &NceSolution1, params: &MarketParams) -> Result<ThresholdRule> {
    let law = HittingLaw::for_threshold(params, sol.x_star, Direction::Up)?;
    Ok(ThresholdRule { x_star: sol.x_star, direction: Direction::Up, law })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> MarketParams {
        MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn lhs_rhs_fixture() {
        let p = base();
        assert!((nce_lhs(2.0, &p) - 0.5).abs() < 1e-15);
        assert!((nce_rhs(2.0, &p).unwrap() - 0.5).abs() < 1e-15);
        // rhs decays to zero and blows up at theta+
        assert!(nce_rhs(1e9, &p).unwrap() < 1e-8);
        assert!(nce_rhs(1e-9, &p).unwrap() > 1e8);
        assert!(nce_rhs(0.0, &p).is_err());
        // lhs finite at theta+
        assert!(nce_lhs(1e-12, &p).is_finite());
    }

    #[test]
    fn closed_form_instance() {
        let sol = solve_theta_bar(&base()).unwrap();
        assert!((sol.theta_bar - 2.0).abs() < 1e-12);
        assert!((sol.k_bar - 1.0).abs() < 1e-12);
        assert!((sol.x_star - 2.0).abs() < 1e-12);
        assert!(sol.residual.abs() < 1e-10);
        assert!((sol.limit_payoff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn theta_one_short_circuit() {
        let p = MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.5, 1.0).unwrap();
        let sol = solve_theta_bar(&p).unwrap();
        assert_eq!(sol.theta_bar, 1.0);
        assert_eq!(sol.k_bar, p.k);
        assert!((sol.x_star - 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_with_k2_two() {
        let k = 0.5 * std::f64::consts::E;
        let p = MarketParams::new(1.0, 1.0, 3.0, 1.0, k, 0.0, 0.0, 1.0).unwrap();
        let sol = solve_theta_bar(&p).unwrap();
        let expect = std::f64::consts::E.sqrt();
        assert!((sol.theta_bar - expect).abs() < 1e-12);
        assert!((sol.x_star - expect).abs() < 1e-12);
        assert!(sol.residual.abs() < 1e-10);
    }

    #[test]
    fn value_function_fixtures() {
        let p = base();
        let sol = solve_theta_bar(&p).unwrap();
        assert!((value_function1(&sol, &p, 1.0) - 0.25).abs() < 1e-14);
        // continuity at the boundary: both branches equal k_bar/(k2-1)
        let left = sol.value_coeff_b * sol.x_star.powf(2.0);
        let right = sol.x_star - sol.k_bar;
        assert!((left - right).abs() < 1e-12);

        let p1 = MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.5, 1.0).unwrap();
        let sol1 = solve_theta_bar(&p1).unwrap();
        assert!((value_function1(&sol1, &p1, 2.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stopping_rule_fixtures() {
        let p = base();
        let sol = solve_theta_bar(&p).unwrap();
        let rule = stopping_rule1(&sol, &p).unwrap();
        assert!((rule.x_star - 2.0).abs() < 1e-12);
        assert!((rule.law.b_prime - 2f64.ln()).abs() < 1e-12);

        let p1 = MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.5, 1.0).unwrap();
        let sol1 = solve_theta_bar(&p1).unwrap();
        assert!((stopping_rule1(&sol1, &p1).unwrap().x_star - 4.0).abs() < 1e-12);

        // threshold equal to the start encodes immediate stopping
        let hand = NceSolution1 {
            theta_bar: 1.0,
            k_bar: 1.0,
            x_star: 1.0,
            value_coeff_b: 0.5,
            residual: 0.0,
            limit_payoff: 0.0,
        };
        assert_eq!(stopping_rule1(&hand, &p).unwrap().law.b_prime, 0.0);
    }

    #[test]
    fn interior_start_violation_is_reported() {
        // x*/x0 = sqrt(2K) < 1 for K < 1/2
        let p = MarketParams::new(0.0, 1.0, 1.0, 1.0, 0.4, 0.0, 0.0, 1.0).unwrap();
        match solve_theta_bar(&p) {
            Err(Error::InteriorStartViolation { x_star, .. }) => {
                assert!((x_star - 0.8f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("expected interior-start violation, got {other:?}"),
        }
        let p = MarketParams::new(0.0, 1.0, 1.0, 1.0, 0.4, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(solve_theta_bar(&p), Err(Error::InteriorStartViolation { .. })));
    }

    #[test]
    fn general_path_solves_mixed_weights() {
        let p = MarketParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 0.3, 0.7, 1.2).unwrap();
        let sol = solve_theta_bar(&p).unwrap();
        assert!(sol.theta_bar > 0.3);
        let lhs = nce_lhs(sol.theta_bar, &p);
        let rhs = nce_rhs(sol.theta_bar, &p).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!(sol.x_star > p.x0);
    }
}
