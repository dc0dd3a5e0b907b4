//! Finite-population Monte Carlo: equilibrium payoffs, deviation gaps and
//! distributional diagnostics.
//!
//! Replications are independent work units executed in parallel; every
//! (replication, agent) cell draws from its own counter-derived RNG stream
//! and results are reduced in index order, so reports are bit-identical
//! for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpt::{Direction, HittingLaw};
use crate::market::MarketParams;
use crate::nce1::{stopping_rule1, NceSolution1};
use crate::nce2::{expected_running_profit, solve_system2, value_function2, ProfitFunction};
use crate::quad;
use crate::rng::{stream, StreamKind};

/// Which game the population plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    /// Best-time-to-sell with relative stopped-value performance.
    I,
    /// Resource extraction with relative running-profit performance.
    II,
}

/// Monte Carlo run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Population size, >= 2.
    pub n_agents: usize,
    /// Independent replications, >= 1.
    pub n_reps: usize,
    /// Master seed; all streams derive from it.
    pub seed: u64,
    /// Candidate thresholds for the deviating agent (may be empty).
    #[serde(default)]
    pub deviation_grid: Vec<f64>,
    /// Game selector.
    pub problem: Problem,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::validation("n_agents", format!("need at least 2 agents, got {}", self.n_agents)));
        }
        if self.n_reps < 1 {
            return Err(Error::validation("n_reps", "need at least one replication"));
        }
        if self.deviation_grid.iter().any(|&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::validation("deviation_grid", "all candidate thresholds must be > 0"));
        }
        Ok(())
    }
}

/// A Monte Carlo mean with its standard error (absent for a single
/// replication, where no error estimate exists).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: Option<f64>,
}

fn mean_and_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate { mean, se: None };
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Estimate { mean, se: Some((var / n as f64).sqrt()) }
}

fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Some(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Deviation-gap estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// Mean over replications of the floored best-response advantage.
    pub gap: f64,
    /// Standard error across replications.
    pub se: Option<f64>,
}

/// Full report of one population run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub problem: Problem,
    pub n_agents: usize,
    pub n_reps: usize,
    pub seed: u64,
    /// Finite-N equilibrium payoff (agents are exchangeable, so the
    /// per-replication value averages all of them).
    pub j_finite: Estimate,
    /// Limiting payoff `theta_bar * v(x0)`.
    pub j_limit: f64,
    /// `|j_finite - j_limit|`.
    pub limit_abs_error: f64,
    /// Sample mean of the finite-N effective weight.
    pub theta_tilde_mean: f64,
    /// Sample variance of the finite-N effective weight.
    pub theta_tilde_var: Option<f64>,
    /// Sup distance between the pooled stopping-time sample and the
    /// analytic law (absent when no stopping occurs in the limit).
    pub ks_distance: Option<f64>,
    /// Best-response deviation gap (absent when the grid is empty).
    pub gap: Option<GapEstimate>,
    /// False when a single replication makes standard errors meaningless.
    pub se_reliable: bool,
}

/// Sup-norm distance between the empirical law of `samples` (which may
/// contain `INFINITY` for defective draws) and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let n = samples.len() as f64;
    let mut finite: Vec<f64> = samples.iter().copied().filter(|t| t.is_finite()).collect();
    finite.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d: f64 = 0.0;
    for (i, &t) in finite.iter().enumerate() {
        let f = cdf(t);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    // plateau mismatch for defective laws
    d.max((finite.len() as f64 / n - cdf(f64::MAX / 2.0)).abs())
}

/// Two-sample Kolmogorov–Smirnov statistic (finite samples).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Default candidate grid for threshold deviations: geometric over
/// `(1.05 x0, 4 x_star]`.
pub fn default_deviation_grid(x0: f64, x_star: f64, n: usize) -> Vec<f64> {
    crate::root::geometric_grid(1.05 * x0, 4.0 * x_star, n)
}

fn require_positive_l1(params: &MarketParams) -> Result<()> {
    if params.l1 <= 0.0 {
        return Err(Error::validation(
            "l1",
            "finite-population simulation requires l1 > 0: with l1 = 0 a small population can push \
             the relative-performance denominator arbitrarily close to zero",
        ));
    }
    Ok(())
}

struct RepOutcome {
    payoff: f64,
    theta_tilde: f64,
    taus: Vec<f64>,
}

/// Simulate the sale game under the decentralized rules and report payoff,
/// weight and distribution diagnostics. The deviation gap is attached when
/// `cfg.deviation_grid` is nonempty.
pub fn simulate_population_i(
    params: &MarketParams,
    sol: &NceSolution1,
    cfg: &SimConfig,
) -> Result<SimReport> {
    params.validate()?;
    cfg.validate()?;
    require_positive_l1(params)?;
    let rule = stopping_rule1(sol, params)?;
    let law = rule.law;
    let n = cfg.n_agents;

    let reps: Vec<RepOutcome> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|m| {
            let mut taus = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for j in 0..n {
                let mut rng = stream(cfg.seed, StreamKind::Population, m as u64, j as u64);
                let tau = law.sample(&mut rng);
                taus.push(tau);
                ys.push(if tau.is_finite() { sol.x_star * (-params.beta * tau).exp() } else { 0.0 });
            }
            let ybar = ys.iter().sum::<f64>() / n as f64;
            let denom = params.l1 + params.l2 * ybar;
            let theta_tilde = params.theta + (1.0 - params.theta) / denom;
            let payoff = ys
                .iter()
                .zip(&taus)
                .map(|(&y, &tau)| {
                    let disc = if tau.is_finite() { (-params.beta * tau).exp() } else { 0.0 };
                    params.theta * y + (1.0 - params.theta) * y / denom - params.k * disc
                })
                .sum::<f64>()
                / n as f64;
            RepOutcome { payoff, theta_tilde, taus }
        })
        .collect();

    let payoffs: Vec<f64> = reps.iter().map(|r| r.payoff).collect();
    let thetas: Vec<f64> = reps.iter().map(|r| r.theta_tilde).collect();
    let pooled: Vec<f64> = reps.iter().flat_map(|r| r.taus.iter().copied()).collect();

    let j_finite = mean_and_se(&payoffs);
    let j_limit = sol.limit_payoff;
    let gap = if cfg.deviation_grid.is_empty() { None } else { Some(epsilon_nash_gap(params, sol, cfg)?) };

    Ok(SimReport {
        problem: Problem::I,
        n_agents: n,
        n_reps: cfg.n_reps,
        seed: cfg.seed,
        limit_abs_error: (j_finite.mean - j_limit).abs(),
        j_finite,
        j_limit,
        theta_tilde_mean: thetas.iter().sum::<f64>() / thetas.len() as f64,
        theta_tilde_var: sample_variance(&thetas),
        ks_distance: Some(ks_statistic(&pooled, |t| law.cdf(t))),
        gap,
        se_reliable: cfg.n_reps >= 2,
    })
}

/// Best-response deviation gap for the sale game.
///
/// Per replication the other `N - 1` agents are drawn once and shared by
/// all candidates (common random numbers); the deviating agent's payoff
/// against that realized cohort is computed exactly by quadrature over its
/// own hitting law, so the only noise is the cohort fluctuation the
/// ε-Nash theory controls. The reported gap is the mean over replications
/// of `max(0, best-response value - equilibrium value)`, with the
/// equilibrium value estimated from the whole run.
pub fn epsilon_nash_gap(
    params: &MarketParams,
    sol: &NceSolution1,
    cfg: &SimConfig,
) -> Result<GapEstimate> {
    params.validate()?;
    cfg.validate()?;
    require_positive_l1(params)?;
    if cfg.deviation_grid.is_empty() {
        return Err(Error::validation("deviation_grid", "gap estimation needs at least one candidate"));
    }
    if cfg.deviation_grid.iter().any(|&x| x <= params.x0) {
        return Err(Error::validation(
            "deviation_grid",
            format!("up-crossing deviations must exceed x0 = {}", params.x0),
        ));
    }
    let k2 = params.characteristic_roots().k2;
    let n = cfg.n_agents;
    let law = stopping_rule1(sol, params)?.law;

    let mut candidates: Vec<(HittingLaw, f64, f64)> = Vec::with_capacity(cfg.deviation_grid.len());
    for &x_hat in &cfg.deviation_grid {
        let l = HittingLaw::for_threshold(params, x_hat, Direction::Up)?;
        candidates.push((l, x_hat, (params.x0 / x_hat).powf(k2)));
    }
    let bench = (law, sol.x_star, (params.x0 / sol.x_star).powf(k2));

    // conditional expected payoff of the deviator against a realized
    // cohort sum `s`; expectation over its own stopping time by quadrature
    let phi = |cand: &(HittingLaw, f64, f64), s: f64| -> f64 {
        let (claw, x_hat, e_disc) = *cand;
        let e_y = x_hat * e_disc;
        let relative = if params.theta == 1.0 {
            0.0
        } else {
            quad::integrate_half_line(
                |t| {
                    let y = x_hat * (-params.beta * t).exp();
                    let dens = claw.density(t);
                    if dens == 0.0 {
                        0.0
                    } else {
                        y / (params.l1 + params.l2 * (y + s) / n as f64) * dens
                    }
                },
                1e-10,
            )
        };
        params.theta * e_y + (1.0 - params.theta) * relative - params.k * e_disc
    };

    let per_rep: Vec<(f64, f64)> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|m| {
            let mut s = 0.0;
            for j in 1..n {
                let mut rng = stream(cfg.seed, StreamKind::Gap, m as u64, j as u64);
                let tau = law.sample(&mut rng);
                if tau.is_finite() {
                    s += sol.x_star * (-params.beta * tau).exp();
                }
            }
            let best = candidates.iter().map(|c| phi(c, s)).fold(f64::NEG_INFINITY, f64::max);
            (best, phi(&bench, s))
        })
        .collect();

    let j_star = per_rep.iter().map(|r| r.1).sum::<f64>() / cfg.n_reps as f64;
    let gaps: Vec<f64> = per_rep.iter().map(|r| (r.0 - j_star).max(0.0)).collect();
    let est = mean_and_se(&gaps);
    Ok(GapEstimate { gap: est.mean, se: est.se })
}

/// Draw `n_samples` exact stopping times under the decentralized rule and
/// return the sup distance to the analytic law.
pub fn empirical_cdf_check(
    params: &MarketParams,
    sol: &NceSolution1,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let law = stopping_rule1(sol, params)?.law;
    let mut rng = stream(seed, StreamKind::Sampling, 0, 0);
    let samples: Vec<f64> = (0..n_samples).map(|_| law.sample(&mut rng)).collect();
    Ok(ks_statistic(&samples, |t| law.cdf(t)))
}

/// Step size of the Euler path oracle used for the extraction game and for
/// sampler validation.
pub const PATH_STEP: f64 = 1e-3;
/// Default horizon cap of the path oracle.
pub const PATH_T_MAX: f64 = 50.0;

/// First crossing time of a threshold along an exactly-advanced log-state
/// path; `INFINITY` once the horizon cap is exceeded.
///
/// The log state advances by `(alpha - sigma^2/2) dt + sigma sqrt(dt) Z`
/// per step, which is exact in distribution at the grid times; crossings
/// inside a step are detected with the Brownian-bridge crossing
/// probability so the detection carries no discretization bias beyond the
/// reporting resolution of one step.
pub fn path_simulate_tau<R: rand::Rng + ?Sized>(
    params: &MarketParams,
    x_star: f64,
    direction: Direction,
    step: f64,
    t_max: f64,
    rng: &mut R,
) -> f64 {
    let (tau, _) = path_walk(params, x_star, direction, step, t_max, rng, |_, _| {});
    tau
}

/// Path walk with a per-step visitor `visit(t, x)`; shared by the crossing
/// oracle and the running-profit accumulator.
fn path_walk<R: rand::Rng + ?Sized, V: FnMut(f64, f64)>(
    params: &MarketParams,
    x_star: f64,
    direction: Direction,
    step: f64,
    t_max: f64,
    rng: &mut R,
    mut visit: V,
) -> (f64, f64) {
    use rand_distr::StandardNormal;
    let level = x_star.ln();
    let mut u = params.x0.ln();
    let crossed0 = match direction {
        Direction::Up => u >= level,
        Direction::Down => u <= level,
    };
    visit(0.0, params.x0);
    if crossed0 {
        return (0.0, params.x0);
    }
    let drift = (params.alpha - 0.5 * params.sigma * params.sigma) * step;
    let vol = params.sigma * step.sqrt();
    let bridge_scale = 2.0 / (params.sigma * params.sigma * step);
    let mut t = 0.0;
    while t < t_max {
        let z: f64 = rng.sample(StandardNormal);
        let u_next = u + drift + vol * z;
        t += step;
        let crossed = match direction {
            Direction::Up => u_next >= level,
            Direction::Down => u_next <= level,
        };
        if crossed {
            visit(t, u_next.exp());
            return (t, u_next.exp());
        }
        // Brownian-bridge probability of an intra-step crossing
        let p = match direction {
            Direction::Up => (-bridge_scale * (level - u) * (level - u_next)).exp(),
            Direction::Down => (-bridge_scale * (u - level) * (u_next - level)).exp(),
        };
        if rng.gen::<f64>() < p {
            visit(t, x_star);
            return (t, x_star);
        }
        visit(t, u_next.exp());
        u = u_next;
    }
    (f64::INFINITY, u.exp())
}

/// Crossing time and trapezoidal discounted running profit
/// `int_0^tau e^{-beta t} f(x(t)) dt` along one simulated path.
pub fn path_profit_until_crossing<R: rand::Rng + ?Sized>(
    params: &MarketParams,
    profit: &ProfitFunction,
    x_star: f64,
    step: f64,
    t_max: f64,
    rng: &mut R,
) -> (f64, f64) {
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let (tau, _) = path_walk(params, x_star, Direction::Down, step, t_max, rng, |t, x| {
        let g = (-params.beta * t).exp() * profit.eval(x);
        if let Some((tp, gp)) = prev {
            integral += 0.5 * (t - tp) * (gp + g);
        }
        prev = Some((t, g));
    });
    (tau, integral)
}

/// Simulate the extraction game (path-based, diagnostic scale).
///
/// Per agent a full path is walked at [`PATH_STEP`] resolution up to
/// `t_max`, accumulating the discounted running profit until the
/// down-crossing. When the grid is nonempty a sampled best-response gap is
/// attached: the deviator walks one additional path per replication and
/// every candidate threshold reads its own crossing off that same path.
pub fn simulate_population_ii(
    params: &MarketParams,
    profit: &ProfitFunction,
    cfg: &SimConfig,
    t_max: f64,
) -> Result<SimReport> {
    params.validate()?;
    cfg.validate()?;
    require_positive_l1(params)?;
    let sol = solve_system2(profit, params)?;
    let x_star = sol.x_star.unwrap_or(0.0); // never crossed when no stopping
    if !cfg.deviation_grid.is_empty() && cfg.deviation_grid.iter().any(|&x| x >= params.x0) {
        return Err(Error::validation(
            "deviation_grid",
            format!("down-crossing deviations must lie below x0 = {}", params.x0),
        ));
    }
    let j_limit = sol.theta_bar2 * value_function2(&sol, profit, params, params.x0)?;
    let _ = expected_running_profit(&sol, profit, params)?;

    struct Rep {
        payoff: f64,
        theta_tilde: f64,
        taus: Vec<f64>,
        best: f64,
        bench: f64,
    }

    let n = cfg.n_agents;
    let reps: Vec<Rep> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|m| {
            let mut taus = Vec::with_capacity(n);
            let mut profits = Vec::with_capacity(n);
            for j in 0..n {
                let mut rng = stream(cfg.seed, StreamKind::Population, m as u64, j as u64);
                let (tau, integral) =
                    path_profit_until_crossing(params, profit, x_star, PATH_STEP, t_max, &mut rng);
                taus.push(tau);
                profits.push(integral);
            }
            let ibar = profits.iter().sum::<f64>() / n as f64;
            let denom = params.l1 + params.l2 * ibar;
            let theta_tilde = params.theta + (1.0 - params.theta) / denom;
            let payoff = profits
                .iter()
                .zip(&taus)
                .map(|(&i, &tau)| {
                    let disc = if tau.is_finite() { (-params.beta * tau).exp() } else { 0.0 };
                    params.theta * i + (1.0 - params.theta) * i / denom - params.k * disc
                })
                .sum::<f64>()
                / n as f64;

            // sampled best response: one deviator path serves all candidates
            let (best, bench) = if cfg.deviation_grid.is_empty() {
                (0.0, 0.0)
            } else {
                let mut rng = stream(cfg.seed, StreamKind::Gap, m as u64, 0);
                let others: f64 = profits.iter().skip(1).sum();
                let mut thresholds: Vec<f64> = cfg.deviation_grid.clone();
                thresholds.push(x_star);
                let eval = deviator_path_values(params, profit, &thresholds, t_max, &mut rng);
                let value = |idx: usize| {
                    let (tau, integral) = eval[idx];
                    let disc = if tau.is_finite() { (-params.beta * tau).exp() } else { 0.0 };
                    let d = params.l1 + params.l2 * (integral + others) / n as f64;
                    params.theta * integral + (1.0 - params.theta) * integral / d - params.k * disc
                };
                let best =
                    (0..cfg.deviation_grid.len()).map(value).fold(f64::NEG_INFINITY, f64::max);
                (best, value(cfg.deviation_grid.len()))
            };
            Rep { payoff, theta_tilde, taus, best, bench }
        })
        .collect();

    let payoffs: Vec<f64> = reps.iter().map(|r| r.payoff).collect();
    let thetas: Vec<f64> = reps.iter().map(|r| r.theta_tilde).collect();
    let pooled: Vec<f64> = reps.iter().flat_map(|r| r.taus.iter().copied()).collect();
    let j_finite = mean_and_se(&payoffs);

    let gap = if cfg.deviation_grid.is_empty() {
        None
    } else {
        let j_star = reps.iter().map(|r| r.bench).sum::<f64>() / cfg.n_reps as f64;
        let gaps: Vec<f64> = reps.iter().map(|r| (r.best - j_star).max(0.0)).collect();
        let est = mean_and_se(&gaps);
        Some(GapEstimate { gap: est.mean, se: est.se })
    };

    let ks = match sol.x_star {
        Some(xs) => {
            let law = HittingLaw::for_threshold(params, xs, Direction::Down)?;
            Some(ks_statistic(&pooled, |t| law.cdf(t)))
        }
        None => None, // no stopping, no law to compare against
    };

    Ok(SimReport {
        problem: Problem::II,
        n_agents: n,
        n_reps: cfg.n_reps,
        seed: cfg.seed,
        limit_abs_error: (j_finite.mean - j_limit).abs(),
        j_finite,
        j_limit,
        theta_tilde_mean: thetas.iter().sum::<f64>() / thetas.len() as f64,
        theta_tilde_var: sample_variance(&thetas),
        ks_distance: ks,
        gap,
        se_reliable: cfg.n_reps >= 2,
    })
}

/// Walk one path and read off, for every threshold, the first crossing
/// time and accumulated profit. Thresholds are processed jointly: a
/// down-crossing of a higher level always happens first. A threshold never
/// reached reports `(INFINITY, profit accumulated to the cap)`.
fn deviator_path_values<R: rand::Rng + ?Sized>(
    params: &MarketParams,
    profit: &ProfitFunction,
    thresholds: &[f64],
    t_max: f64,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    // order thresholds descending; walk to the lowest one, recording hits
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&a, &b| thresholds[b].partial_cmp(&thresholds[a]).unwrap());
    let mut out = vec![(f64::INFINITY, 0.0); thresholds.len()];
    let lowest = thresholds[*order.last().unwrap()];

    let mut next = 0usize; // next (highest) threshold not yet crossed
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    path_walk(params, lowest, Direction::Down, PATH_STEP, t_max, rng, |t, x| {
        let g = (-params.beta * t).exp() * profit.eval(x);
        if let Some((tp, gp)) = prev {
            integral += 0.5 * (t - tp) * (gp + g);
        }
        prev = Some((t, g));
        while next < order.len() && x <= thresholds[order[next]] {
            out[order[next]] = (t, integral);
            next += 1;
        }
    });
    for &idx in &order[next..] {
        out[idx] = (f64::INFINITY, integral);
    }
    out
}
