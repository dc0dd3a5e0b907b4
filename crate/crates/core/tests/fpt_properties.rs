//! Law-level invariants of the first-passage analytics: root identities,
//! moment/MGF consistency, density normalization, and exact-sampler
//! validation against an independent path oracle.

use mfos_core::fpt::{Direction, HittingLaw, IgParams};
use mfos_core::market::{lambda_roots, MarketParams};
use mfos_core::quad;
use mfos_core::rng::{stream, StreamKind};
use mfos_core::sim::{ks_two_sample, path_simulate_tau};
use proptest::prelude::*;

fn arb_params() -> impl Strategy<Value = MarketParams> {
    (-0.8f64..0.8, 0.2f64..2.0, 0.05f64..1.5).prop_map(|(alpha, sigma, excess)| {
        MarketParams::new(alpha, sigma, alpha.max(0.0) + excess, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn characteristic_roots_satisfy_quadratic(p in arb_params()) {
        let r = p.characteristic_roots();
        prop_assert!(r.k1 < 0.0);
        prop_assert!(r.k2 > 1.0);
        prop_assert!(r.relative_residual(&p, r.k1) < 1e-12);
        prop_assert!(r.relative_residual(&p, r.k2) < 1e-12);
    }

    #[test]
    fn lambda_roots_match_scaled_characteristic_roots(p in arb_params()) {
        let r = p.characteristic_roots();
        let (lm, lp) = lambda_roots(p.a_prime(), p.beta).unwrap();
        let scale = |v: f64| v.abs().max(1.0);
        prop_assert!((lm - r.k1 * p.sigma).abs() / scale(lm) < 1e-10);
        prop_assert!((lp - r.k2 * p.sigma).abs() / scale(lp) < 1e-10);
    }

    #[test]
    fn mgf_at_negative_argument_is_discounted_factor(
        a in -2.0f64..-0.05,
        b in 0.01f64..3.0,
        s in 0.01f64..5.0,
    ) {
        let law = HittingLaw::new(a, b).unwrap();
        let lhs = law.mgf(-s).unwrap();
        let rhs = law.discounted_factor(s);
        prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1e-300));
    }
}

#[test]
fn mgf_derivatives_match_moments() {
    for (a, b) in [(-0.5, 0.5), (-1.0, 1.0), (-0.25, 2.0), (-2.0, 0.7)] {
        let law = HittingLaw::new(a, b).unwrap();
        let mean = law.mean().unwrap();
        let var = law.var().unwrap();
        let h = 1e-5;
        let d1 = (law.mgf(h).unwrap() - law.mgf(-h).unwrap()) / (2.0 * h);
        assert!(
            (d1 - mean).abs() / mean.max(1e-12) < 1e-4,
            "first derivative {d1} vs mean {mean} at ({a}, {b})"
        );
        let d2 = (law.mgf(h).unwrap() - 2.0 + law.mgf(-h).unwrap()) / (h * h);
        let second_moment = var + mean * mean;
        assert!(
            (d2 - second_moment).abs() / second_moment.max(1e-12) < 1e-3,
            "second derivative {d2} vs E tau^2 {second_moment} at ({a}, {b})"
        );
    }
}

#[test]
fn ig_pdf_normalizes_and_matches_moments() {
    for (mu, rho) in [(1.0, 0.25), (1.0, 1.0), (2.0, 4.0), (0.5, 0.1)] {
        let p = IgParams::new(mu, rho).unwrap();
        let mass = quad::integrate_half_line(|t| p.pdf(t).unwrap(), 1e-12);
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass} for IG({mu}, {rho})");
        let mean = quad::integrate_half_line(|t| t * p.pdf(t).unwrap(), 1e-12);
        assert!((mean - mu).abs() < 1e-7, "mean {mean} for IG({mu}, {rho})");
        let var = quad::integrate_half_line(|t| (t - mu) * (t - mu) * p.pdf(t).unwrap(), 1e-12);
        assert!((var - p.variance()).abs() < 1e-6 * p.variance().max(1.0));
    }
}

#[test]
fn density_of_hitting_law_matches_ig_density() {
    let law = HittingLaw::new(-0.5, 0.5).unwrap();
    let ig = law.ig_params().unwrap();
    for t in [0.05, 0.3, 1.0, 2.7, 10.0] {
        assert!((law.density(t) - ig.pdf(t).unwrap()).abs() < 1e-14);
    }
    // defective law integrates to the hit probability
    let law = HittingLaw::new(0.5, 2f64.ln()).unwrap();
    let mass = quad::integrate_half_line(|t| law.density(t), 1e-12);
    assert!((mass - law.hit_prob()).abs() < 1e-9);
}

#[test]
fn exact_sampler_moments() {
    let law = HittingLaw::new(-0.5, 0.5).unwrap();
    let mut rng = stream(20260801, StreamKind::Sampling, 0, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 0.02, "sample mean {mean}");
    assert!((var - 4.0).abs() < 0.15, "sample variance {var}");
}

#[test]
fn defective_sampler_hit_fraction() {
    // hit probability exp(-2 a' b') = exp(-ln 2) = 1/2
    let law = HittingLaw::new(0.5, 2f64.ln()).unwrap();
    let mut rng = stream(20260802, StreamKind::Sampling, 0, 0);
    let n = 100_000;
    let finite = (0..n).filter(|_| law.sample(&mut rng).is_finite()).count();
    let frac = finite as f64 / n as f64;
    let p = law.hit_prob();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((frac - p).abs() < 3.0 * se, "fraction {frac} vs {p} (se {se})");
}

#[test]
fn sampler_matches_path_oracle_in_distribution() {
    // exact draws vs bridge-corrected Euler paths, two-sample KS at the
    // 1% level: 1.628 sqrt(2/n)
    let pathp = MarketParams::new(1.0, 1.0, 3.0, 1.0, 2.0, 0.0, 0.0, 1.0).unwrap(); // a' = -1/2
    let x_star = std::f64::consts::E.sqrt(); // b' = ln(x*) = 1/2
    let law = HittingLaw::for_threshold(&pathp, x_star, Direction::Up).unwrap();
    assert!((law.a_prime + 0.5).abs() < 1e-15 && (law.b_prime - 0.5).abs() < 1e-15);
    let n = 10_000;
    let mut rng = stream(20260803, StreamKind::Sampling, 0, 0);
    let exact: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let mut prng = stream(20260803, StreamKind::Path, 0, 0);
    let paths: Vec<f64> = (0..n)
        .map(|_| path_simulate_tau(&pathp, x_star, Direction::Up, 1e-3, 200.0, &mut prng))
        .filter(|t| t.is_finite())
        .collect();
    assert_eq!(paths.len(), n, "proper law must always hit");
    let d = ks_two_sample(&exact, &paths);
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS {d} vs critical {crit}");
}

#[test]
fn discounted_factor_matches_sampler_average() {
    // proper law: E e^{-3 tau} = e^{-1}
    let law = HittingLaw::new(-0.5, 0.5).unwrap();
    let mut rng = stream(20260806, StreamKind::Sampling, 0, 0);
    let n = 200_000;
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..n {
        let v = (-3.0 * law.sample(&mut rng)).exp();
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
    let exact = law.discounted_factor(3.0);
    assert!((exact - (-1f64).exp()).abs() < 1e-15);
    assert!((mean - exact).abs() < 3.0 * se, "MC {mean} vs {exact} (se {se})");

    // defective law: {tau = inf} contributes zero, E e^{-tau} = 1/4
    let law = HittingLaw::new(0.5, 2f64.ln()).unwrap();
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..n {
        let tau = law.sample(&mut rng);
        let v = if tau.is_finite() { (-tau).exp() } else { 0.0 };
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
    let exact = law.discounted_factor(1.0);
    assert!((exact - 0.25).abs() < 1e-15);
    assert!((mean - exact).abs() < 3.0 * se, "MC {mean} vs {exact} (se {se})");
}

#[test]
fn zero_slope_sampler_matches_levy_law() {
    let law = HittingLaw::new(0.0, 1.0).unwrap();
    let n = 20_000;
    let mut rng = stream(20260804, StreamKind::Sampling, 0, 0);
    let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let d = mfos_core::sim::ks_statistic(&draws, |t| law.cdf(t));
    // DKW-style bound at the 0.1% level
    let bound = (0.5 * (2.0 / 0.001f64).ln() / n as f64).sqrt();
    assert!(d < bound, "KS {d} vs DKW bound {bound}");
}

#[test]
fn quantile_sampling_is_dkw_consistent() {
    let ig = IgParams::new(1.0, 0.25).unwrap();
    let n = 5000;
    let mut rng = stream(20260805, StreamKind::Sampling, 0, 0);
    let draws: Vec<f64> = (0..n)
        .map(|_| ig.quantile(rand::Rng::gen::<f64>(&mut rng)).unwrap())
        .collect();
    let d = mfos_core::sim::ks_statistic(&draws, |t| ig.cdf(t));
    let bound = (0.5 * (2.0 / 0.001f64).ln() / n as f64).sqrt();
    assert!(d < bound, "KS {d} vs DKW bound {bound}");
}
