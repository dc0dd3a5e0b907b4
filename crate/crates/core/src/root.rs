//! Scalar root finding and 1-D minimization helpers.
//!
//! Bisection is used everywhere a bracket with a sign change is available:
//! the solvers in this crate all deal with monotone or provably bracketed
//! equations, so guaranteed convergence beats fast local methods.

/// Bisect `f` on `[lo, hi]`, which must bracket a sign change.
///
/// Runs until the interval width falls below `xtol` (absolute) or machine
/// resolution, whichever comes first. Returns the midpoint of the final
/// interval.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    debug_assert!(
        flo == 0.0 || fhi == 0.0 || (flo < 0.0) != (fhi < 0.0),
        "bisect requires a sign change"
    );
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expand `hi` geometrically from `start` until `f` changes sign against
/// `f(lo)`, then bisect. Returns `None` if no sign change appears before
/// `max_hi`.
pub fn bisect_with_expansion<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    start: f64,
    max_hi: f64,
    xtol: f64,
) -> Option<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Some(lo);
    }
    let mut hi = start;
    loop {
        let fhi = f(hi);
        if fhi == 0.0 {
            return Some(hi);
        }
        if (fhi < 0.0) != (flo < 0.0) {
            return Some(bisect(f, lo, hi, xtol));
        }
        if hi >= max_hi {
            return None;
        }
        hi = (hi * 2.0).min(max_hi);
    }
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
///
/// Stops when the bracket width falls below `xtol`; returns the best
/// abscissa found.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8; // (sqrt(5)-1)/2
    let mut a = hi - INVPHI * (hi - lo);
    let mut b = lo + INVPHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..400 {
        if hi - lo <= xtol {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INVPHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INVPHI * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        a
    } else {
        b
    }
}

/// Scan `f` over an ascending grid and return each adjacent pair that
/// brackets a sign change (non-finite values break the chain).
pub fn sign_change_brackets<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in grid {
        let fx = f(x);
        if !fx.is_finite() {
            prev = None;
            continue;
        }
        if let Some((px, pfx)) = prev {
            if fx == 0.0 || (fx < 0.0) != (pfx < 0.0) {
                out.push((px, x));
            }
        }
        prev = Some((x, fx));
    }
    out
}

/// Geometric grid with `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn expansion_reaches_distant_root() {
        let r = bisect_with_expansion(|x| x - 300.0, 0.0, 1.0, 1e6, 1e-10).unwrap();
        assert!((r - 300.0).abs() < 1e-8);
    }

    #[test]
    fn expansion_reports_no_root() {
        assert!(bisect_with_expansion(|x| x + 1.0, 0.0, 1.0, 1e3, 1e-10).is_none());
    }

    #[test]
    fn golden_min_quadratic() {
        let x = golden_min(|x| (x - 0.3) * (x - 0.3), -5.0, 7.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn brackets_on_grid() {
        let grid = geometric_grid(0.1, 10.0, 101);
        let br = sign_change_brackets(|x| (x - 1.0) * (x - 3.0), &grid);
        assert_eq!(br.len(), 2);
        assert!(br[0].0 < 1.0 && 1.0 < br[0].1);
        assert!(br[1].0 < 3.0 && 3.0 < br[1].1);
    }
}
