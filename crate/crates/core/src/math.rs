//! Scalar special functions and quadrature.
//!
//! Everything routes through `libm` so the crate stays `no_std` and results
//! are bit-identical across platforms.

use crate::error::CoreError;

pub use libm::{
    acos, asin, atan2, ceil, cos, erf, erfc, exp, fabs, floor, lgamma, log, pow, round, sin, sqrt,
};

pub const PI: f64 = core::f64::consts::PI;

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    exp(-0.5 * t * t) / sqrt(2.0 * PI)
}

/// Standard normal upper tail P(Z >= eta), via the complementary error
/// function. Exact at 0 (gives 1/2) and accurate far into the tail.
pub fn normal_tail(eta: f64) -> f64 {
    0.5 * erfc(eta / sqrt(2.0))
}

/// Inverse of [`normal_tail`] by bisection. Monotone decreasing, so the
/// bracket [-40, 40] covers every representable tail probability.
pub fn normal_tail_inv(p: f64) -> Result<f64, CoreError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(CoreError::BadParam(alloc::format!(
            "tail probability {p} outside [0, 1]"
        )));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const BETACF_MAX_ITER: usize = 300;
const BETACF_EPS: f64 = 1e-15;
const BETACF_TINY: f64 = 1e-300;

// Continued fraction for the incomplete beta (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> Result<f64, CoreError> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fabs(d) < BETACF_TINY {
        d = BETACF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETACF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fabs(d) < BETACF_TINY {
            d = BETACF_TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < BETACF_TINY {
            c = BETACF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fabs(d) < BETACF_TINY {
            d = BETACF_TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < BETACF_TINY {
            c = BETACF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < BETACF_EPS {
            return Ok(h);
        }
    }
    Err(CoreError::NoConvergence("incomplete beta continued fraction"))
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64, CoreError> {
    if a <= 0.0 || b <= 0.0 {
        return Err(CoreError::BadParam(alloc::format!(
            "beta_reg shape parameters must be positive, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(CoreError::BadParam(alloc::format!(
            "beta_reg argument {x} outside [0, 1]"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x);
    let bt = exp(ln_bt);
    // Use the representation that converges fast on each side of the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(bt * betacf(a, b, x)? / a)
    } else {
        Ok(1.0 - bt * betacf(b, a, 1.0 - x)? / b)
    }
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
///
/// The interval is split recursively until the local Richardson estimate of
/// the error is below the local tolerance share; depth is capped so a
/// pathological integrand terminates (returning the best estimate).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || fabs(delta) <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tail_reference_values() {
        assert!((normal_tail(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_tail(1.0) - 0.158_655_253_931_457_07).abs() < 1e-12);
        // Symmetry of the Gaussian.
        assert!((normal_tail(-1.3) + normal_tail(1.3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normal_tail_inv_round_trips() {
        for eta in [-3.0, -0.7, 0.0, 0.5, 1.0, 2.5, 5.0] {
            let p = normal_tail(eta);
            let back = normal_tail_inv(p).unwrap();
            assert!((back - eta).abs() < 1e-9, "eta={eta} back={back}");
        }
        assert!(normal_tail_inv(1.5).is_err());
    }

    #[test]
    fn beta_reg_matches_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b.
        for x in [0.1, 0.4, 0.9] {
            for b in [0.5, 1.0, 3.0] {
                let got = beta_reg(1.0, b, x).unwrap();
                let want = 1.0 - pow(1.0 - x, b);
                assert!((got - want).abs() < 1e-12, "x={x} b={b}");
            }
        }
        // Symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
        let a = 2.7;
        let b = 0.9;
        for x in [0.2, 0.5, 0.8] {
            let lhs = beta_reg(a, b, x).unwrap();
            let rhs = 1.0 - beta_reg(b, a, 1.0 - x).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert_eq!(beta_reg(2.0, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(beta_reg(2.0, 2.0, 1.0).unwrap(), 1.0);
        assert!(beta_reg(-1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn integrate_polynomial_and_gaussian() {
        // Cubic is exact under Simpson.
        let got = integrate(&|t| t * t * t - 2.0 * t + 1.0, -1.0, 3.0, 1e-12);
        let want = |t: f64| t * t * t * t / 4.0 - t * t + t;
        assert!((got - (want(3.0) - want(-1.0))).abs() < 1e-10);
        // Gaussian mass over a wide interval.
        let got = integrate(&normal_pdf, -10.0, 10.0, 1e-12);
        assert!((got - 1.0).abs() < 1e-10);
    }
}
