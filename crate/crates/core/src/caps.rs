//! Ball volumes, spherical-cap volumes, and Gaussian tail/orthant
//! probabilities. These are the deterministic scalar inputs to every
//! filter-count and threshold computation, so each one is pinned by an
//! independent oracle in the tests below.

use crate::error::CoreError;
use crate::math::{self, exp, lgamma, log, sqrt, PI};

/// Volume of the unit b-ball: pi^{b/2} / Gamma(b/2 + 1).
pub fn unit_ball_volume(b: usize) -> Result<f64, CoreError> {
    if b == 0 {
        return Err(CoreError::BadParam(alloc::format!("ball dimension must be positive")));
    }
    let bf = b as f64;
    Ok(exp(0.5 * bf * log(PI) - lgamma(0.5 * bf + 1.0)))
}

/// Relative cap volume I_b(u): the fraction of the unit b-ball lying in the
/// half-space x_1 >= u. Computed exactly via the regularized incomplete
/// beta function: (1/2) I_reg(1 - u^2; (b+1)/2, 1/2). Nonincreasing in u.
pub fn relative_cap_volume(b: usize, u: f64) -> Result<f64, CoreError> {
    if b == 0 {
        return Err(CoreError::BadParam(alloc::format!("ball dimension must be positive")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(CoreError::BadParam(alloc::format!("cap distance {u} outside [0,1]")));
    }
    if u == 0.0 {
        return Ok(0.5);
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    let bf = b as f64;
    Ok(0.5 * math::beta_reg(0.5 * (bf + 1.0), 0.5, 1.0 - u * u)?)
}

/// P(Z >= eta) for standard normal Z.
pub fn gaussian_tail(eta: f64) -> f64 {
    math::normal_tail(eta)
}

/// P(<z,u> >= eta_u and <z,q> >= eta_q) for standard Gaussian z and unit
/// vectors u, q at distance s. With alpha = 1 - s^2/2 (the cosine) and
/// beta = sqrt(1 - alpha^2), this is the 1-D integral
/// int_{eta_u}^inf phi(t) F((eta_q - alpha t)/beta) dt, absolute tol 1e-10.
pub fn gaussian_orthant(s: f64, eta_u: f64, eta_q: f64) -> Result<f64, CoreError> {
    if !(s > 0.0 && s < 2.0) {
        return Err(CoreError::BadParam(alloc::format!("sphere distance {s} outside (0,2)")));
    }
    let alpha = 1.0 - 0.5 * s * s;
    let beta = sqrt((1.0 - alpha * alpha).max(0.0));
    if beta < 1e-9 {
        // Degenerate geometry: the second projection is (+/-) the first.
        if alpha > 0.0 {
            return Ok(gaussian_tail(if eta_u > eta_q / alpha { eta_u } else { eta_q / alpha }));
        }
        let hi = eta_q / alpha; // alpha < 0: constraint is t <= eta_q/alpha
        return Ok((gaussian_tail(eta_u) - gaussian_tail(hi)).max(0.0));
    }
    // phi(t) < 1e-14 beyond t = 8, so the truncated tail is far below tol.
    let upper = if eta_u + 1.0 > 8.0 { eta_u + 1.0 } else { 8.0 };
    Ok(math::integrate(
        &|t| math::normal_pdf(t) * gaussian_tail((eta_q - alpha * t) / beta),
        eta_u,
        upper,
        1e-10,
    ))
}

/// Upper bound of the cap-volume lemma: I_b(u) <= (1 - u^2)^{b/2}.
pub fn cap_volume_upper_bound(b: usize, u: f64) -> f64 {
    math::pow(1.0 - u * u, 0.5 * b as f64)
}
