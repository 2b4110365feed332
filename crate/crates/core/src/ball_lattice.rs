//! Shifted-lattice ball filters for R^b with deterministic net
//! verification. A family is N lattices of radius-w balls at spacing 3w,
//! each translated by a random offset in [0, 3w)^b. After sampling, a
//! finite check on the grid delta*Z^b proves that every pair at distance
//! <= 1 + delta*sqrt(b) shares a ball of the shrunken radius
//! w' = w - delta*sqrt(b)/2; rounding continuum points to the net then
//! gives the zero-false-negative guarantee for pairs at distance <= 1.

use alloc::format;
use alloc::vec::Vec;

use crate::caps::{relative_cap_volume, unit_ball_volume};
use crate::error::CoreError;
use crate::math::{ceil, exp, fabs, log, pow, round, sqrt};
use crate::rng::RngStream;
use crate::vector::dist_sq;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallLatticeParams {
    pub b: usize,
    pub w: f64,
    pub delta: f64,
    pub n_offsets: usize,
    pub max_resamples: u32,
}

impl BallLatticeParams {
    pub fn new(
        b: usize,
        w: f64,
        delta: f64,
        n_offsets: usize,
        max_resamples: u32,
    ) -> Result<Self, CoreError> {
        if b == 0 {
            return Err(CoreError::BadParam(format!("filter dimension must be positive")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(CoreError::BadParam(format!("ball radius {w} must be positive")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(CoreError::BadParam(format!("net spacing {delta} must be positive")));
        }
        if max_resamples == 0 {
            return Err(CoreError::BadParam(format!("max_resamples must be positive")));
        }
        let p = BallLatticeParams { b, w, delta, n_offsets, max_resamples };
        if !(p.shrunken_radius() > 0.0) {
            return Err(CoreError::InfeasibleParams(format!(
                "net spacing {delta} too coarse: w - delta*sqrt(b)/2 <= 0 at w={w}, b={b}"
            )));
        }
        Ok(p)
    }

    /// Verification radius w' = w - delta*sqrt(b)/2.
    pub fn shrunken_radius(&self) -> f64 {
        self.w - 0.5 * self.delta * sqrt(self.b as f64)
    }

    /// Net pairs are checked out to 1 + delta*sqrt(b); continuum pairs at
    /// distance <= 1 round into this slack.
    pub fn pair_slack(&self) -> f64 {
        1.0 + self.delta * sqrt(self.b as f64)
    }

    pub fn lattice_period(&self) -> f64 {
        3.0 * self.w
    }
}

/// Default net spacing: min(1/b, 2w/(3 sqrt b)). The first term drives the
/// asymptotics; the second keeps w' positive at small radii.
pub fn default_delta(b: usize, w: f64) -> f64 {
    let bf = b as f64;
    let a = 1.0 / bf;
    let c = 2.0 * w / (3.0 * sqrt(bf));
    if a < c {
        a
    } else {
        c
    }
}

/// Largest spacing <= delta that divides the lattice period 3w exactly.
/// With 3w a multiple of delta the verification sweep can run over one
/// period instead of the doubled box.
pub fn snap_delta(w: f64, delta: f64) -> f64 {
    3.0 * w / ceil(3.0 * w / delta)
}

/// Smallest radius keeping xi = (1 + delta*sqrt(b)) / (2w') at or below
/// `xi_max`; below this the cap term degenerates and offset counts blow up.
pub fn radius_floor(b: usize, delta: f64, xi_max: f64) -> f64 {
    let ds = delta * sqrt(b as f64);
    (1.0 + ds) / (2.0 * xi_max) + 0.5 * ds
}

/// Per-offset probability that a fixed net pair at distance 1+delta*sqrt(b)
/// lands in one radius-w' ball: (w'/3w)^b * V_b * 2 I_b(xi) with
/// xi = (1+delta*sqrt(b))/(2w'). Returns 0 when xi >= 1. This is exact at
/// that distance (the feasible-center region is a lens of two equal caps)
/// and a lower bound for any closer pair.
pub fn success_prob_lower_bound(params: &BallLatticeParams) -> f64 {
    let wp = params.shrunken_radius();
    let xi = params.pair_slack() / (2.0 * wp);
    if xi >= 1.0 {
        return 0.0;
    }
    let cap = relative_cap_volume(params.b, xi).expect("xi in [0,1)");
    let vb = unit_ball_volume(params.b).expect("b >= 1");
    pow(wp / (3.0 * params.w), params.b as f64) * vb * 2.0 * cap
}

/// Offset count making the union bound over all <= (6w/delta)^{2b} net
/// pairs fail with probability at most 1/2.
pub fn required_offsets_from(
    p_lb: f64,
    b: usize,
    w: f64,
    delta: f64,
) -> Result<usize, CoreError> {
    if !(p_lb > 0.0) {
        return Err(CoreError::InfeasibleParams(format!(
            "success probability bound is zero at b={b}, w={w}, delta={delta}"
        )));
    }
    let need = (2.0 * b as f64 * log(6.0 * w / delta) + log(2.0)) / p_lb;
    Ok(ceil(need) as usize)
}

pub fn required_offsets(params: &BallLatticeParams) -> Result<usize, CoreError> {
    required_offsets_from(
        success_prob_lower_bound(params),
        params.b,
        params.w,
        params.delta,
    )
}

/// Per-offset upper bound on two points at distance >= t sharing a ball:
/// V_b 3^{-b} exp(-(b/2) t^2 / (4 w^2)).
pub fn collision_prob_upper_bound(params: &BallLatticeParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let vb = unit_ball_volume(params.b).expect("b >= 1");
    vb * pow(3.0, -(params.b as f64))
        * exp(-0.5 * params.b as f64 * t * t / (4.0 * params.w * params.w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallLatticeFamily {
    params: BallLatticeParams,
    /// n_offsets * b coordinates, row-major, each in [0, 3w).
    offsets: Vec<f64>,
    verified: bool,
}

/// One ball: center = offset(offset_index) + 3w * cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BallFilterId {
    pub offset_index: u32,
    pub cell: Vec<i32>,
}

impl BallLatticeFamily {
    pub fn from_offsets(
        params: BallLatticeParams,
        offsets: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if offsets.len() != params.n_offsets * params.b {
            return Err(CoreError::DimMismatch {
                expected: params.n_offsets * params.b,
                got: offsets.len(),
            });
        }
        let period = params.lattice_period();
        for &c in &offsets {
            if !(0.0..period).contains(&c) {
                return Err(CoreError::BadParam(format!(
                    "offset coordinate {c} outside [0, {period})"
                )));
            }
        }
        Ok(BallLatticeFamily { params, offsets, verified: false })
    }

    pub fn params(&self) -> &BallLatticeParams {
        &self.params
    }

    pub fn n_offsets(&self) -> usize {
        self.params.n_offsets
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        &self.offsets[i * self.params.b..(i + 1) * self.params.b]
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    pub fn offsets_flat(&self) -> &[f64] {
        &self.offsets
    }

    /// Restore a family (e.g. from disk) asserting it was verified before.
    pub fn from_verified_parts(
        params: BallLatticeParams,
        offsets: Vec<f64>,
    ) -> Result<Self, CoreError> {
        let mut fam = Self::from_offsets(params, offsets)?;
        fam.verified = true;
        Ok(fam)
    }
}

/// Is some single radius-`radius` ball of lattice i covering both x and y?
/// Only the cell nearest to x can contain x, so one rounding decides.
#[inline]
fn offset_covers_pair(
    family: &BallLatticeFamily,
    i: usize,
    x: &[f64],
    y: &[f64],
    radius: f64,
) -> bool {
    let b = family.params.b;
    let period = family.params.lattice_period();
    let v = family.offset(i);
    let r2 = radius * radius;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for j in 0..b {
        let c = v[j] + period * round((x[j] - v[j]) / period);
        let ex = x[j] - c;
        let ey = y[j] - c;
        dx += ex * ex;
        dy += ey * ey;
        if dx > r2 || dy > r2 {
            return false;
        }
    }
    true
}

fn pair_covered(family: &BallLatticeFamily, x: &[f64], y: &[f64], radius: f64) -> bool {
    (0..family.n_offsets()).any(|i| offset_covers_pair(family, i, x, y, radius))
}

/// Lattice steps h (in units of delta) with ||delta h|| <= 1+delta*sqrt(b),
/// deduplicated to h = 0 plus lexicographically positive representatives so
/// each unordered net pair is generated once.
fn neighbor_steps(params: &BallLatticeParams) -> Vec<Vec<i32>> {
    let b = params.b;
    let slack = params.pair_slack();
    let s = ceil(slack / params.delta) as i32;
    let limit2 = (slack / params.delta) * (slack / params.delta) + 1e-9;
    let mut out = Vec::new();
    let mut h = alloc::vec![0i32; b];
    loop {
        let lexpos = h.iter().find(|v| **v != 0).map_or(true, |v| *v > 0);
        if lexpos {
            let n2: i64 = h.iter().map(|v| (*v as i64) * (*v as i64)).sum();
            if (n2 as f64) <= limit2 {
                out.push(h.clone());
            }
        }
        // Odometer over [-s, s]^b.
        let mut j = 0;
        loop {
            if j == b {
                return out;
            }
            if h[j] < s {
                h[j] += 1;
                break;
            }
            h[j] = -s;
            j += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NetMode {
    /// delta divides 3w: sweep one lattice period [0, 3w)^b. Every boxed
    /// pair is a per-coordinate 3w-translate of a period pair and vice
    /// versa, so this checks exactly the boxed condition.
    Torus { per_axis: usize },
    /// General spacing: enumerate the full box [0, 6w]^b.
    Boxed { per_axis: usize },
}

fn net_mode(params: &BallLatticeParams) -> NetMode {
    let ratio = params.lattice_period() / params.delta;
    let k = round(ratio);
    if fabs(ratio - k) <= 1e-9 * ratio {
        NetMode::Torus { per_axis: k as usize }
    } else {
        NetMode::Boxed { per_axis: (2.0 * ratio) as usize + 1 }
    }
}

/// Number of net points the verification sweep enumerates.
pub fn net_point_count(params: &BallLatticeParams) -> Result<u64, CoreError> {
    let per_axis = match net_mode(params) {
        NetMode::Torus { per_axis } => per_axis,
        NetMode::Boxed { per_axis } => per_axis,
    };
    let mut acc: u64 = 1;
    for _ in 0..params.b {
        acc = acc.checked_mul(per_axis as u64).ok_or(CoreError::CollectionOverflow {
            size: (per_axis as u128).pow(params.b as u32),
            cap: u64::MAX as u128,
        })?;
    }
    Ok(acc)
}

/// Check net points with linear indices in [lo, hi); the first violated
/// pair (x, y) is returned. Disjoint ranges can run on separate threads;
/// a violation in any range refutes the family.
pub fn verify_net_range(
    family: &BallLatticeFamily,
    lo: u64,
    hi: u64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let params = &family.params;
    let b = params.b;
    let steps = neighbor_steps(params);
    let wp = params.shrunken_radius();
    let mode = net_mode(params);
    let per_axis = match mode {
        NetMode::Torus { per_axis } => per_axis,
        NetMode::Boxed { per_axis } => per_axis,
    };
    let bounded = matches!(mode, NetMode::Boxed { .. });
    let mut x = alloc::vec![0.0f64; b];
    let mut y = alloc::vec![0.0f64; b];
    let mut jx = alloc::vec![0i64; b];
    for idx in lo..hi {
        let mut rem = idx;
        for j in 0..b {
            jx[j] = (rem % per_axis as u64) as i64;
            rem /= per_axis as u64;
            x[j] = jx[j] as f64 * params.delta;
        }
        'step: for h in &steps {
            for j in 0..b {
                let t = jx[j] + h[j] as i64;
                if bounded && !(0..per_axis as i64).contains(&t) {
                    continue 'step;
                }
                y[j] = t as f64 * params.delta;
            }
            if !pair_covered(family, &x, &y, wp) {
                return Some((x.clone(), y.clone()));
            }
        }
    }
    None
}

/// Full sweep; Some((x, y)) is a net pair within the slack distance that no
/// single shrunken ball covers.
pub fn find_net_violation(family: &BallLatticeFamily) -> Result<Option<(Vec<f64>, Vec<f64>)>, CoreError> {
    let total = net_point_count(&family.params)?;
    Ok(verify_net_range(family, 0, total))
}

pub fn verify_family(family: &BallLatticeFamily) -> Result<bool, CoreError> {
    Ok(find_net_violation(family)?.is_none())
}

/// Draw offsets uniformly and verify; redraw on failure up to
/// max_resamples. With n_offsets >= required_offsets each attempt succeeds
/// with probability >= 1/2.
pub fn sample_family(
    params: &BallLatticeParams,
    rng: &mut RngStream,
) -> Result<BallLatticeFamily, CoreError> {
    let period = params.lattice_period();
    let mut last_witness: Vec<f64> = Vec::new();
    for attempt in 0..params.max_resamples {
        let mut offsets = Vec::with_capacity(params.n_offsets * params.b);
        for _ in 0..params.n_offsets * params.b {
            offsets.push(rng.uniform_in(0.0, period));
        }
        let mut family = BallLatticeFamily::from_offsets(*params, offsets)?;
        match find_net_violation(&family)? {
            None => {
                family.verified = true;
                return Ok(family);
            }
            Some((x, y)) => {
                last_witness = x;
                last_witness.extend_from_slice(&y);
                let _ = attempt;
            }
        }
    }
    Err(CoreError::VerificationFailed {
        attempts: params.max_resamples,
        witness: last_witness,
    })
}

/// All balls containing x: per offset, round to the nearest center and keep
/// it when the closed radius-w test passes. At most one id per offset.
pub fn decode(family: &BallLatticeFamily, x: &[f64]) -> Result<Vec<BallFilterId>, CoreError> {
    decode_within(family, x, family.params.w)
}

pub fn decode_within(
    family: &BallLatticeFamily,
    x: &[f64],
    radius: f64,
) -> Result<Vec<BallFilterId>, CoreError> {
    let params = &family.params;
    if x.len() != params.b {
        return Err(CoreError::DimMismatch { expected: params.b, got: x.len() });
    }
    let period = params.lattice_period();
    let r2 = radius * radius;
    let mut out = Vec::new();
    let mut cell = alloc::vec![0i32; params.b];
    for i in 0..family.n_offsets() {
        let v = family.offset(i);
        let mut d2 = 0.0;
        for j in 0..params.b {
            let k = round((x[j] - v[j]) / period);
            cell[j] = k as i32;
            let e = x[j] - (v[j] + period * k);
            d2 += e * e;
        }
        if d2 <= r2 {
            out.push(BallFilterId { offset_index: i as u32, cell: cell.clone() });
        }
    }
    Ok(out)
}

/// True when x and y (continuum points) land in one common radius-w ball.
pub fn share_ball(family: &BallLatticeFamily, x: &[f64], y: &[f64]) -> bool {
    debug_assert_eq!(x.len(), family.params.b);
    debug_assert_eq!(y.len(), family.params.b);
    let _ = dist_sq(x, y);
    pair_covered(family, x, y, family.params.w)
}
