//! Spherical cap filters on the unit sphere with a zero-miss guarantee.
//!
//! A filter is a Gaussian direction z. A point p matches on the update side
//! when <z, p> >= eta_u and on the query side when <z, p> >= eta_q, so the
//! one-sided collision mass is the normal tail F and the pair mass at chord
//! distance s is the joint tail G from `caps`. Membership is always evaluated
//! on points rounded to a finite spherical net, and a sampled family is kept
//! only after an exhaustive check that every ordered net pair within the
//! slack radius r(1 + 2 delta_s) shares a filter. Rounding moves each point
//! by at most r delta_s, so two continuum points within r land on net points
//! within the slack radius and the verified guarantee transfers to them.
//!
//! Caps are anchored in a randomly shifted cover of overlapping cubes. Every
//! pair within r shares a cube, and each cube re-centers its cap onto a fixed
//! pole through a Householder reflection before rounding, so one verified net
//! serves every cube.

use alloc::format;
use alloc::vec::Vec;

use crate::caps::gaussian_orthant;
use crate::error::CoreError;
use crate::math::{ceil, fabs, floor, log, normal_tail, normal_tail_inv, pow, round, sqrt};
use crate::ortho::{random_rotation, Rotation};
use crate::rng::RngStream;
use crate::splitters::{ProjCollection, SplitterTree};
use crate::tensor::QueryResult;
use crate::vector::{dist, dist_sq, dot, norm, RealVector};

pub const DEFAULT_SPH_RESAMPLES: u32 = 40;
pub const DEFAULT_NET_CAP: u64 = 1_000_000;
/// Multiplicative tolerance when a measured ratio is compared to its target.
pub const RATIO_SLACK: f64 = 1.05;
/// Hard ceiling on enumerated net lattice boxes; beyond this the build is
/// hopeless anyway and we refuse instead of spinning.
const NET_BOX_CAP: f64 = 2.0e8;
/// Cap on cubes returned for a single point by the cover.
const CUBE_ENUM_CAP: u128 = 10_000_000;

fn normalize(x: &[f64]) -> Result<Vec<f64>, CoreError> {
    let n = norm(x);
    if !(n > 1e-12) {
        return Err(CoreError::BadParam(format!("cannot normalize a near-zero vector")));
    }
    Ok(x.iter().map(|v| v / n).collect())
}

// ---------------------------------------------------------------------------
// Parameters

/// Cap family shape: dimension, target radius, thresholds, net granularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalParams {
    b: usize,
    r: f64,
    c: f64,
    eta_u: f64,
    eta_q: f64,
    delta_s: f64,
    n_filters: usize,
    k_budget: u32,
    max_resamples: u32,
    net_cap: u64,
}

impl SphericalParams {
    /// Defaults: delta_s = 1/b, filter count unset, k_budget 1.
    pub fn new(b: usize, r: f64, c: f64, eta_u: f64, eta_q: f64) -> Result<Self, CoreError> {
        if b < 2 {
            return Err(CoreError::BadParam(format!("sphere dimension {b} must be at least 2")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(CoreError::BadParam(format!("radius {r} must be positive and finite")));
        }
        if !(c > 1.0) || !c.is_finite() {
            return Err(CoreError::BadParam(format!("approximation factor {c} must exceed 1")));
        }
        if !eta_u.is_finite() || !eta_q.is_finite() {
            return Err(CoreError::NonFinite);
        }
        let p = SphericalParams {
            b,
            r,
            c,
            eta_u,
            eta_q,
            delta_s: 1.0 / b as f64,
            n_filters: 0,
            k_budget: 1,
            max_resamples: DEFAULT_SPH_RESAMPLES,
            net_cap: DEFAULT_NET_CAP,
        };
        p.check_slack()?;
        Ok(p)
    }

    fn check_slack(&self) -> Result<(), CoreError> {
        let s = self.slack_radius();
        if s >= 2.0 {
            return Err(CoreError::InfeasibleParams(format!(
                "slack radius r(1 + 2 delta_s) = {s:.4} reaches the sphere diameter; \
                 shrink r or delta_s"
            )));
        }
        Ok(())
    }

    pub fn with_delta_s(mut self, delta_s: f64) -> Result<Self, CoreError> {
        if !(delta_s > 0.0 && delta_s <= 1.0) {
            return Err(CoreError::BadParam(format!("delta_s {delta_s} must lie in (0, 1]")));
        }
        self.delta_s = delta_s;
        self.check_slack()?;
        Ok(self)
    }

    pub fn with_filter_count(mut self, n: usize) -> Self {
        self.n_filters = n;
        self
    }

    pub fn with_k_budget(mut self, k: u32) -> Result<Self, CoreError> {
        if k == 0 {
            return Err(CoreError::BadParam(format!("tensoring budget must be positive")));
        }
        self.k_budget = k;
        Ok(self)
    }

    pub fn with_max_resamples(mut self, n: u32) -> Self {
        self.max_resamples = n;
        self
    }

    pub fn with_net_cap(mut self, cap: u64) -> Self {
        self.net_cap = cap;
        self
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta_u(&self) -> f64 {
        self.eta_u
    }

    pub fn eta_q(&self) -> f64 {
        self.eta_q
    }

    pub fn delta_s(&self) -> f64 {
        self.delta_s
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn k_budget(&self) -> u32 {
        self.k_budget
    }

    pub fn max_resamples(&self) -> u32 {
        self.max_resamples
    }

    pub fn net_cap(&self) -> u64 {
        self.net_cap
    }

    /// Verified pair distance: r plus one rounding step on each endpoint.
    pub fn slack_radius(&self) -> f64 {
        self.r * (1.0 + 2.0 * self.delta_s)
    }

    /// Grid pitch; one rounding step moves a point by at most r delta_s / 2
    /// before projection and r delta_s after it.
    pub fn net_spacing(&self) -> f64 {
        self.r * self.delta_s / sqrt(self.b as f64)
    }

    /// Half-width of the lattice shell kept around the sphere.
    pub fn shell_tol(&self) -> f64 {
        self.r * self.delta_s / 2.0
    }

    /// Net is restricted to this chord radius around the pole, twice the
    /// reach of any frame image of a cube, so rounded decodes stay inside.
    pub fn region_radius(&self) -> f64 {
        let r = 2.0 * self.r * (self.b as f64 + 2.0) * sqrt(self.b as f64);
        if r < 2.0 {
            r
        } else {
            2.0
        }
    }

    pub fn cube_side(&self) -> f64 {
        self.r * (self.b as f64 + 2.0)
    }

    pub fn cube_pitch(&self) -> f64 {
        self.r * self.b as f64
    }
}

/// Round to the net grid and project back to the sphere. Moves a point of
/// norm within shell_tol of 1 by at most r delta_s in chord distance.
pub fn round_unit(params: &SphericalParams, x: &[f64]) -> Result<Vec<f64>, CoreError> {
    if x.len() != params.b {
        return Err(CoreError::DimMismatch { expected: params.b, got: x.len() });
    }
    let s = params.net_spacing();
    let g: Vec<f64> = x.iter().map(|v| round(v / s) * s).collect();
    normalize(&g)
}

// ---------------------------------------------------------------------------
// Net construction

/// Finite witness set for verification: lattice shell points projected to
/// the sphere, in odometer order. Coincident projections are kept; they cost
/// a few redundant checks and nothing else.
#[derive(Debug, Clone)]
pub struct CapNet {
    b: usize,
    spacing: f64,
    points: Vec<f64>,
}

impl CapNet {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.b
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.b..(i + 1) * self.b]
    }
}

/// Enumerate the lattice shell |norm(g) - 1| <= r delta_s / 2 inside the
/// pole region and project it to the sphere. Refuses lattice boxes too large
/// to sweep and nets above params.net_cap.
pub fn build_cap_net(params: &SphericalParams) -> Result<CapNet, CoreError> {
    let b = params.b;
    let s = params.net_spacing();
    let tol = params.shell_tol();
    let rr = params.region_radius();
    let region_dot = 1.0 - rr * rr / 2.0;
    let kmax = floor((1.0 + tol) / s) as i64;
    let per_axis = (2 * kmax + 1) as f64;
    let box_count = pow(per_axis, b as f64);
    if box_count > NET_BOX_CAP {
        let size = if box_count >= 3.4e38 { u128::MAX } else { box_count as u128 };
        return Err(CoreError::CollectionOverflow { size, cap: NET_BOX_CAP as u128 });
    }
    let mut points: Vec<f64> = Vec::new();
    let mut count: u64 = 0;
    let mut k = alloc::vec![-kmax; b];
    loop {
        let mut n2 = 0.0;
        for kj in k.iter() {
            let v = *kj as f64 * s;
            n2 += v * v;
        }
        let n = sqrt(n2);
        if fabs(n - 1.0) <= tol && (rr >= 2.0 || k[0] as f64 * s / n >= region_dot) {
            count += 1;
            if count > params.net_cap {
                return Err(CoreError::CollectionOverflow {
                    size: count as u128,
                    cap: params.net_cap as u128,
                });
            }
            for kj in k.iter() {
                points.push(*kj as f64 * s / n);
            }
        }
        let mut j = 0;
        loop {
            if j == b {
                return Ok(CapNet { b, spacing: s, points });
            }
            k[j] += 1;
            if k[j] <= kmax {
                break;
            }
            k[j] = -kmax;
            j += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Family sampling and verification

/// Joint tail mass at the slack radius; the per-pair success probability the
/// filter count is sized against.
fn pair_tail(params: &SphericalParams) -> Result<f64, CoreError> {
    gaussian_orthant(params.slack_radius(), params.eta_u, params.eta_q)
}

/// Smallest N with L^2 (1 - p)^N <= 1/2 via the exponential bound:
/// N = ceil((2 ln L + ln 2) / p). Each resample then succeeds with
/// probability at least 1/2.
pub fn required_sph_filters(params: &SphericalParams, net_len: usize) -> Result<usize, CoreError> {
    if net_len == 0 {
        return Err(CoreError::BadParam(format!("verification net is empty")));
    }
    let p = pair_tail(params)?;
    if !(p > 1e-300) {
        return Err(CoreError::InfeasibleParams(format!(
            "pair collision mass {p:.3e} at the slack radius is too small to size against"
        )));
    }
    let n = ceil((2.0 * log(net_len as f64) + log(2.0)) / p);
    Ok(if n < 1.0 { 1 } else { n as usize })
}

/// N Gaussian directions that passed the exhaustive net pair check.
#[derive(Debug, Clone)]
pub struct SphericalFamily {
    params: SphericalParams,
    z: Vec<f64>,
    attempts: u32,
}

impl SphericalFamily {
    /// Reassemble from stored directions without re-verification.
    pub fn from_parts(params: SphericalParams, z: Vec<f64>) -> Result<Self, CoreError> {
        if params.n_filters == 0 || z.len() != params.n_filters * params.b {
            return Err(CoreError::DimMismatch {
                expected: params.n_filters * params.b,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite);
        }
        Ok(SphericalFamily { params, z, attempts: 0 })
    }

    pub fn params(&self) -> &SphericalParams {
        &self.params
    }

    pub fn n_filters(&self) -> usize {
        self.params.n_filters
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        &self.z[i * self.params.b..(i + 1) * self.params.b]
    }

    pub fn z_flat(&self) -> &[f64] {
        &self.z
    }

    /// Draws consumed by the accepted sample; 0 for reassembled families.
    pub fn attempts(&self) -> u32 {
        self.attempts
    }
}

fn and_any(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b.iter()).any(|(x, y)| x & y != 0)
}

/// First ordered net pair (self pairs included) within the slack radius that
/// no filter covers in both the update and query orientation, or None.
pub fn find_sph_net_violation(
    family: &SphericalFamily,
    net: &CapNet,
) -> Result<Option<(Vec<f64>, Vec<f64>)>, CoreError> {
    let p = &family.params;
    if net.b != p.b {
        return Err(CoreError::DimMismatch { expected: p.b, got: net.b });
    }
    let l = net.len();
    let nf = family.n_filters();
    let words = (nf + 63) / 64;
    let mut mu = alloc::vec![0u64; l * words];
    let mut mq = alloc::vec![0u64; l * words];
    for i in 0..l {
        let pt = net.point(i);
        for j in 0..nf {
            let d = dot(family.filter(j), pt);
            if d >= p.eta_u {
                mu[i * words + j / 64] |= 1u64 << (j % 64);
            }
            if d >= p.eta_q {
                mq[i * words + j / 64] |= 1u64 << (j % 64);
            }
        }
    }
    let s2 = p.slack_radius() * p.slack_radius() + 1e-12;
    for i in 0..l {
        for j in i..l {
            if dist_sq(net.point(i), net.point(j)) > s2 {
                continue;
            }
            let covered = and_any(&mu[i * words..(i + 1) * words], &mq[j * words..(j + 1) * words])
                && and_any(&mu[j * words..(j + 1) * words], &mq[i * words..(i + 1) * words]);
            if !covered {
                return Ok(Some((net.point(i).to_vec(), net.point(j).to_vec())));
            }
        }
    }
    Ok(None)
}

/// Draw Gaussian filter directions until the net pair check passes.
pub fn sample_spherical_family(
    params: &SphericalParams,
    net: &CapNet,
    rng: &mut RngStream,
) -> Result<SphericalFamily, CoreError> {
    if params.n_filters == 0 {
        return Err(CoreError::BadParam(format!(
            "filter count is unset; size it with required_sph_filters"
        )));
    }
    if net.is_empty() {
        return Err(CoreError::BadParam(format!("verification net is empty")));
    }
    let floats = params.n_filters.saturating_mul(params.b);
    if floats > 200_000_000 {
        return Err(CoreError::InfeasibleParams(format!(
            "family of {} filters in dimension {} will not fit in memory",
            params.n_filters, params.b
        )));
    }
    let rounds = if params.max_resamples == 0 { 1 } else { params.max_resamples };
    let mut last_witness: Vec<f64> = Vec::new();
    for attempt in 1..=rounds {
        let z = rng.normal_vec(floats);
        let family = SphericalFamily { params: *params, z, attempts: attempt };
        match find_sph_net_violation(&family, net)? {
            None => return Ok(family),
            Some((x, y)) => {
                last_witness = x;
                last_witness.extend_from_slice(&y);
            }
        }
    }
    Err(CoreError::VerificationFailed { attempts: rounds, witness: last_witness })
}

// ---------------------------------------------------------------------------
// Cube cover and decoding

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphSide {
    Update,
    Query,
}

/// Filter identity: the cover cube anchoring the cap plus the direction index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SphFilterId {
    pub cube: Vec<i32>,
    pub filter: u32,
}

/// Cubes of side r(b+2) repeated with pitch rb along each axis under a
/// uniform random shift. Side exceeds pitch by 2r, so any two points within
/// r of each other share at least one cube.
#[derive(Debug, Clone)]
pub struct CapCover {
    b: usize,
    side: f64,
    pitch: f64,
    shift: Vec<f64>,
}

pub fn sample_cap_cover(params: &SphericalParams, rng: &mut RngStream) -> CapCover {
    let pitch = params.cube_pitch();
    let shift = (0..params.b).map(|_| rng.uniform_in(0.0, pitch)).collect();
    CapCover { b: params.b, side: params.cube_side(), pitch, shift }
}

impl CapCover {
    pub fn from_parts(params: &SphericalParams, shift: Vec<f64>) -> Result<Self, CoreError> {
        if shift.len() != params.b {
            return Err(CoreError::DimMismatch { expected: params.b, got: shift.len() });
        }
        let pitch = params.cube_pitch();
        if shift.iter().any(|s| !(*s >= 0.0 && *s < pitch)) {
            return Err(CoreError::BadParam(format!("cover shift outside [0, pitch)")));
        }
        Ok(CapCover { b: params.b, side: params.cube_side(), pitch, shift })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// All cover cubes containing x, in odometer order over per-axis ranges.
    pub fn cubes_containing(&self, x: &[f64]) -> Result<Vec<Vec<i32>>, CoreError> {
        if x.len() != self.b {
            return Err(CoreError::DimMismatch { expected: self.b, got: x.len() });
        }
        let mut lo = Vec::with_capacity(self.b);
        let mut hi = Vec::with_capacity(self.b);
        let mut total: u128 = 1;
        for j in 0..self.b {
            let t = x[j] - self.shift[j];
            let l = floor((t - self.side) / self.pitch) as i64 + 1;
            let h = floor(t / self.pitch) as i64;
            debug_assert!(h >= l);
            lo.push(l);
            hi.push(h);
            total = total.saturating_mul((h - l + 1).max(1) as u128);
        }
        if total > CUBE_ENUM_CAP {
            return Err(CoreError::DecodeOverflow { cap: CUBE_ENUM_CAP as usize, point: None });
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut k = lo.clone();
        loop {
            out.push(k.iter().map(|v| *v as i32).collect());
            let mut j = 0;
            loop {
                if j == self.b {
                    return Ok(out);
                }
                k[j] += 1;
                if k[j] <= hi[j] {
                    break;
                }
                k[j] = lo[j];
                j += 1;
            }
        }
    }

    pub fn cube_center(&self, cube: &[i32]) -> Vec<f64> {
        (0..self.b)
            .map(|j| self.shift[j] + cube[j] as f64 * self.pitch + self.side / 2.0)
            .collect()
    }

    /// Householder normal mapping the cube's cap center onto the pole e_0,
    /// or None when the reflection degenerates to the identity.
    pub fn frame(&self, cube: &[i32]) -> Option<Vec<f64>> {
        let center = self.cube_center(cube);
        let nc = norm(&center);
        if nc < 1e-12 {
            return None;
        }
        let mut d: Vec<f64> = center.iter().map(|v| v / nc).collect();
        d[0] -= 1.0;
        let nd = norm(&d);
        if nd < 1e-12 {
            return None;
        }
        for v in d.iter_mut() {
            *v /= nd;
        }
        Some(d)
    }

    /// Deterministic common cube for points within side - pitch = 2r of each
    /// other along every axis; rederivable at any time from the pair alone.
    pub fn witness_cube(&self, x: &[f64], y: &[f64]) -> Result<Vec<i32>, CoreError> {
        if x.len() != self.b || y.len() != self.b {
            return Err(CoreError::DimMismatch { expected: self.b, got: x.len() });
        }
        let mut cube = Vec::with_capacity(self.b);
        for j in 0..self.b {
            let (m, mx) = if x[j] <= y[j] { (x[j], y[j]) } else { (y[j], x[j]) };
            let k = floor((m - self.shift[j]) / self.pitch);
            if mx >= self.shift[j] + k * self.pitch + self.side {
                return Err(CoreError::BadParam(format!(
                    "points are too far apart on axis {j} to share a cover cube"
                )));
            }
            cube.push(k as i32);
        }
        Ok(cube)
    }
}

/// Reflect across the stored Householder normal; None is the identity.
pub fn apply_frame(v: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    match v {
        None => x.to_vec(),
        Some(v) => {
            let t = 2.0 * dot(v, x);
            x.iter().zip(v.iter()).map(|(xi, vi)| xi - t * vi).collect()
        }
    }
}

/// All (cube, filter) pairs matching x on the given side. x must be a unit
/// vector; membership is evaluated on round_unit of the frame image, which
/// is what makes decode agree exactly with the verified net.
pub fn decode_spherical(
    family: &SphericalFamily,
    cover: &CapCover,
    x: &[f64],
    side: SphSide,
) -> Result<Vec<SphFilterId>, CoreError> {
    let params = &family.params;
    if x.len() != params.b {
        return Err(CoreError::DimMismatch { expected: params.b, got: x.len() });
    }
    if cover.b != params.b {
        return Err(CoreError::DimMismatch { expected: params.b, got: cover.b });
    }
    if fabs(norm(x) - 1.0) > 1e-9 {
        return Err(CoreError::BadParam(format!("decode expects a unit vector")));
    }
    let eta = match side {
        SphSide::Update => params.eta_u,
        SphSide::Query => params.eta_q,
    };
    let mut out = Vec::new();
    for cube in cover.cubes_containing(x)? {
        let v = cover.frame(&cube);
        let h = apply_frame(v.as_deref(), x);
        let t = round_unit(params, &h)?;
        for j in 0..family.n_filters() {
            if dot(family.filter(j), &t) >= eta {
                out.push(SphFilterId { cube: cube.clone(), filter: j as u32 });
            }
        }
    }
    Ok(out)
}

/// Whether u (update side) and q (query side) share a filter under one cover.
pub fn share_sph_filter(
    family: &SphericalFamily,
    cover: &CapCover,
    u: &[f64],
    q: &[f64],
) -> Result<bool, CoreError> {
    let mut a = decode_spherical(family, cover, u, SphSide::Update)?;
    let mut b = decode_spherical(family, cover, q, SphSide::Query)?;
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => return Ok(true),
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Threshold solving

/// Signed distance of (rho_u, rho_q) above the attainable tradeoff curve
/// c^2 sqrt(rho_q) + (c^2 - 1) sqrt(rho_u) >= sqrt(2 c^2 - 1).
pub fn curve_slack(c: f64, rho_u: f64, rho_q: f64) -> Result<f64, CoreError> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(CoreError::BadParam(format!("approximation factor {c} must exceed 1")));
    }
    for rho in [rho_u, rho_q] {
        if !(rho >= 0.0 && rho <= 1.0) {
            return Err(CoreError::BadParam(format!("exponent {rho} must lie in [0, 1]")));
        }
    }
    let c2 = c * c;
    Ok(c2 * sqrt(rho_q) + (c2 - 1.0) * sqrt(rho_u) - sqrt(2.0 * c2 - 1.0))
}

/// Thresholds with measured collision ratios and their per-level targets.
///
/// ratios = [F(eta_u)/G(r), F(eta_q)/G(r), G(cr)/G(r)] and
/// targets = [n^(rho_u/K), n^(rho_q/K), n^((rho_q-1)/K)]. The first two are
/// driven onto their targets exactly; the third is measured and reported,
/// since it only approaches its target as n and K grow.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdSolution {
    pub eta_u: f64,
    pub eta_q: f64,
    pub ratios: [f64; 3],
    pub targets: [f64; 3],
    pub within_slack: [bool; 3],
    pub curve_slack: f64,
}

/// Solve for (eta_u, eta_q) at one tensoring level. eta_q is eliminated by
/// fixing F(eta_q) = F(eta_u) n^((rho_q - rho_u)/K), which pins the second
/// ratio to the first; bisection then drives F(eta_u)/G(r) onto n^(rho_u/K).
/// Fails only for invalid domains or exponents below the tradeoff curve.
pub fn solve_thresholds(
    r: f64,
    c: f64,
    rho_u: f64,
    rho_q: f64,
    n: usize,
    k: u32,
) -> Result<ThresholdSolution, CoreError> {
    if !(r > 0.0 && r < 2.0) || !r.is_finite() {
        return Err(CoreError::BadParam(format!("radius {r} must lie in (0, 2)")));
    }
    if n < 2 {
        return Err(CoreError::BadParam(format!("instance size {n} must be at least 2")));
    }
    if k == 0 {
        return Err(CoreError::BadParam(format!("tensoring budget must be positive")));
    }
    if !(rho_u > 0.0) {
        return Err(CoreError::BadParam(format!("update exponent {rho_u} must be positive")));
    }
    let slack = curve_slack(c, rho_u, rho_q)?;
    if slack < -1e-12 {
        let c2 = c * c;
        return Err(CoreError::InfeasibleParams(format!(
            "exponents (rho_u, rho_q) = ({rho_u}, {rho_q}) lie below the tradeoff curve: \
             c^2 sqrt(rho_q) + (c^2 - 1) sqrt(rho_u) = {:.6} < sqrt(2 c^2 - 1) = {:.6}",
            c2 * sqrt(rho_q) + (c2 - 1.0) * sqrt(rho_u),
            sqrt(2.0 * c2 - 1.0)
        )));
    }
    let nf = n as f64;
    let kf = k as f64;
    let t_u = pow(nf, rho_u / kf);
    let t_q = pow(nf, rho_q / kf);
    let t_3 = pow(nf, (rho_q - 1.0) / kf);
    let eta_q_of = |eta_u: f64| -> Result<f64, CoreError> {
        let mut target = normal_tail(eta_u) * t_q / t_u;
        if target >= 1.0 {
            target = 1.0 - 1e-16;
        }
        if target < 1e-300 {
            target = 1e-300;
        }
        normal_tail_inv(target)
    };
    let ratio1 = |eta_u: f64| -> Result<f64, CoreError> {
        let eta_q = eta_q_of(eta_u)?;
        let g = gaussian_orthant(r, eta_u, eta_q)?;
        if !(g > 0.0) {
            return Ok(f64::INFINITY);
        }
        Ok(normal_tail(eta_u) / g)
    };
    // F/G is 1 at eta_u = -inf and grows without bound, so bracket the
    // crossing with a coarse sweep and bisect.
    let mut lo = -6.0;
    while ratio1(lo)? > t_u {
        lo -= 2.0;
        if lo < -30.0 {
            return Err(CoreError::NoConvergence("threshold bracket (low side)"));
        }
    }
    let mut hi = lo;
    loop {
        hi += 0.5;
        if ratio1(hi)? > t_u {
            break;
        }
        if hi > 14.0 {
            return Err(CoreError::NoConvergence("threshold bracket (high side)"));
        }
    }
    lo = hi - 0.5;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio1(mid)? > t_u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let eta_u = 0.5 * (lo + hi);
    let eta_q = eta_q_of(eta_u)?;
    let g_r = gaussian_orthant(r, eta_u, eta_q)?;
    if !(g_r > 0.0) {
        return Err(CoreError::NoConvergence("collision mass underflow at the solution"));
    }
    let cr = c * r;
    let r3 = if cr < 2.0 { gaussian_orthant(cr, eta_u, eta_q)? / g_r } else { 0.0 };
    let ratios = [normal_tail(eta_u) / g_r, normal_tail(eta_q) / g_r, r3];
    let targets = [t_u, t_q, t_3];
    let two_sided = |ratio: f64, target: f64| {
        ratio <= target * RATIO_SLACK + 1e-12 && ratio >= target / RATIO_SLACK - 1e-12
    };
    let within_slack = [
        two_sided(ratios[0], targets[0]),
        two_sided(ratios[1], targets[1]),
        ratios[2] <= targets[2] * RATIO_SLACK + 1e-12,
    ];
    Ok(ThresholdSolution { eta_u, eta_q, ratios, targets, within_slack, curve_slack: slack })
}

// ---------------------------------------------------------------------------
// Tensored composition

/// Level parameters for splitter-tensored cap families. The component family
/// lives in leaf dimension b at radius r(1 + 8 eps_b) with thresholds scaled
/// by sqrt(b/m), matching how splitting divides norms and inner products.
#[derive(Debug, Clone)]
pub struct SphTensorParams {
    m: usize,
    r: f64,
    c: f64,
    eta_u: f64,
    eta_q: f64,
    eps_b: f64,
    proj: ProjCollection,
    component: SphericalParams,
    decode_cap: usize,
}

impl SphTensorParams {
    pub fn new(
        r: f64,
        c: f64,
        eta_u: f64,
        eta_q: f64,
        eps_b: f64,
        proj: ProjCollection,
    ) -> Result<Self, CoreError> {
        let m = proj.root_dim();
        let b = proj.leaf_dim();
        if !(eps_b >= 0.0) || !eps_b.is_finite() {
            return Err(CoreError::BadParam(format!("distortion budget {eps_b} must be nonnegative")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(CoreError::BadParam(format!("radius {r} must be positive and finite")));
        }
        if !(c > 1.0) || !c.is_finite() {
            return Err(CoreError::BadParam(format!("approximation factor {c} must exceed 1")));
        }
        let arity = m / b;
        // Components only see distances scaled by sqrt(b/m); a cross-tree
        // recombination can shrink a far pair by at most sqrt(2), so the
        // guarantee needs cr >= sqrt(2) once there are two or more leaves.
        if arity >= 2 && c * r < sqrt(2.0) - 1e-12 {
            return Err(CoreError::InfeasibleParams(format!(
                "tensored decoding needs c r >= sqrt(2), got {:.4}",
                c * r
            )));
        }
        let cert = proj.cert_bound();
        if cert > eps_b + 1e-12 {
            return Err(CoreError::BadParam(format!(
                "splitting certificates allow distortion {cert:.4} beyond the budget {eps_b:.4}"
            )));
        }
        let scale = sqrt(b as f64 / m as f64);
        let component =
            SphericalParams::new(b, r * (1.0 + 8.0 * eps_b), c, eta_u * scale, eta_q * scale)?;
        Ok(SphTensorParams {
            m,
            r,
            c,
            eta_u,
            eta_q,
            eps_b,
            proj,
            component,
            decode_cap: 1_000_000,
        })
    }

    pub fn with_decode_cap(mut self, cap: usize) -> Self {
        self.decode_cap = cap;
        self
    }

    pub fn with_component_delta_s(mut self, delta_s: f64) -> Result<Self, CoreError> {
        self.component = self.component.with_delta_s(delta_s)?;
        Ok(self)
    }

    pub fn with_component_filters(mut self, n: usize) -> Self {
        self.component = self.component.with_filter_count(n);
        self
    }

    pub fn with_component_net_cap(mut self, cap: u64) -> Self {
        self.component = self.component.with_net_cap(cap);
        self
    }

    pub fn with_component_resamples(mut self, n: u32) -> Self {
        self.component = self.component.with_max_resamples(n);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta_u(&self) -> f64 {
        self.eta_u
    }

    pub fn eta_q(&self) -> f64 {
        self.eta_q
    }

    pub fn eps_b(&self) -> f64 {
        self.eps_b
    }

    pub fn proj(&self) -> &ProjCollection {
        &self.proj
    }

    pub fn component(&self) -> &SphericalParams {
        &self.component
    }

    pub fn decode_cap(&self) -> usize {
        self.decode_cap
    }

    pub fn arity(&self) -> usize {
        self.m / self.proj.leaf_dim()
    }

    pub fn leaf_dim(&self) -> usize {
        self.proj.leaf_dim()
    }

    /// sqrt(b/m): how splitting scales the norm of a balanced leaf.
    pub fn threshold_scale(&self) -> f64 {
        sqrt(self.proj.leaf_dim() as f64 / self.m as f64)
    }
}

/// One verified component family and one cover per (tree, leaf) slot, under
/// a shared pre-rotation. The verification net is built once and reused.
#[derive(Debug, Clone)]
pub struct SphTensorFamily {
    params: SphTensorParams,
    pre_rotation: Rotation,
    trees: Vec<SplitterTree>,
    families: Vec<SphericalFamily>,
    covers: Vec<CapCover>,
}

impl SphTensorFamily {
    pub fn params(&self) -> &SphTensorParams {
        &self.params
    }

    pub fn pre_rotation(&self) -> &Rotation {
        &self.pre_rotation
    }

    pub fn trees(&self) -> &[SplitterTree] {
        &self.trees
    }

    pub fn family_at(&self, tree: usize, leaf: usize) -> &SphericalFamily {
        &self.families[tree * self.params.arity() + leaf]
    }

    pub fn cover_at(&self, tree: usize, leaf: usize) -> &CapCover {
        &self.covers[tree * self.params.arity() + leaf]
    }
}

pub fn sample_sph_tensor_family(
    params: &SphTensorParams,
    rng: &mut RngStream,
) -> Result<SphTensorFamily, CoreError> {
    let trees: Vec<SplitterTree> = params.proj.enumerate_trees()?.collect();
    let pre_rotation = random_rotation(params.m, &mut rng.substream("sph-prerot"))?;
    let net = build_cap_net(&params.component)?;
    let mut resolved = params.clone();
    if resolved.component.n_filters == 0 {
        let n = required_sph_filters(&resolved.component, net.len())?;
        resolved.component = resolved.component.with_filter_count(n);
    }
    let arity = resolved.arity();
    let mut families = Vec::with_capacity(trees.len() * arity);
    let mut covers = Vec::with_capacity(trees.len() * arity);
    for t in 0..trees.len() {
        for i in 0..arity {
            let mut frng = rng.substream("sph-fam").substream_idx(t as u64).substream_idx(i as u64);
            families.push(sample_spherical_family(&resolved.component, &net, &mut frng)?);
            let mut crng =
                rng.substream("sph-cover").substream_idx(t as u64).substream_idx(i as u64);
            covers.push(sample_cap_cover(&resolved.component, &mut crng));
        }
    }
    Ok(SphTensorFamily { params: resolved, pre_rotation, trees, families, covers })
}

/// Tensor filter identity: a tree index plus one component filter per leaf.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SphTensorId {
    pub tree: u32,
    pub parts: Vec<SphFilterId>,
}

impl SphTensorId {
    /// Canonical little-endian byte key, fixed width for fixed parameters.
    pub fn encoded(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            4 + self.parts.iter().map(|p| 4 * p.cube.len() + 4).sum::<usize>(),
        );
        out.extend_from_slice(&self.tree.to_le_bytes());
        for part in &self.parts {
            for k in &part.cube {
                out.extend_from_slice(&k.to_le_bytes());
            }
            out.extend_from_slice(&part.filter.to_le_bytes());
        }
        out
    }
}

struct LeafDecode {
    ids: Vec<SphFilterId>,
}

/// Per-tree component decodes of x, or None when any leaf norm falls outside
/// eps_b of sqrt(b/m) (the tree then contributes nothing for this point).
fn decode_tree_leaves(
    family: &SphTensorFamily,
    rx: &[f64],
    tree: usize,
    side: SphSide,
) -> Result<Option<Vec<LeafDecode>>, CoreError> {
    let params = &family.params;
    let target = params.threshold_scale();
    let leaves = family.trees[tree].apply(rx)?;
    let mut out = Vec::with_capacity(leaves.len());
    for (i, leaf) in leaves.iter().enumerate() {
        let nl = norm(leaf);
        if nl <= 1e-12 || fabs(nl - target) > params.eps_b + 1e-12 {
            return Ok(None);
        }
        let unit: Vec<f64> = leaf.iter().map(|v| v / nl).collect();
        let ids = decode_spherical(family.family_at(tree, i), family.cover_at(tree, i), &unit, side)?;
        if ids.is_empty() {
            return Ok(None);
        }
        out.push(LeafDecode { ids });
    }
    Ok(Some(out))
}

/// Union over trees of all per-leaf filter combinations matching x.
pub fn decode_sph_tensor(
    family: &SphTensorFamily,
    x: &[f64],
    side: SphSide,
    point: Option<usize>,
) -> Result<Vec<SphTensorId>, CoreError> {
    let params = &family.params;
    if x.len() != params.m {
        return Err(CoreError::DimMismatch { expected: params.m, got: x.len() });
    }
    if fabs(norm(x) - 1.0) > 1e-9 {
        return Err(CoreError::BadParam(format!("decode expects a unit vector")));
    }
    let rx = family.pre_rotation.apply(x);
    let mut out: Vec<SphTensorId> = Vec::new();
    let mut total: u128 = 0;
    for t in 0..family.trees.len() {
        let Some(leaves) = decode_tree_leaves(family, &rx, t, side)? else {
            continue;
        };
        let prod: u128 = leaves.iter().map(|l| l.ids.len() as u128).product();
        total += prod;
        if total > params.decode_cap as u128 {
            return Err(CoreError::DecodeOverflow { cap: params.decode_cap, point });
        }
        let mut idx = alloc::vec![0usize; leaves.len()];
        'combos: loop {
            out.push(SphTensorId {
                tree: t as u32,
                parts: idx.iter().enumerate().map(|(i, &j)| leaves[i].ids[j].clone()).collect(),
            });
            let mut j = leaves.len();
            while j > 0 {
                j -= 1;
                idx[j] += 1;
                if idx[j] < leaves[j].ids.len() {
                    continue 'combos;
                }
                idx[j] = 0;
            }
            break;
        }
    }
    Ok(out)
}

/// Whether some tree gives u (update) and q (query) a common component
/// filter on every leaf, without materializing the product sets.
pub fn share_sph_tensor(family: &SphTensorFamily, u: &[f64], q: &[f64]) -> Result<bool, CoreError> {
    let params = &family.params;
    for x in [u, q] {
        if x.len() != params.m {
            return Err(CoreError::DimMismatch { expected: params.m, got: x.len() });
        }
        if fabs(norm(x) - 1.0) > 1e-9 {
            return Err(CoreError::BadParam(format!("decode expects a unit vector")));
        }
    }
    let ru = family.pre_rotation.apply(u);
    let rq = family.pre_rotation.apply(q);
    'tree: for t in 0..family.trees.len() {
        let Some(lu) = decode_tree_leaves(family, &ru, t, SphSide::Update)? else {
            continue;
        };
        let Some(lq) = decode_tree_leaves(family, &rq, t, SphSide::Query)? else {
            continue;
        };
        for (a, b) in lu.iter().zip(lq.iter()) {
            let mut ia = a.ids.clone();
            let mut ib = b.ids.clone();
            ia.sort_unstable();
            ib.sort_unstable();
            let (mut i, mut j) = (0, 0);
            let mut hit = false;
            while i < ia.len() && j < ib.len() {
                match ia[i].cmp(&ib[j]) {
                    core::cmp::Ordering::Less => i += 1,
                    core::cmp::Ordering::Greater => j += 1,
                    core::cmp::Ordering::Equal => {
                        hit = true;
                        break;
                    }
                }
            }
            if !hit {
                continue 'tree;
            }
        }
        return Ok(true);
    }
    Ok(false)
}

/// Greedy splitter search certifying u, q, and u - q through every node.
/// Existence is only guaranteed for nearly orthogonal pairs on the sphere;
/// callers treat failure as "this pair carries no guarantee", not as an
/// index error.
pub fn find_splitting_three(
    collection: &ProjCollection,
    u: &[f64],
    q: &[f64],
) -> Result<SplitterTree, CoreError> {
    let m = collection.root_dim();
    if u.len() != m || q.len() != m {
        return Err(CoreError::DimMismatch { expected: m, got: u.len() });
    }
    let diff: Vec<f64> = u.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
    let mut streams: [Vec<Vec<f64>>; 3] =
        [alloc::vec![u.to_vec()], alloc::vec![q.to_vec()], alloc::vec![diff]];
    let mut specs = Vec::new();
    let mut node = 1usize;
    for (level, eps) in collection.eps().iter().enumerate() {
        let width = streams[0].len();
        let mut next: [Vec<Vec<f64>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for pos in 0..width {
            let choices = collection.node_choices(node)?;
            let mut accepted = None;
            't: for t in 0..choices {
                let spec = collection.node_candidate(node, t)?;
                let mut children: [Option<(Vec<f64>, Vec<f64>)>; 3] = [None, None, None];
                for s in 0..3 {
                    let parent = &streams[s][pos];
                    let pn = norm(parent);
                    let h = spec.halving_apply(parent)?;
                    let co = spec.complement_apply(parent)?;
                    if pn > 1e-12 {
                        let rh = fabs(sqrt(2.0) * norm(&h) / pn - 1.0);
                        let rc = fabs(sqrt(2.0) * norm(&co) / pn - 1.0);
                        if rh > *eps || rc > *eps {
                            continue 't;
                        }
                    }
                    children[s] = Some((h, co));
                }
                accepted = Some((spec, children));
                break;
            }
            match accepted {
                Some((spec, children)) => {
                    specs.push(spec);
                    for (s, pair) in children.into_iter().enumerate() {
                        let (h, co) = pair.unwrap();
                        next[s].push(h);
                        next[s].push(co);
                    }
                }
                None => return Err(CoreError::SplittingNotFound { level, node }),
            }
            node += 1;
        }
        streams = next;
    }
    SplitterTree::new(m, collection.leaf_dim(), specs)
}

// ---------------------------------------------------------------------------
// Demo index

/// Minimal sphere index: points bucketed by encoded update filters.
#[derive(Debug, Clone)]
pub struct SphereDemoIndex {
    family: SphTensorFamily,
    points: Vec<RealVector>,
    bucket_keys: Vec<Vec<u8>>,
    bucket_offsets: Vec<usize>,
    postings: Vec<u32>,
}

pub fn build_sphere_demo(
    points: Vec<RealVector>,
    params: &SphTensorParams,
    rng: &mut RngStream,
) -> Result<SphereDemoIndex, CoreError> {
    if points.len() > u32::MAX as usize {
        return Err(CoreError::CollectionOverflow {
            size: points.len() as u128,
            cap: u32::MAX as u128,
        });
    }
    for (i, p) in points.iter().enumerate() {
        if p.dim() != params.m {
            return Err(CoreError::DimMismatch { expected: params.m, got: p.dim() });
        }
        if fabs(p.norm() - 1.0) > 1e-9 {
            return Err(CoreError::BadParam(format!("point {i} is not on the unit sphere")));
        }
    }
    let family = sample_sph_tensor_family(params, rng)?;
    let mut pairs: Vec<(Vec<u8>, u32)> = Vec::new();
    for (id, p) in points.iter().enumerate() {
        for fid in decode_sph_tensor(&family, p.as_slice(), SphSide::Update, Some(id))? {
            pairs.push((fid.encoded(), id as u32));
        }
    }
    pairs.sort();
    let mut bucket_keys = Vec::new();
    let mut bucket_offsets = Vec::new();
    let mut postings = Vec::with_capacity(pairs.len());
    for (key, id) in pairs {
        if bucket_keys.last() != Some(&key) {
            bucket_keys.push(key);
            bucket_offsets.push(postings.len());
        }
        postings.push(id);
    }
    bucket_offsets.push(postings.len());
    Ok(SphereDemoIndex { family, points, bucket_keys, bucket_offsets, postings })
}

impl SphereDemoIndex {
    pub fn family(&self) -> &SphTensorFamily {
        &self.family
    }

    pub fn points(&self) -> &[RealVector] {
        &self.points
    }

    pub fn num_buckets(&self) -> usize {
        self.bucket_keys.len()
    }

    pub fn num_postings(&self) -> usize {
        self.postings.len()
    }

    pub fn bucket(&self, key: &[u8]) -> &[u32] {
        match self.bucket_keys.binary_search_by(|k| k.as_slice().cmp(key)) {
            Ok(i) => &self.postings[self.bucket_offsets[i]..self.bucket_offsets[i + 1]],
            Err(_) => &[],
        }
    }
}

/// Scan the query's filters in decode order and return the first stored
/// point within chord distance c r. Far candidates count as false positives.
pub fn query_sphere_demo(index: &SphereDemoIndex, q: &[f64]) -> Result<QueryResult, CoreError> {
    let radius = index.family.params.c * index.family.params.r;
    let mut candidates = 0;
    let mut false_positives = 0;
    for fid in decode_sph_tensor(&index.family, q, SphSide::Query, None)? {
        for &pid in index.bucket(&fid.encoded()) {
            candidates += 1;
            let d = dist(q, index.points[pid as usize].as_slice());
            if d <= radius {
                return Ok(QueryResult { hit: Some((pid, d)), candidates, false_positives });
            }
            false_positives += 1;
        }
    }
    Ok(QueryResult { hit: None, candidates, false_positives })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caps::gaussian_orthant;
    use crate::splitters::{ProjCollection, ProjMode};
    use alloc::vec;
    use alloc::vec::Vec;

    // b = 2 workhorse: r = 0.5, symmetric eta = 1, default delta_s = 1/2.
    fn params_b2() -> SphericalParams {
        SphericalParams::new(2, 0.5, 2.0, 1.0, 1.0).unwrap()
    }

    fn params_b3() -> SphericalParams {
        SphericalParams::new(3, 0.5, 2.0, 1.0, 1.0).unwrap()
    }

    fn unit_rng(label: &str) -> RngStream {
        RngStream::new(0x5fe7_a011, label)
    }

    fn random_unit(rng: &mut RngStream, d: usize) -> Vec<f64> {
        rng.unit_vector(d)
    }

    /// q at chord distance exactly `chord` from u, in a random direction.
    fn perturb_on_sphere(rng: &mut RngStream, u: &[f64], chord: f64) -> Vec<f64> {
        let d = u.len();
        let theta = 2.0 * crate::math::asin((chord / 2.0).min(1.0));
        // Gram-Schmidt a random direction against u.
        loop {
            let w = rng.normal_vec(d);
            let proj = dot(&w, u);
            let mut t: Vec<f64> = w.iter().zip(u.iter()).map(|(wi, ui)| wi - proj * ui).collect();
            let nt = norm(&t);
            if nt < 1e-9 {
                continue;
            }
            for v in t.iter_mut() {
                *v /= nt;
            }
            let (cs, sn) = (crate::math::cos(theta), crate::math::sin(theta));
            return u.iter().zip(t.iter()).map(|(ui, ti)| cs * ui + sn * ti).collect();
        }
    }

    #[test]
    fn params_validation() {
        assert!(SphericalParams::new(1, 0.5, 2.0, 1.0, 1.0).is_err());
        assert!(SphericalParams::new(2, 0.0, 2.0, 1.0, 1.0).is_err());
        assert!(SphericalParams::new(2, 0.5, 1.0, 1.0, 1.0).is_err());
        assert!(SphericalParams::new(2, 0.5, 2.0, f64::NAN, 1.0).is_err());
        // Slack radius 1.5 * (1 + 2 * 0.5) = 3 reaches the diameter.
        assert!(SphericalParams::new(2, 1.5, 2.0, 1.0, 1.0).is_err());
        let p = params_b2();
        assert_eq!(p.delta_s(), 0.5);
        assert_eq!(p.k_budget(), 1);
        assert!(p.with_delta_s(0.0).is_err());
        assert!(p.with_delta_s(1.1).is_err());
        assert!(p.with_k_budget(0).is_err());
        assert!(fabs(p.slack_radius() - 1.0) < 1e-15);
        assert!(fabs(p.cube_side() - 2.0) < 1e-15);
        assert!(fabs(p.cube_pitch() - 1.0) < 1e-15);
    }

    #[test]
    fn joint_tail_spot_values() {
        // Quadrature reference values, 1e-8 absolute.
        let cases = [
            (0.5, 0.0, 0.0, 0.419569376745),
            (1.0, 1.0, 1.0, 0.062514094710),
            (0.75, 1.0, 1.0, 0.086338371956),
            (0.8333333, 0.5, 0.5, 0.188806041511),
            (1.5, 0.5, 1.5, 0.015194603629),
        ];
        for (s, eu, eq, want) in cases {
            let got = gaussian_orthant(s, eu, eq).unwrap();
            assert!(fabs(got - want) < 1e-8, "G({s},{eu},{eq}) = {got}, want {want}");
        }
    }

    #[test]
    fn net_counts_frozen() {
        assert_eq!(build_cap_net(&params_b2()).unwrap().len(), 60);
        assert_eq!(build_cap_net(&params_b2().with_delta_s(0.25).unwrap()).unwrap().len(), 92);
        assert_eq!(build_cap_net(&params_b2().with_delta_s(0.125).unwrap()).unwrap().len(), 220);
        assert_eq!(build_cap_net(&params_b3()).unwrap().len(), 2336);
        let wide = SphericalParams::new(3, 0.75, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(build_cap_net(&wide).unwrap().len(), 1010);
        // Halving delta_s roughly doubles the 1-sphere net.
        assert!(92.0 / 60.0 > 1.4 && 220.0 / 92.0 < 2.6);
        let net = build_cap_net(&params_b3()).unwrap();
        for i in 0..net.len() {
            assert!(fabs(norm(net.point(i)) - 1.0) < 1e-12);
        }
    }

    #[test]
    fn net_covers_the_circle() {
        let p = params_b2();
        let net = build_cap_net(&p).unwrap();
        let reach = p.r() * p.delta_s();
        // Exhaustive: max gap between angular neighbors bounds the covering
        // radius by chord(gap / 2).
        let mut angles: Vec<f64> = (0..net.len())
            .map(|i| {
                let pt = net.point(i);
                crate::math::atan2(pt[1], pt[0])
            })
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut max_gap = 2.0 * crate::math::PI - (angles[angles.len() - 1] - angles[0]);
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        let covering = 2.0 * crate::math::sin(max_gap / 4.0);
        assert!(covering <= reach + 1e-12, "covering radius {covering} > {reach}");
        // And round_unit witnesses it pointwise.
        let mut rng = unit_rng("cover-circle");
        for _ in 0..500 {
            let x = random_unit(&mut rng, 2);
            let y = round_unit(&p, &x).unwrap();
            assert!(dist(&x, &y) <= reach + 1e-12);
        }
    }

    #[test]
    fn net_region_restriction() {
        // r small enough that the cap region is a strict subset of the
        // sphere: 2 r (b + 2) sqrt(b) = 1.1314 < 2.
        let p = SphericalParams::new(2, 0.1, 2.0, 1.0, 1.0).unwrap().with_delta_s(0.5).unwrap();
        let rr = p.region_radius();
        assert!(rr < 2.0);
        let net = build_cap_net(&p).unwrap();
        assert_eq!(net.len(), 89);
        let pole = [1.0, 0.0];
        for i in 0..net.len() {
            assert!(dist(net.point(i), &pole) <= rr + 1e-9);
        }
        // Points within half the region radius round to net members: the
        // margin is 2x the reach of any frame image.
        let mut rng = unit_rng("region");
        for _ in 0..300 {
            let x = loop {
                let x = random_unit(&mut rng, 2);
                if dist(&x, &pole) <= rr / 2.0 {
                    break x;
                }
            };
            let y = round_unit(&p, &x).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..net.len() {
                let d = dist(net.point(i), &y);
                if d < best {
                    best = d;
                }
            }
            assert!(best < 1e-9, "rounded point left the net: {best}");
        }
    }

    #[test]
    fn round_unit_stays_in_shell() {
        let p = params_b3();
        let mut rng = unit_rng("shell");
        let s = p.net_spacing();
        for _ in 0..2000 {
            let x = random_unit(&mut rng, 3);
            let y = round_unit(&p, &x).unwrap();
            assert!(fabs(norm(&y) - 1.0) < 1e-12);
            assert!(dist(&x, &y) <= p.r() * p.delta_s() + 1e-12);
            // The raw rounded lattice point sits inside the kept shell.
            let g: Vec<f64> = x.iter().map(|v| round(v / s) * s).collect();
            assert!(fabs(norm(&g) - 1.0) <= p.shell_tol() + 1e-12);
        }
    }

    #[test]
    fn net_refuses_hopeless_boxes() {
        // b = 8 at r = 1/2: the lattice box alone is ~5.6e15 cells.
        let p = SphericalParams::new(8, 0.5, 2.0, 1.0, 1.0).unwrap();
        match build_cap_net(&p) {
            Err(CoreError::CollectionOverflow { size, .. }) => {
                assert!(size > 1_000_000_000_000u128);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        // And the count cap alone also trips.
        let small = params_b2().with_net_cap(10);
        match build_cap_net(&small) {
            Err(CoreError::CollectionOverflow { size, cap }) => {
                assert_eq!(cap, 10);
                assert_eq!(size, 11);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn required_filters_b2_frozen() {
        let p = params_b2();
        let net = build_cap_net(&p).unwrap();
        // (2 ln 60 + ln 2) / G(1, 1, 1) = 142.08 -> 143.
        assert_eq!(required_sph_filters(&p, net.len()).unwrap(), 143);
    }

    #[test]
    fn sample_b2_verifies_and_is_deterministic() {
        let net = build_cap_net(&params_b2()).unwrap();
        let p = params_b2().with_filter_count(143);
        let fam = sample_spherical_family(&p, &net, &mut unit_rng("fam-b2")).unwrap();
        assert!(fam.attempts() >= 1);
        assert_eq!(fam.n_filters(), 143);
        assert!(find_sph_net_violation(&fam, &net).unwrap().is_none());
        let again = sample_spherical_family(&p, &net, &mut unit_rng("fam-b2")).unwrap();
        assert_eq!(fam.z_flat(), again.z_flat());
        // Unset filter count is refused.
        assert!(sample_spherical_family(&params_b2(), &net, &mut unit_rng("x")).is_err());
    }

    #[test]
    fn verification_rejects_hostile_family() {
        // One filter pointing at the pole cannot cover antipodal-ish net
        // pairs; the violation scan must find a witness.
        let p = params_b2().with_filter_count(1);
        let net = build_cap_net(&p).unwrap();
        let fam = SphericalFamily::from_parts(p, vec![5.0, 0.0]).unwrap();
        let witness = find_sph_net_violation(&fam, &net).unwrap();
        assert!(witness.is_some());
        let (x, y) = witness.unwrap();
        assert!(dist(&x, &y) <= p.slack_radius() + 1e-9);
    }

    #[test]
    fn continuum_pairs_share_filter_b2() {
        let net = build_cap_net(&params_b2()).unwrap();
        let p = params_b2().with_filter_count(143);
        let fam = sample_spherical_family(&p, &net, &mut unit_rng("fam-pairs")).unwrap();
        let cover = sample_cap_cover(&p, &mut unit_rng("cover-pairs"));
        let mut rng = unit_rng("pairs-b2");
        let max_angle = 2.0 * crate::math::asin(p.r() / 2.0);
        for _ in 0..2000 {
            let a = rng.uniform_in(0.0, 2.0 * crate::math::PI);
            let d = rng.uniform_in(-max_angle, max_angle);
            let u = [crate::math::cos(a), crate::math::sin(a)];
            let q = [crate::math::cos(a + d), crate::math::sin(a + d)];
            assert!(dist(&u, &q) <= p.r() + 1e-12);
            assert!(share_sph_filter(&fam, &cover, &u, &q).unwrap());
        }
    }

    #[test]
    fn query_decode_is_subset_when_threshold_higher() {
        let p = SphericalParams::new(2, 0.5, 2.0, 0.8, 1.3).unwrap().with_filter_count(200);
        let mut rng = unit_rng("subset");
        let z = rng.normal_vec(200 * 2);
        let fam = SphericalFamily::from_parts(p, z).unwrap();
        let cover = sample_cap_cover(&p, &mut rng);
        for _ in 0..100 {
            let x = random_unit(&mut rng, 2);
            let u: Vec<SphFilterId> = decode_spherical(&fam, &cover, &x, SphSide::Update).unwrap();
            let q: Vec<SphFilterId> = decode_spherical(&fam, &cover, &x, SphSide::Query).unwrap();
            for id in &q {
                assert!(u.contains(id));
            }
        }
    }

    #[test]
    fn per_cube_counts_are_binomial() {
        // Unverified draws give exact Binomial(N, F(eta)) counts per cube.
        let n_filters = 143;
        let expect = n_filters as f64 * normal_tail(1.0);
        let sigma = sqrt(n_filters as f64 * normal_tail(1.0) * (1.0 - normal_tail(1.0)));
        let trials = 40;
        let mut rng = unit_rng("binomial");
        let mut sum = 0.0;
        for _ in 0..trials {
            let p = params_b2().with_filter_count(n_filters);
            let z = rng.normal_vec(n_filters * 2);
            let fam = SphericalFamily::from_parts(p, z).unwrap();
            let cover = sample_cap_cover(&p, &mut rng);
            let x = random_unit(&mut rng, 2);
            let first = cover.cubes_containing(&x).unwrap()[0].clone();
            let ids = decode_spherical(&fam, &cover, &x, SphSide::Update).unwrap();
            sum += ids.iter().filter(|id| id.cube == first).count() as f64;
        }
        let mean = sum / trials as f64;
        let band = 3.0 * sigma / sqrt(trials as f64);
        assert!(
            fabs(mean - expect) <= band,
            "mean {mean} vs {expect} +- {band}"
        );
    }

    #[test]
    fn verified_family_counts_within_doubled_band() {
        // Conditioning on verification skews counts by at most a factor 2's
        // worth of probability mass, so test at doubled width: 6 sigma.
        let net = build_cap_net(&params_b2()).unwrap();
        let p = params_b2().with_filter_count(143);
        let fam = sample_spherical_family(&p, &net, &mut unit_rng("fam-counts")).unwrap();
        let cover = sample_cap_cover(&p, &mut unit_rng("cover-counts"));
        let expect = 143.0 * normal_tail(1.0);
        let sigma = sqrt(143.0 * normal_tail(1.0) * (1.0 - normal_tail(1.0)));
        let mut rng = unit_rng("counts-pts");
        for _ in 0..50 {
            let x = random_unit(&mut rng, 2);
            let first = cover.cubes_containing(&x).unwrap()[0].clone();
            for side in [SphSide::Update, SphSide::Query] {
                let ids = decode_spherical(&fam, &cover, &x, side).unwrap();
                let count = ids.iter().filter(|id| id.cube == first).count() as f64;
                assert!(fabs(count - expect) <= 6.0 * sigma, "count {count} vs {expect}");
            }
        }
    }

    #[test]
    fn cover_always_holds_close_pairs() {
        let p = params_b3();
        let mut rng = unit_rng("cover-pairs-b3");
        for _ in 0..500 {
            let cover = sample_cap_cover(&p, &mut rng);
            let u = random_unit(&mut rng, 3);
            let chord = rng.uniform_in(0.0, p.r());
            let q = perturb_on_sphere(&mut rng, &u, chord);
            let cu = cover.cubes_containing(&u).unwrap();
            let cq = cover.cubes_containing(&q).unwrap();
            let w = cover.witness_cube(&u, &q).unwrap();
            assert!(cu.contains(&w));
            assert!(cq.contains(&w));
        }
    }

    #[test]
    fn cover_cube_count_matches_expectation() {
        // Per axis the containing-cube count is 1 + Bernoulli(2/b) over the
        // shift, so the mean number of cubes is (1 + 2/b)^b.
        let p = params_b3();
        let expect = pow(5.0 / 3.0, 3.0);
        let mut rng = unit_rng("cube-count");
        let mut sum = 0.0;
        let trials = 2000;
        for _ in 0..trials {
            let cover = sample_cap_cover(&p, &mut rng);
            let x = random_unit(&mut rng, 3);
            let cubes = cover.cubes_containing(&x).unwrap();
            assert!(!cubes.is_empty());
            sum += cubes.len() as f64;
        }
        let mean = sum / trials as f64;
        assert!(fabs(mean - expect) < 0.25, "mean {mean} vs {expect}");
    }

    #[test]
    fn frames_are_isometries_onto_the_pole() {
        let p = params_b3();
        let mut rng = unit_rng("frames");
        let mut pole = vec![0.0; 3];
        pole[0] = 1.0;
        for _ in 0..200 {
            let cover = sample_cap_cover(&p, &mut rng);
            let x = random_unit(&mut rng, 3);
            let y = random_unit(&mut rng, 3);
            let cube = cover.cubes_containing(&x).unwrap()[0].clone();
            let v = cover.frame(&cube);
            let hx = apply_frame(v.as_deref(), &x);
            let hy = apply_frame(v.as_deref(), &y);
            // Isometry and involution.
            assert!(fabs(dot(&hx, &hy) - dot(&x, &y)) < 1e-12);
            assert!(dist(&apply_frame(v.as_deref(), &hx), &x) < 1e-12);
            // The cap center lands on the pole.
            let center = cover.cube_center(&cube);
            let o = normalize(&center).unwrap();
            let ho = apply_frame(v.as_deref(), &o);
            assert!(dist(&ho, &pole) < 1e-9);
        }
        // None means identity.
        let x = random_unit(&mut rng, 3);
        assert_eq!(apply_frame(None, &x), x);
    }

    #[test]
    fn decode_finds_aligned_filter_and_rejects_off_sphere() {
        let p = params_b2().with_filter_count(1);
        let mut rng = unit_rng("aligned");
        let cover = sample_cap_cover(&p, &mut rng);
        let x = random_unit(&mut rng, 2);
        let cube0 = cover.cubes_containing(&x).unwrap()[0].clone();
        let v = cover.frame(&cube0);
        let t = round_unit(&p, &apply_frame(v.as_deref(), &x)).unwrap();
        let z: Vec<f64> = t.iter().map(|w| 3.0 * w).collect();
        let fam = SphericalFamily::from_parts(p, z).unwrap();
        let ids = decode_spherical(&fam, &cover, &x, SphSide::Update).unwrap();
        assert!(ids.contains(&SphFilterId { cube: cube0, filter: 0 }));
        let off: Vec<f64> = x.iter().map(|w| 1.1 * w).collect();
        assert!(decode_spherical(&fam, &cover, &off, SphSide::Update).is_err());
    }

    #[test]
    fn curve_slack_matches_hand_values() {
        // (1/7, 1/7) at c = 2 sits exactly on the curve.
        assert!(fabs(curve_slack(2.0, 1.0 / 7.0, 1.0 / 7.0).unwrap()) < 1e-12);
        // (0.1, 0.1) is below it.
        let s = curve_slack(2.0, 0.1, 0.1).unwrap();
        assert!(fabs(s - (-0.432157)) < 1e-4);
        // Large c admits tiny query exponents at rho_u = 1.
        assert!(curve_slack(100.0, 1.0, 1e-6).unwrap() > 0.0);
        assert!(curve_slack(2.0, -0.1, 0.5).is_err());
        assert!(curve_slack(1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn solve_symmetric_frozen() {
        // rho = 1/7 is the balanced point on the curve at c = 2.
        let sol = solve_thresholds(0.5, 2.0, 1.0 / 7.0, 1.0 / 7.0, 1000, 4).unwrap();
        assert!(fabs(sol.eta_u - 0.424829947) < 2e-5, "eta_u {}", sol.eta_u);
        assert!(fabs(sol.eta_u - sol.eta_q) < 1e-9);
        assert!(sol.within_slack[0] && sol.within_slack[1]);
        assert!(fabs(sol.curve_slack) < 1e-12);
        // The third ratio only meets its target asymptotically; at n = 1000,
        // K = 4 it overshoots by a measured 3.09x.
        assert!(!sol.within_slack[2]);
        assert!(fabs(sol.ratios[2] / sol.targets[2] - 3.0942) < 0.02);
        // K = 1 pushes thresholds far out and the overshoot grows.
        let deep = solve_thresholds(0.5, 2.0, 1.0 / 7.0, 1.0 / 7.0, 1000, 1).unwrap();
        assert!(fabs(deep.eta_u - 3.189271753) < 1e-3, "eta_u {}", deep.eta_u);
        assert!(deep.within_slack[0] && deep.within_slack[1]);
        assert!(!deep.within_slack[2]);
    }

    #[test]
    fn solve_asymmetric_frozen() {
        let sol = solve_thresholds(0.5, 2.0, 0.05, 0.35, 1000, 12).unwrap();
        assert!(fabs(sol.eta_u - (-0.465070072)) < 2e-5, "eta_u {}", sol.eta_u);
        assert!(fabs(sol.eta_q - (-0.867126189)) < 2e-5, "eta_q {}", sol.eta_q);
        assert!(sol.within_slack[0] && sol.within_slack[1]);
        assert!(fabs(sol.ratios[2] / sol.targets[2] - 1.3289) < 0.01);
    }

    #[test]
    fn solve_rejects_below_curve() {
        match solve_thresholds(0.5, 2.0, 0.1, 0.1, 1000, 4) {
            Err(CoreError::InfeasibleParams(msg)) => {
                assert!(msg.contains("tradeoff curve"), "{msg}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn solve_handles_cr_beyond_diameter() {
        // cr = 2.4 exceeds the diameter: no far pair exists on the sphere,
        // the third ratio is exactly 0 and trivially within slack.
        let sol = solve_thresholds(1.2, 2.0, 1.0 / 7.0, 1.0 / 7.0, 1000, 4).unwrap();
        assert_eq!(sol.ratios[2], 0.0);
        assert!(sol.within_slack[2]);
        assert!(sol.within_slack[0] && sol.within_slack[1]);
    }

    #[test]
    fn tensor_arity_one_reduces_to_component() {
        // m = b = 3 through a trivial splitter collection.
        let proj = ProjCollection::new(3, 3, ProjMode::Full, None).unwrap();
        let params = SphTensorParams::new(0.5, 2.0, 1.0, 1.0, 0.0, proj).unwrap();
        assert_eq!(params.arity(), 1);
        assert!(fabs(params.threshold_scale() - 1.0) < 1e-15);
        let fam = sample_sph_tensor_family(&params, &mut unit_rng("t-arity1")).unwrap();
        assert_eq!(fam.trees().len(), 1);
        let mut rng = unit_rng("arity1-pts");
        for _ in 0..20 {
            let x = random_unit(&mut rng, 3);
            let ids = decode_sph_tensor(&fam, &x, SphSide::Update, None).unwrap();
            let rx = normalize(&fam.pre_rotation().apply(&x)).unwrap();
            let direct =
                decode_spherical(fam.family_at(0, 0), fam.cover_at(0, 0), &rx, SphSide::Update)
                    .unwrap();
            assert_eq!(ids.len(), direct.len());
            for (id, d) in ids.iter().zip(direct.iter()) {
                assert_eq!(id.tree, 0);
                assert_eq!(id.parts.len(), 1);
                assert_eq!(&id.parts[0], d);
            }
        }
        // Arity 1 keeps the continuum guarantee unconditionally.
        for _ in 0..300 {
            let u = random_unit(&mut rng, 3);
            let chord = rng.uniform_in(0.0, 0.5);
            let q = perturb_on_sphere(&mut rng, &u, chord);
            assert!(share_sph_tensor(&fam, &u, &q).unwrap());
        }
    }

    #[test]
    fn tensor_rejects_bad_level_params() {
        // Arity 2 demands cr >= sqrt(2).
        let proj = ProjCollection::new(4, 2, ProjMode::Full, Some(vec![0.3])).unwrap();
        assert!(SphTensorParams::new(0.2, 2.0, 1.0, 1.0, 0.3, proj.clone()).is_err());
        // Certificates beyond the distortion budget are refused.
        assert!(SphTensorParams::new(0.2, 8.0, 1.0, 1.0, 0.01, proj).is_err());
    }

    #[test]
    fn tensor_rejection_rule_gates_trees() {
        let mode = ProjMode::Subsampled { per_node: 2, seed: 0xabcd };
        // A tight budget rejects every tree for generic points: leaf norms
        // fluctuate at order 1/sqrt(m) around sqrt(b/m).
        let proj = ProjCollection::new(4, 2, mode, Some(vec![1e-7])).unwrap();
        let params = SphTensorParams::new(0.1, 15.0, -1.5, -1.5, 1e-6, proj).unwrap();
        let fam = sample_sph_tensor_family(&params, &mut unit_rng("t-reject")).unwrap();
        let mut rng = unit_rng("reject-pts");
        for _ in 0..10 {
            let x = random_unit(&mut rng, 4);
            assert!(decode_sph_tensor(&fam, &x, SphSide::Update, None).unwrap().is_empty());
        }
        // A loose budget accepts them and produces well-formed ids.
        let proj = ProjCollection::new(
            4,
            2,
            ProjMode::Subsampled { per_node: 2, seed: 0xabce },
            Some(vec![0.8]),
        )
        .unwrap();
        let params = SphTensorParams::new(0.1, 15.0, -1.5, -1.5, 0.9, proj)
            .unwrap()
            .with_component_filters(12);
        let fam = sample_sph_tensor_family(&params, &mut unit_rng("t-accept")).unwrap();
        for _ in 0..10 {
            let x = random_unit(&mut rng, 4);
            let ids = decode_sph_tensor(&fam, &x, SphSide::Update, None).unwrap();
            assert!(!ids.is_empty());
            for id in &ids {
                assert!((id.tree as usize) < fam.trees().len());
                assert_eq!(id.parts.len(), 2);
                assert_eq!(id.parts[0].cube.len(), 2);
            }
        }
    }

    #[test]
    fn tensor_id_encoding_is_canonical() {
        let id = SphTensorId {
            tree: 7,
            parts: vec![
                SphFilterId { cube: vec![-1, 3], filter: 9 },
                SphFilterId { cube: vec![0, -2], filter: 1 },
            ],
        };
        let bytes = id.encoded();
        assert_eq!(bytes.len(), 4 + 2 * (2 * 4 + 4));
        let mut other = id.clone();
        other.tree = 8;
        assert_ne!(bytes, other.encoded());
        let mut other = id.clone();
        other.parts[1].filter = 2;
        assert_ne!(bytes, other.encoded());
        let mut other = id.clone();
        other.parts[0].cube[0] = 1;
        assert_ne!(bytes, other.encoded());
    }

    #[test]
    fn three_distance_splitting_certifies_all_streams() {
        let proj = ProjCollection::new(4, 2, ProjMode::Full, Some(vec![0.3])).unwrap();
        let mut rng = unit_rng("three-dist");
        let mut found = 0;
        for _ in 0..50 {
            let u = random_unit(&mut rng, 4);
            let chord = rng.uniform_in(0.05, 0.2);
            let q = perturb_on_sphere(&mut rng, &u, chord);
            let Ok(tree) = find_splitting_three(&proj, &u, &q) else {
                continue;
            };
            found += 1;
            let diff: Vec<f64> = u.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
            for x in [&u, &q, &diff] {
                let pn = norm(x);
                if pn <= 1e-12 {
                    continue;
                }
                let spec = &tree.specs()[0];
                let h = spec.halving_apply(x).unwrap();
                let co = spec.complement_apply(x).unwrap();
                assert!(fabs(sqrt(2.0) * norm(&h) / pn - 1.0) <= 0.3 + 1e-12);
                assert!(fabs(sqrt(2.0) * norm(&co) / pn - 1.0) <= 0.3 + 1e-12);
            }
        }
        assert!(found >= 10, "only {found} of 50 pairs split");
        // An impossible tolerance reports the blocking node.
        let tight = ProjCollection::new(4, 2, ProjMode::Full, Some(vec![1e-9])).unwrap();
        let u = random_unit(&mut rng, 4);
        let q = perturb_on_sphere(&mut rng, &u, 0.1);
        match find_splitting_three(&tight, &u, &q) {
            Err(CoreError::SplittingNotFound { level, node }) => {
                assert_eq!((level, node), (0, 1));
            }
            other => panic!("expected SplittingNotFound, got {other:?}"),
        }
    }

    #[test]
    fn tensor_conditional_guarantee_arity_two() {
        // Pairs that admit a three-distance splitting share a tensor filter
        // deterministically; pairs that do not carry no promise.
        let proj = ProjCollection::new(4, 2, ProjMode::Full, Some(vec![0.3])).unwrap();
        let cert = proj.cert_bound();
        let params = SphTensorParams::new(0.2, 8.0, 1.0, 1.0, cert, proj.clone()).unwrap();
        let fam = sample_sph_tensor_family(&params, &mut unit_rng("t-cond")).unwrap();
        let mut rng = unit_rng("cond-pts");
        let mut found = 0;
        for _ in 0..40 {
            let u = random_unit(&mut rng, 4);
            // 0.15 instead of the full r = 0.2 keeps even worst-case cert
            // distortion inside the component radius.
            let chord = rng.uniform_in(0.0, 0.15);
            let q = perturb_on_sphere(&mut rng, &u, chord);
            // The guarantee is conditioned on the rotated pair splitting.
            let ru = fam.pre_rotation().apply(&u);
            let rq = fam.pre_rotation().apply(&q);
            if find_splitting_three(&proj, &ru, &rq).is_err() {
                continue;
            }
            found += 1;
            assert!(share_sph_tensor(&fam, &u, &q).unwrap());
        }
        assert!(found >= 5, "only {found} of 40 pairs split");
    }

    #[test]
    fn demo_returns_stored_point_and_rejects_far_query() {
        let proj = ProjCollection::new(2, 2, ProjMode::Full, None).unwrap();
        let params = SphTensorParams::new(0.5, 2.0, 1.0, 1.0, 0.0, proj).unwrap();
        // Three points 120 degrees apart: pairwise chord sqrt(3) > cr = 1,
        // so only the queried point itself qualifies.
        let angles = [0.0, 2.0 * crate::math::PI / 3.0, 4.0 * crate::math::PI / 3.0];
        let points: Vec<RealVector> = angles
            .iter()
            .map(|a| RealVector::new(vec![crate::math::cos(*a), crate::math::sin(*a)]).unwrap())
            .collect();
        let index = build_sphere_demo(points, &params, &mut unit_rng("demo")).unwrap();
        for (i, a) in angles.iter().enumerate() {
            let q = [crate::math::cos(*a), crate::math::sin(*a)];
            let res = query_sphere_demo(&index, &q).unwrap();
            let (pid, d) = res.hit.expect("stored point must be found");
            assert_eq!(pid as usize, i);
            assert!(d < 1e-9);
        }
        // A singleton index and an antipodal query: nothing qualifies.
        let proj = ProjCollection::new(2, 2, ProjMode::Full, None).unwrap();
        let params = SphTensorParams::new(0.5, 2.0, 1.0, 1.0, 0.0, proj).unwrap();
        let single = vec![RealVector::new(vec![1.0, 0.0]).unwrap()];
        let index = build_sphere_demo(single, &params, &mut unit_rng("demo-single")).unwrap();
        let res = query_sphere_demo(&index, &[-1.0, 0.0]).unwrap();
        assert!(res.hit.is_none());
        assert_eq!(res.candidates, res.false_positives);
    }

    #[test]
    fn demo_planted_queries_always_hit() {
        let proj = ProjCollection::new(2, 2, ProjMode::Full, None).unwrap();
        let params = SphTensorParams::new(0.5, 2.0, 1.0, 1.0, 0.0, proj).unwrap();
        let mut rng = unit_rng("demo-planted");
        let points: Vec<RealVector> = (0..50)
            .map(|_| RealVector::new(random_unit(&mut rng, 2)).unwrap())
            .collect();
        let index = build_sphere_demo(points.clone(), &params, &mut unit_rng("demo-idx")).unwrap();
        for _ in 0..60 {
            let target = rng.below(50) as usize;
            let chord = rng.uniform_in(0.0, 0.5);
            let q = perturb_on_sphere(&mut rng, points[target].as_slice(), chord);
            let res = query_sphere_demo(&index, &q).unwrap();
            let (_, d) = res.hit.expect("planted neighbor must be found");
            assert!(d <= 1.0 + 1e-12);
        }
    }
}
