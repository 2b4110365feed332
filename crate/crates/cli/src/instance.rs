//! Synthetic planted instances and the brute-force ground-truth oracle.
//!
//! A planted instance fixes the (r, cr) promise with r = 1: base points are
//! rejection-sampled to sit pairwise further than c + 1.2 apart, and each
//! query is a base point pushed a uniform distance in (0, 1] along a random
//! direction. Every non-planted point is then provably further than c + 0.2
//! from every query, so the planted neighbor is the only qualifying answer
//! and any hit can be audited exactly.

use lvann_core::vector::{dist, dist_sq};
use lvann_core::{RealVector, RngStream};

use crate::error::HarnessError;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<RealVector>,
    pub dim: usize,
    /// Where the points came from, for report headers.
    pub source: String,
}

impl Dataset {
    pub fn new(points: Vec<RealVector>, source: impl Into<String>) -> Result<Self, HarnessError> {
        let dim = points.first().map(|p| p.dim()).unwrap_or(0);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(HarnessError::Input(format!(
                    "point {i} has dim {}, expected {dim}",
                    p.dim()
                )));
            }
        }
        Ok(Dataset { points, dim, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PlantedQuery {
    pub query: RealVector,
    pub planted: u32,
}

#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub dataset: Dataset,
    pub queries: Vec<PlantedQuery>,
    /// Near radius is fixed at 1; this is the approximation factor the
    /// separation was built for.
    pub c: f64,
}

/// Exact linear-scan nearest neighbor; ties break to the smallest id.
pub fn brute_force_nn(dataset: &Dataset, q: &[f64]) -> Result<(u32, f64), HarnessError> {
    if dataset.is_empty() {
        return Err(HarnessError::Input("brute force scan over an empty dataset".into()));
    }
    if q.len() != dataset.dim {
        return Err(HarnessError::Input(format!(
            "query dim {} does not match dataset dim {}",
            q.len(),
            dataset.dim
        )));
    }
    let mut best = (0u32, f64::INFINITY);
    for (i, p) in dataset.points.iter().enumerate() {
        let d = dist_sq(q, p.as_slice());
        if d < best.1 {
            best = (i as u32, d);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

/// Generate a planted instance: `n` far points in a box, `n_queries`
/// queries each within distance 1 of its planted point. The construction is
/// audited by brute force before being returned.
pub fn gen_planted(
    n: usize,
    d: usize,
    c: f64,
    n_queries: usize,
    seed: u64,
) -> Result<PlantedInstance, HarnessError> {
    if n < 2 {
        return Err(HarnessError::Input(format!("need at least 2 points, got {n}")));
    }
    if d == 0 {
        return Err(HarnessError::Input("dimension must be positive".into()));
    }
    if !(c > 1.0) {
        return Err(HarnessError::Input(format!("approximation factor {c} must exceed 1")));
    }
    let mut rng = RngStream::new(seed, "planted");
    // Separation c + 1.2: a query sits within 1 of its base point, so every
    // other point stays further than c + 0.2 from it.
    let sep = c + 1.2;
    let sep_sq = sep * sep;
    // Box side sized for ~1/4^d packing density per point, which keeps
    // rejection sampling comfortably subcritical at every (n, d).
    let side = 4.0 * sep * (n as f64).powf(1.0 / d as f64);
    let budget = 200 * n + 10_000;
    let mut points: Vec<RealVector> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(HarnessError::Input(format!(
                "placed only {} of {n} points at pairwise separation {sep:.3} in a side-{side:.1} \
                 box after {budget} attempts; the geometry is too tight: lower n or c, or raise d",
                points.len()
            )));
        }
        let cand: Vec<f64> = (0..d).map(|_| rng.uniform_in(0.0, side)).collect();
        if points.iter().all(|p| dist_sq(p.as_slice(), &cand) > sep_sq) {
            points.push(RealVector::new(cand).expect("finite by construction"));
        }
    }
    let dataset = Dataset::new(points, format!("planted(n={n}, d={d}, c={c}, seed={seed})"))?;

    let mut queries = Vec::with_capacity(n_queries);
    for _ in 0..n_queries {
        loop {
            let id = rng.below(n as u64) as usize;
            let t = rng.uniform_open();
            let dir = rng.unit_vector(d);
            let q: Vec<f64> = dataset.points[id]
                .as_slice()
                .iter()
                .zip(&dir)
                .map(|(p, u)| p + t * u)
                .collect();
            // Floating point can nudge the realized distance past 1 when
            // t is at the top of its range; retry instead of shipping a
            // query that violates the instance invariant.
            if dist(&q, dataset.points[id].as_slice()) <= 1.0 {
                queries.push(PlantedQuery {
                    query: RealVector::new(q).expect("finite by construction"),
                    planted: id as u32,
                });
                break;
            }
        }
    }

    let instance = PlantedInstance { dataset, queries, c };
    audit_separation(&instance)?;
    Ok(instance)
}

/// Re-check the instance promise by brute force: the planted point is
/// within 1 of its query and is the nearest neighbor, and every other point
/// is further than c.
pub fn audit_separation(instance: &PlantedInstance) -> Result<(), HarnessError> {
    for (qi, pq) in instance.queries.iter().enumerate() {
        let planted = pq.planted as usize;
        if planted >= instance.dataset.len() {
            return Err(HarnessError::Input(format!(
                "query {qi} plants id {planted}, dataset has {} points",
                instance.dataset.len()
            )));
        }
        let dp = dist(pq.query.as_slice(), instance.dataset.points[planted].as_slice());
        if dp > 1.0 {
            return Err(HarnessError::Input(format!(
                "audit failed: query {qi} is {dp:.6} from its planted point, above 1"
            )));
        }
        for (i, p) in instance.dataset.points.iter().enumerate() {
            if i == planted {
                continue;
            }
            let dd = dist(pq.query.as_slice(), p.as_slice());
            if dd <= instance.c {
                return Err(HarnessError::Input(format!(
                    "audit failed: query {qi} is {dd:.6} from non-planted point {i}, within c = {}",
                    instance.c
                )));
            }
        }
        let (nn, _) = brute_force_nn(&instance.dataset, pq.query.as_slice())?;
        if nn != pq.planted {
            return Err(HarnessError::Input(format!(
                "audit failed: query {qi} brute-force neighbor {nn} is not the planted {planted}"
            )));
        }
    }
    Ok(())
}
