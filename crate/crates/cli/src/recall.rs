//! Recall runs over a built index: per-query outcomes, miss accounting, and
//! the parallel benchmark path.
//!
//! A miss is a query that CLAIMS a planted neighbor (so a point within
//! distance 1 exists) yet comes back empty. Under a strict index the Las
//! Vegas contract forbids that, and the run aborts with a contract error.
//! Under a subsampled index misses are counted and reported as soft
//! failures. Queries without a planted claim cannot miss: an empty result
//! is a legitimate NotFound.

use std::time::Instant;

use rayon::prelude::*;

use lvann_core::reduction::{query_top_index, TopIndex};
use lvann_core::RealVector;

use crate::error::HarnessError;
use crate::instance::PlantedInstance;

#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub index: usize,
    /// Returned point id and its true original-dimension distance.
    pub hit: Option<(u32, f64)>,
    pub candidates: usize,
    pub false_positives: usize,
    /// False positives split by terminal block, grid order.
    pub per_block_false_positives: Vec<usize>,
    pub micros: u64,
    pub miss: bool,
}

#[derive(Debug, Clone)]
pub struct RecallReport {
    pub records: Vec<QueryRecord>,
    /// Whether the index's no-miss guarantee is unconditional.
    pub strict: bool,
    pub misses: usize,
    pub total_micros: u64,
}

impl RecallReport {
    pub fn mean_candidates(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.candidates as f64).sum::<f64>() / self.records.len() as f64
    }
}

/// Run queries against the index. `planted[i]`, when present, asserts that
/// a stored point lies within distance 1 of query i. Results always come
/// back in query order regardless of `parallel`.
pub fn run_queries(
    index: &TopIndex,
    queries: &[RealVector],
    planted: Option<&[u32]>,
    parallel: bool,
) -> Result<RecallReport, HarnessError> {
    if let Some(ids) = planted {
        if ids.len() != queries.len() {
            return Err(HarnessError::Input(format!(
                "{} planted ids for {} queries",
                ids.len(),
                queries.len()
            )));
        }
        let n = index.original_points().len();
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= n) {
            return Err(HarnessError::Input(format!(
                "planted id {bad} out of range for an index over {n} points"
            )));
        }
    }
    let run_one = |(i, q): (usize, &RealVector)| -> Result<QueryRecord, HarnessError> {
        let start = Instant::now();
        let rep = query_top_index(index, q)?;
        let micros = start.elapsed().as_micros() as u64;
        if let Some((id, d)) = rep.hit {
            // The index promises this by construction; check it anyway so a
            // future regression cannot quietly return far points.
            if d > index.params().c {
                return Err(HarnessError::Contract(format!(
                    "query {i} returned point {id} at distance {d:.6}, beyond c = {}",
                    index.params().c
                )));
            }
        }
        let miss = planted.map_or(false, |ids| ids.get(i).is_some() && rep.hit.is_none());
        Ok(QueryRecord {
            index: i,
            hit: rep.hit,
            candidates: rep.candidates,
            false_positives: rep.false_positives,
            per_block_false_positives: rep.per_block_false_positives,
            micros,
            miss,
        })
    };
    let records: Vec<QueryRecord> = if parallel {
        queries
            .par_iter()
            .enumerate()
            .map(run_one)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        queries.iter().enumerate().map(run_one).collect::<Result<Vec<_>, _>>()?
    };
    let misses = records.iter().filter(|r| r.miss).count();
    let strict = index.params().strict;
    if strict && misses > 0 {
        let first = records.iter().find(|r| r.miss).expect("counted above");
        return Err(HarnessError::Contract(format!(
            "strict-mode Las Vegas miss: query {} has a planted neighbor but returned nothing \
             ({misses} miss(es) total)",
            first.index
        )));
    }
    let total_micros = records.iter().map(|r| r.micros).sum();
    Ok(RecallReport { records, strict, misses, total_micros })
}

/// Recall over a planted instance: every query carries its planted claim.
pub fn run_recall(
    index: &TopIndex,
    instance: &PlantedInstance,
    parallel: bool,
) -> Result<RecallReport, HarnessError> {
    let queries: Vec<RealVector> = instance.queries.iter().map(|q| q.query.clone()).collect();
    let planted: Vec<u32> = instance.queries.iter().map(|q| q.planted).collect();
    run_queries(index, &queries, Some(&planted), parallel)
}

/// Plain-text report: one line per query, then the summary block.
pub fn render_report(report: &RecallReport, verbose: bool) -> String {
    let mut out = String::new();
    if verbose {
        for r in &report.records {
            match r.hit {
                Some((id, d)) => out.push_str(&format!(
                    "query {:>5}: hit {:>6} dist {:.6} candidates {:>6} false_positives {:>6} us {}\n",
                    r.index, id, d, r.candidates, r.false_positives, r.micros
                )),
                None => out.push_str(&format!(
                    "query {:>5}: not_found      candidates {:>6} false_positives {:>6} us {}{}\n",
                    r.index,
                    r.candidates,
                    r.false_positives,
                    r.micros,
                    if r.miss { " MISS" } else { "" }
                )),
            }
        }
    }
    let n = report.records.len();
    let hits = report.records.iter().filter(|r| r.hit.is_some()).count();
    out.push_str(&format!("queries = {n}\n"));
    out.push_str(&format!("hits = {hits}\n"));
    out.push_str(&format!("misses = {}\n", report.misses));
    out.push_str(&format!("strict_mode = {}\n", report.strict));
    out.push_str(&format!("mean_candidates = {:.3}\n", report.mean_candidates()));
    let fp: usize = report.records.iter().map(|r| r.false_positives).sum();
    out.push_str(&format!("total_false_positives = {fp}\n"));
    out.push_str(&format!("total_us = {}\n", report.total_micros));
    out
}

/// Benchmark summary with latency percentiles and throughput.
pub fn render_bench(report: &RecallReport, wall_micros: u64) -> String {
    let mut out = render_report(report, false);
    let mut lat: Vec<u64> = report.records.iter().map(|r| r.micros).collect();
    lat.sort_unstable();
    let pick = |q: f64| -> u64 {
        if lat.is_empty() {
            0
        } else {
            lat[(((lat.len() - 1) as f64) * q).round() as usize]
        }
    };
    out.push_str(&format!("latency_p50_us = {}\n", pick(0.50)));
    out.push_str(&format!("latency_p95_us = {}\n", pick(0.95)));
    out.push_str(&format!("latency_max_us = {}\n", pick(1.0)));
    let wall_s = wall_micros as f64 / 1e6;
    if wall_s > 0.0 {
        out.push_str(&format!(
            "throughput_qps = {:.1}\n",
            report.records.len() as f64 / wall_s
        ));
    }
    out.push_str(&format!("wall_us = {wall_micros}\n"));
    out
}
