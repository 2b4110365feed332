//! Tensored filter families over R^m and the mid-dimensional index built
//! on them. Each splitter tree decomposes R^m into m/b subspaces; a point
//! decodes to the cartesian product of its per-subspace ball filters, and
//! the family is the union of those products over the whole tree
//! collection. Inputs are shrunk by 1/(1+eps_B) so that near pairs stay
//! within per-subspace reach even after an eps_B-distorted split.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ball_lattice::{self, BallFilterId, BallLatticeFamily, BallLatticeParams};
use crate::error::CoreError;
use crate::math::{log, sqrt};
use crate::rng::RngStream;
use crate::splitters::{ProjCollection, SplitterTree};
use crate::vector::{dist, RealVector};

pub const DEFAULT_DECODE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFamilyParams {
    pub m: usize,
    pub b: usize,
    pub eps_b: f64,
    pub ball: BallLatticeParams,
    pub proj: ProjCollection,
    /// Anticipated dataset size; drives the radius choice upstream.
    pub n: usize,
    pub decode_cap: usize,
}

impl TensorFamilyParams {
    pub fn new(
        eps_b: f64,
        ball: BallLatticeParams,
        proj: ProjCollection,
        n: usize,
    ) -> Result<Self, CoreError> {
        let m = proj.root_dim();
        let b = proj.leaf_dim();
        if ball.b != b {
            return Err(CoreError::DimMismatch { expected: b, got: ball.b });
        }
        if !(eps_b >= 0.0) || !eps_b.is_finite() {
            return Err(CoreError::BadParam(format!("shrink tolerance {eps_b} invalid")));
        }
        // The shared-filter argument scales leaf differences by (1+cert)
        // and shrinks inputs by (1+eps_b); the former must not win.
        let cert = proj.cert_bound();
        if cert > eps_b + 1e-12 {
            return Err(CoreError::BadParam(format!(
                "splitter certificate {cert} exceeds shrink tolerance {eps_b}"
            )));
        }
        if n < 2 {
            return Err(CoreError::BadParam(format!("dataset size {n} below 2")));
        }
        Ok(TensorFamilyParams { m, b, eps_b, ball, proj, n, decode_cap: DEFAULT_DECODE_CAP })
    }

    pub fn with_decode_cap(mut self, cap: usize) -> Self {
        self.decode_cap = cap;
        self
    }

    pub fn arity(&self) -> usize {
        self.m / self.b
    }
}

/// Ball radius for an m-dimensional tensor index over n points at
/// approximation factor c: w = c * sqrt(m / (8 ln n)).
pub fn set_radius(m: usize, n: usize, c: f64) -> Result<f64, CoreError> {
    if n < 2 {
        return Err(CoreError::BadParam(format!("dataset size {n} below 2")));
    }
    if m == 0 || !(c > 0.0) {
        return Err(CoreError::BadParam(format!("bad radius inputs m={m}, c={c}")));
    }
    Ok(c * sqrt(m as f64 / (8.0 * log(n as f64))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFamily {
    params: TensorFamilyParams,
    trees: Vec<SplitterTree>,
    /// families[tree][leaf], all verified.
    families: Vec<Vec<BallLatticeFamily>>,
}

/// One tensor filter: a tree and one ball filter per leaf, leaf order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorFilterId {
    pub tree_index: u32,
    pub parts: Vec<BallFilterId>,
}

impl TensorFilterId {
    /// Canonical little-endian byte key: tree index, then per part the
    /// offset index and cell coordinates, all fixed width.
    pub fn encode(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.tree_index.to_le_bytes());
        for part in &self.parts {
            buf.extend_from_slice(&part.offset_index.to_le_bytes());
            for c in &part.cell {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
    }

    pub fn encoded(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf);
        buf
    }
}

impl TensorFamily {
    pub fn params(&self) -> &TensorFamilyParams {
        &self.params
    }

    pub fn trees(&self) -> &[SplitterTree] {
        &self.trees
    }

    pub fn families(&self) -> &[Vec<BallLatticeFamily>] {
        &self.families
    }

    /// Rebuild from stored ball families; trees re-derive from the
    /// collection, families are trusted as previously verified.
    pub fn from_verified_parts(
        params: TensorFamilyParams,
        families: Vec<Vec<BallLatticeFamily>>,
    ) -> Result<Self, CoreError> {
        let trees: Vec<SplitterTree> = params.proj.enumerate_trees()?.collect();
        if families.len() != trees.len()
            || families.iter().any(|f| f.len() != params.arity())
        {
            return Err(CoreError::DimMismatch {
                expected: trees.len() * params.arity(),
                got: families.iter().map(|f| f.len()).sum(),
            });
        }
        Ok(TensorFamily { params, trees, families })
    }
}

/// Sample one verified ball family per (tree, leaf) pair, each from its own
/// derived stream so parallel or partial rebuilds stay reproducible.
pub fn sample_tensor_family(
    params: &TensorFamilyParams,
    rng: &mut RngStream,
) -> Result<TensorFamily, CoreError> {
    let trees: Vec<SplitterTree> = params.proj.enumerate_trees()?.collect();
    let arity = params.arity();
    let mut families = Vec::with_capacity(trees.len());
    for t in 0..trees.len() {
        let mut per_leaf = Vec::with_capacity(arity);
        for i in 0..arity {
            let mut stream = rng.substream_idx(t as u64).substream_idx(i as u64);
            per_leaf.push(ball_lattice::sample_family(&params.ball, &mut stream)?);
        }
        families.push(per_leaf);
    }
    Ok(TensorFamily { params: params.clone(), trees, families })
}

/// All tensor filters containing x: shrink, split per tree, decode each
/// leaf, and take the per-tree cartesian products. `point` only labels
/// overflow errors.
pub fn decode_tensor(
    family: &TensorFamily,
    x: &[f64],
    point: Option<usize>,
) -> Result<Vec<TensorFilterId>, CoreError> {
    let params = &family.params;
    if x.len() != params.m {
        return Err(CoreError::DimMismatch { expected: params.m, got: x.len() });
    }
    let shrunk: Vec<f64> = x.iter().map(|v| v / (1.0 + params.eps_b)).collect();
    let scale = sqrt(params.m as f64 / params.b as f64);
    let mut out = Vec::new();
    let mut total: u128 = 0;
    for (t, tree) in family.trees.iter().enumerate() {
        let leaves = tree.apply(&shrunk)?;
        let mut sets: Vec<Vec<BallFilterId>> = Vec::with_capacity(leaves.len());
        let mut empty = false;
        for (i, leaf) in leaves.iter().enumerate() {
            let y: Vec<f64> = leaf.iter().map(|v| v * scale).collect();
            let ids = ball_lattice::decode(&family.families[t][i], &y)?;
            if ids.is_empty() {
                empty = true;
                break;
            }
            sets.push(ids);
        }
        if empty {
            continue;
        }
        let product: u128 = sets.iter().map(|s| s.len() as u128).product();
        total += product;
        if total > params.decode_cap as u128 {
            return Err(CoreError::DecodeOverflow { cap: params.decode_cap, point });
        }
        // Odometer over the per-leaf sets, last leaf fastest.
        let arity = sets.len();
        let mut idx = alloc::vec![0usize; arity];
        loop {
            out.push(TensorFilterId {
                tree_index: t as u32,
                parts: idx.iter().enumerate().map(|(i, &k)| sets[i][k].clone()).collect(),
            });
            let mut pos = arity;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < sets[pos].len() {
                    break;
                }
                idx[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    Ok(out)
}

/// Bucketed mid-dimensional index: canonical filter keys mapped to sorted
/// point-id postings, plus the stored points for exact distance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MidIndex {
    family: TensorFamily,
    c: f64,
    points: Vec<RealVector>,
    bucket_keys: Vec<Vec<u8>>,
    /// bucket_keys.len() + 1 offsets into postings.
    bucket_offsets: Vec<usize>,
    postings: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    /// First stored point within distance c, with its true distance.
    pub hit: Option<(u32, f64)>,
    /// Candidates examined, including repeats across buckets.
    pub candidates: usize,
    /// Candidates rejected by the exact distance check.
    pub false_positives: usize,
}

pub fn build_mid_index(
    points: Vec<RealVector>,
    params: &TensorFamilyParams,
    c: f64,
    rng: &mut RngStream,
) -> Result<MidIndex, CoreError> {
    if !(c > 0.0) {
        return Err(CoreError::BadParam(format!("approximation factor {c} must be positive")));
    }
    for p in &points {
        if p.dim() != params.m {
            return Err(CoreError::DimMismatch { expected: params.m, got: p.dim() });
        }
    }
    let family = sample_tensor_family(params, rng)?;
    MidIndex::assemble(family, c, points)
}

impl MidIndex {
    /// Bucket the points under an already sampled family.
    pub fn assemble(
        family: TensorFamily,
        c: f64,
        points: Vec<RealVector>,
    ) -> Result<Self, CoreError> {
        let mut pairs: Vec<(Vec<u8>, u32)> = Vec::new();
        for (id, p) in points.iter().enumerate() {
            for fid in decode_tensor(&family, p.as_slice(), Some(id))? {
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
        Ok(MidIndex { family, c, points, bucket_keys, bucket_offsets, postings })
    }

    pub fn family(&self) -> &TensorFamily {
        &self.family
    }

    pub fn c(&self) -> f64 {
        self.c
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

    pub fn bucket_keys(&self) -> &[Vec<u8>] {
        &self.bucket_keys
    }

    pub fn bucket_offsets(&self) -> &[usize] {
        &self.bucket_offsets
    }

    pub fn postings(&self) -> &[u32] {
        &self.postings
    }

    /// Restore from stored bucket tables (deserialization path). The tables
    /// are revalidated structurally: sorted unique keys, monotone offsets
    /// bracketing the postings, ids in range. Bucket CONTENT is trusted;
    /// round-trip tests compare against a fresh assemble.
    pub fn from_raw_parts(
        family: TensorFamily,
        c: f64,
        points: Vec<RealVector>,
        bucket_keys: Vec<Vec<u8>>,
        bucket_offsets: Vec<usize>,
        postings: Vec<u32>,
    ) -> Result<Self, CoreError> {
        if !(c > 0.0) {
            return Err(CoreError::BadParam(format!("approximation factor {c} must be positive")));
        }
        for p in &points {
            if p.dim() != family.params.m {
                return Err(CoreError::DimMismatch { expected: family.params.m, got: p.dim() });
            }
        }
        if bucket_offsets.len() != bucket_keys.len() + 1 {
            return Err(CoreError::DimMismatch {
                expected: bucket_keys.len() + 1,
                got: bucket_offsets.len(),
            });
        }
        if bucket_offsets.first() != Some(&0)
            || bucket_offsets.last() != Some(&postings.len())
            || bucket_offsets.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CoreError::BadParam(String::from(
                "bucket offsets must rise from 0 to the posting count",
            )));
        }
        if bucket_keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::BadParam(String::from("bucket keys must be sorted and unique")));
        }
        if postings.iter().any(|&id| id as usize >= points.len()) {
            return Err(CoreError::BadParam(String::from("posting id out of range")));
        }
        Ok(MidIndex { family, c, points, bucket_keys, bucket_offsets, postings })
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&[u8], &[u32])> {
        (0..self.bucket_keys.len()).map(move |i| {
            (
                self.bucket_keys[i].as_slice(),
                &self.postings[self.bucket_offsets[i]..self.bucket_offsets[i + 1]],
            )
        })
    }
}

/// Scan the query's filters in decode order and return the first stored
/// point whose true distance is at most c. Far candidates are counted as
/// false positives and skipped, never returned.
pub fn query_mid_index(index: &MidIndex, q: &RealVector) -> Result<QueryResult, CoreError> {
    let mut candidates = 0;
    let mut false_positives = 0;
    for fid in decode_tensor(&index.family, q.as_slice(), None)? {
        for &pid in index.bucket(&fid.encoded()) {
            candidates += 1;
            let d = dist(q.as_slice(), index.points[pid as usize].as_slice());
            if d <= index.c {
                return Ok(QueryResult { hit: Some((pid, d)), candidates, false_positives });
            }
            false_positives += 1;
        }
    }
    Ok(QueryResult { hit: None, candidates, false_positives })
}
