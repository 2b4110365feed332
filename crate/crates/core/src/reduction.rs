//! One-sided dimensionality reduction and the top-level index over R^d.
//!
//! A reduction stage is an orthogonal decomposition of R^d into d/d'
//! subspaces; the subproblem vector for block i is sqrt(d/d') * P_i x.
//! Energy splitting forces min_i sqrt(d/d') * ||P_i z|| <= ||z|| for every
//! z, so a near pair stays near in at least one block: the reduction never
//! loses a neighbor, it only creates false positives, which are filtered
//! by an exact distance check in the original dimension.
//!
//! Stage 1 is a signed-Hadamard-permutation map (one fwht evaluates every
//! block at once), stage 2 a dense random rotation. The top index composes
//! stage 1, per-block stage 2, and one bucketed tensor index per terminal
//! block.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ball_lattice::{
    default_delta, radius_floor, required_offsets, snap_delta, BallLatticeParams,
};
use crate::error::CoreError;
use crate::math::{log, sqrt};
use crate::ortho::{fwht_in_place, random_rotation, Rotation};
use crate::rng::RngStream;
use crate::splitters::{default_eps_schedule, ProjCollection, ProjMode};
use crate::tensor::{
    build_mid_index, decode_tensor, set_radius, MidIndex, TensorFamilyParams,
    DEFAULT_DECODE_CAP,
};
use crate::vector::{dist, RealVector};

/// Signed-Hadamard-permutation decomposition: x -> P * H_d * D * x with D a
/// Rademacher diagonal, H_d the normalized Hadamard transform and P a
/// uniform permutation. Rows are grouped into consecutive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FastJLDecomp {
    d: usize,
    block_dim: usize,
    signs: Vec<f64>,
    perm: Vec<u32>,
}

impl FastJLDecomp {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.d / self.block_dim
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    /// Restore from stored parts, revalidating the permutation and signs.
    pub fn from_parts(
        d: usize,
        block_dim: usize,
        signs: Vec<f64>,
        perm: Vec<u32>,
    ) -> Result<Self, CoreError> {
        check_block_split(d, block_dim)?;
        if !d.is_power_of_two() || !block_dim.is_power_of_two() {
            return Err(CoreError::NotPowerOfTwo(if d.is_power_of_two() { block_dim } else { d }));
        }
        if signs.len() != d || perm.len() != d {
            return Err(CoreError::DimMismatch { expected: d, got: signs.len().min(perm.len()) });
        }
        if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(CoreError::BadParam(String::from("signs must be +1 or -1")));
        }
        let mut seen = alloc::vec![false; d];
        for &p in &perm {
            let p = p as usize;
            if p >= d || seen[p] {
                return Err(CoreError::BadParam(format!("perm entry {p} repeated or out of range")));
            }
            seen[p] = true;
        }
        Ok(FastJLDecomp { d, block_dim, signs, perm })
    }

    /// Full image P H D x; all blocks fall out of one Hadamard pass.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, CoreError> {
        if x.len() != self.d {
            return Err(CoreError::DimMismatch { expected: self.d, got: x.len() });
        }
        let mut y: Vec<f64> = x.iter().zip(&self.signs).map(|(v, s)| v * s).collect();
        fwht_in_place(&mut y)?;
        Ok(self.perm.iter().map(|&p| y[p as usize]).collect())
    }

    /// Dense row-major materialization, for orthogonality tests at small d.
    pub fn dense(&self) -> Vec<f64> {
        let mut rows = alloc::vec![0.0; self.d * self.d];
        let mut e = alloc::vec![0.0; self.d];
        for j in 0..self.d {
            e[j] = 1.0;
            let col = self.apply(&e).expect("dims match");
            for i in 0..self.d {
                rows[i * self.d + j] = col[i];
            }
            e[j] = 0.0;
        }
        rows
    }
}

pub fn sample_stage1(d: usize, block_dim: usize, rng: &mut RngStream) -> Result<FastJLDecomp, CoreError> {
    if !d.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(d));
    }
    if !block_dim.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(block_dim));
    }
    check_block_split(d, block_dim)?;
    let signs: Vec<f64> = (0..d).map(|_| if rng.below(2) == 0 { 1.0 } else { -1.0 }).collect();
    let mut perm: Vec<u32> = (0..d as u32).collect();
    for i in (1..d).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    Ok(FastJLDecomp { d, block_dim, signs, perm })
}

/// Dense random rotation with rows grouped into consecutive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationDecomp {
    rotation: Rotation,
    block_dim: usize,
}

impl RotationDecomp {
    pub fn dim(&self) -> usize {
        self.rotation.dim()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.rotation.dim() / self.block_dim
    }

    pub fn rows(&self) -> &Rotation {
        &self.rotation
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rotation.apply(x)
    }

    /// Restore from stored rows, revalidating orthonormality to 1e-10.
    pub fn from_parts(d: usize, block_dim: usize, rows: Vec<f64>) -> Result<Self, CoreError> {
        check_block_split(d, block_dim)?;
        let rotation = Rotation::from_rows(d, rows)?;
        for i in 0..d {
            for j in i..d {
                let dot: f64 =
                    rotation.row(i).iter().zip(rotation.row(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if crate::math::fabs(dot - want) > 1e-10 {
                    return Err(CoreError::BadParam(format!(
                        "rows {i},{j} not orthonormal: dot {dot}"
                    )));
                }
            }
        }
        Ok(RotationDecomp { rotation, block_dim })
    }
}

pub fn sample_stage2(d: usize, block_dim: usize, rng: &mut RngStream) -> Result<RotationDecomp, CoreError> {
    check_block_split(d, block_dim)?;
    Ok(RotationDecomp { rotation: random_rotation(d, rng)?, block_dim })
}

fn check_block_split(d: usize, block_dim: usize) -> Result<(), CoreError> {
    if d == 0 || block_dim == 0 || block_dim > d || d % block_dim != 0 {
        return Err(CoreError::BadParam(format!("cannot split dim {d} into blocks of {block_dim}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageDecomp {
    Identity { d: usize },
    FastJL(FastJLDecomp),
    Rotation(RotationDecomp),
}

/// One reduction stage: a decomposition plus its bookkeeping targets.
/// `delta` is the per-pair false-positive rate the dimension was chosen
/// for, `eps` the distortion budget spent by applying the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStage {
    pub decomp: StageDecomp,
    pub delta: f64,
    pub eps: f64,
}

impl ReductionStage {
    pub fn in_dim(&self) -> usize {
        match &self.decomp {
            StageDecomp::Identity { d } => *d,
            StageDecomp::FastJL(f) => f.dim(),
            StageDecomp::Rotation(r) => r.dim(),
        }
    }

    pub fn block_dim(&self) -> usize {
        match &self.decomp {
            StageDecomp::Identity { d } => *d,
            StageDecomp::FastJL(f) => f.block_dim(),
            StageDecomp::Rotation(r) => r.block_dim(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.in_dim() / self.block_dim()
    }

    pub fn scale(&self) -> f64 {
        sqrt(self.in_dim() as f64 / self.block_dim() as f64)
    }

    /// Subproblem approximation factor after this stage.
    pub fn next_factor(&self, c_prev: f64) -> f64 {
        match self.decomp {
            StageDecomp::Identity { .. } => c_prev,
            _ => c_prev * (1.0 - self.eps),
        }
    }

    /// Scaled block images sqrt(d/d') * P_i x.
    pub fn apply_blocks(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, CoreError> {
        if x.len() != self.in_dim() {
            return Err(CoreError::DimMismatch { expected: self.in_dim(), got: x.len() });
        }
        let image: Vec<f64> = match &self.decomp {
            StageDecomp::Identity { .. } => x.to_vec(),
            StageDecomp::FastJL(f) => f.apply(x)?,
            StageDecomp::Rotation(r) => r.apply(x),
        };
        let s = self.scale();
        Ok(image.chunks(self.block_dim()).map(|c| c.iter().map(|v| v * s).collect()).collect())
    }
}

/// Split a dataset into one subproblem dataset per block.
pub fn reduce(points: &[RealVector], stage: &ReductionStage) -> Result<Vec<Vec<RealVector>>, CoreError> {
    let mut out: Vec<Vec<RealVector>> = (0..stage.num_blocks()).map(|_| Vec::new()).collect();
    for p in points {
        for (i, block) in stage.apply_blocks(p.as_slice())?.into_iter().enumerate() {
            out[i].push(RealVector::new(block)?);
        }
    }
    Ok(out)
}

/// Build-time knobs. `mid_dim`/`leaf_dim` override the dimension formulas;
/// the resolved record keeps both the formula values and what actually ran
/// so reports stay self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct TopConfig {
    pub seed: u64,
    /// Stage-1 dimension multiplier: m' = kappa1 * eps_a^-2 * ln^2(n d).
    pub kappa1: f64,
    /// Stage-2 dimension multiplier: m = kappa2 * ln n * ln ln n.
    pub kappa2: f64,
    /// Distortion budget spent per applied reduction stage.
    pub eps_a: f64,
    /// Tensor shrink tolerance; must dominate the splitter certificate.
    pub eps_b: f64,
    pub mid_dim: Option<usize>,
    pub leaf_dim: Option<usize>,
    /// None = full splitter enumeration (strict mode).
    pub proj_per_node: Option<usize>,
    pub proj_eps: Option<Vec<f64>>,
    /// Ball rounding target before snapping to divide the lattice period.
    pub delta: Option<f64>,
    /// Feasibility floor: the ball radius is raised until the cap-ratio
    /// argument of the success bound stays at or below this value.
    pub xi_max: f64,
    pub decode_cap: usize,
    pub max_resamples: u32,
    /// Reporting-only exponents from the cost model.
    pub gamma: f64,
    pub beta: f64,
}

impl Default for TopConfig {
    /// Desk-scale default: arity-1 tensor over 2-dimensional terminal
    /// blocks, which keeps the no-miss guarantee unconditional while the
    /// dimension formulas (recorded, printed) would ask for more than the
    /// net verification can afford.
    fn default() -> Self {
        TopConfig {
            seed: 0,
            kappa1: 1.0,
            kappa2: 1.0,
            eps_a: 0.2,
            eps_b: 0.0,
            mid_dim: Some(2),
            leaf_dim: None,
            proj_per_node: Some(8),
            proj_eps: None,
            delta: Some(0.2),
            xi_max: 0.7,
            decode_cap: DEFAULT_DECODE_CAP,
            max_resamples: 40,
            gamma: 1.0,
            beta: 1.0,
        }
    }
}

/// Fully-resolved build parameters, kept with the index and printed by the
/// harness. Formula values sit next to the resolved ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRecord {
    pub n: usize,
    pub d: usize,
    pub d_padded: usize,
    pub c: f64,
    pub c_terminal: f64,
    pub m_prime_formula: usize,
    pub stage1_applied: bool,
    pub stage1_dim: usize,
    pub m_formula: usize,
    pub m: usize,
    pub b: usize,
    pub arity: usize,
    pub stage2_applied: bool,
    pub num_terminal: usize,
    pub w: f64,
    pub w_formula: f64,
    pub delta: f64,
    pub n_offsets: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma: f64,
    pub beta: f64,
    pub strict: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopIndex {
    params: ParamRecord,
    original: Vec<RealVector>,
    stage1: Option<FastJLDecomp>,
    /// One rotation per stage-1 block; empty when stage 2 is skipped.
    stage2: Vec<RotationDecomp>,
    tensor_params: TensorFamilyParams,
    /// Grid of mid indexes, stage-1-major: grid[i * s2_blocks + j].
    mids: Vec<MidIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport {
    /// Point id and its original-dimension distance.
    pub hit: Option<(u32, f64)>,
    pub candidates: usize,
    pub false_positives: usize,
    /// False positives per terminal block, grid order.
    pub per_block_false_positives: Vec<usize>,
    /// True when the no-miss guarantee is unconditional for this index.
    pub strict: bool,
}

fn next_pow2_at_least(v: f64) -> usize {
    let mut p = 1usize;
    while (p as f64) < v {
        p <<= 1;
    }
    p
}

fn nearest_pow2(v: f64) -> usize {
    if v <= 1.0 {
        return 1;
    }
    let hi = next_pow2_at_least(v);
    let lo = hi >> 1;
    // Log-scale midpoint: prefer hi once v^2 >= lo * hi.
    if v * v >= (lo as f64) * (hi as f64) {
        hi
    } else {
        lo
    }
}

fn pad_to(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    out.extend_from_slice(x);
    out.resize(d, 0.0);
    out
}

pub fn build_top_index(
    points: Vec<RealVector>,
    c: f64,
    config: &TopConfig,
) -> Result<TopIndex, CoreError> {
    if !(c > 1.0) {
        return Err(CoreError::BadParam(format!("approximation factor {c} must exceed 1")));
    }
    let n = points.len();
    let d = match points.first() {
        Some(p) => p.dim(),
        None => 1,
    };
    for p in &points {
        if p.dim() != d {
            return Err(CoreError::DimMismatch { expected: d, got: p.dim() });
        }
    }
    let n_eff = n.max(2);
    let d_pad = d.next_power_of_two();
    let rng = RngStream::new(config.seed, "top");

    // Stage 1: skipped whenever the formula dimension is no smaller than
    // what we already have (always the case at desk scale).
    let ln_nd = log((n_eff * d_pad) as f64);
    let m_prime_formula =
        next_pow2_at_least(config.kappa1 * ln_nd * ln_nd / (config.eps_a * config.eps_a));
    let stage1 = if m_prime_formula < d_pad {
        Some(sample_stage1(d_pad, m_prime_formula, &mut rng.substream("stage1"))?)
    } else {
        None
    };
    let stage1_dim = stage1.as_ref().map(|f| f.block_dim()).unwrap_or(d_pad);
    let s1_blocks = d_pad / stage1_dim;
    let c1 = if stage1.is_some() { c * (1.0 - config.eps_a) } else { c };

    // Stage 2 per stage-1 block.
    let ln_n = log(n_eff as f64);
    let m_formula = nearest_pow2(config.kappa2 * ln_n * log(ln_n).max(0.0));
    let m_resolved = config.mid_dim.unwrap_or(m_formula);
    if m_resolved == 0 {
        return Err(CoreError::BadParam(String::from("mid dimension 0")));
    }
    let stage2: Vec<RotationDecomp> = if m_resolved < stage1_dim {
        let s2rng = rng.substream("stage2");
        (0..s1_blocks)
            .map(|i| sample_stage2(stage1_dim, m_resolved, &mut s2rng.substream_idx(i as u64)))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let stage2_applied = !stage2.is_empty();
    let m = if stage2_applied { m_resolved } else { stage1_dim };
    let s2_blocks = stage1_dim / m;
    let c_terminal = if stage2_applied { c1 * (1.0 - config.eps_a) } else { c1 };

    // Terminal tensor parameters, shared by every grid cell.
    let b = config.leaf_dim.unwrap_or(m);
    let w_formula = set_radius(m, n_eff, c_terminal)?;
    let delta_target = config.delta.unwrap_or_else(|| default_delta(b, w_formula));
    let floor = radius_floor(b, delta_target, config.xi_max);
    let w = if w_formula >= floor { w_formula } else { floor };
    let delta = snap_delta(w, delta_target);
    let mut ball = BallLatticeParams::new(b, w, delta, 0, config.max_resamples)
        .map_err(|e| stage_err("terminal ball parameters", e))?;
    ball.n_offsets =
        required_offsets(&ball).map_err(|e| stage_err("terminal filter count", e))?;
    let proj_mode = match config.proj_per_node {
        None => ProjMode::Full,
        Some(s) => ProjMode::Subsampled { per_node: s, seed: config.seed ^ 0x70726f6a },
    };
    let eps_schedule = match &config.proj_eps {
        Some(eps) => eps.clone(),
        None => default_eps_schedule(m, b).map_err(|e| stage_err("splitter schedule", e))?,
    };
    let proj = ProjCollection::new(m, b, proj_mode, Some(eps_schedule))
        .map_err(|e| stage_err("splitter collection", e))?;
    let strict = config.proj_per_node.is_none() || proj.arity() == 1;
    let tensor_params = TensorFamilyParams::new(config.eps_b, ball, proj, n_eff)
        .map_err(|e| stage_err("tensor parameters", e))?
        .with_decode_cap(config.decode_cap);

    let params = ParamRecord {
        n,
        d,
        d_padded: d_pad,
        c,
        c_terminal,
        m_prime_formula,
        stage1_applied: stage1.is_some(),
        stage1_dim,
        m_formula,
        m,
        b,
        arity: tensor_params.arity(),
        stage2_applied,
        num_terminal: s1_blocks * s2_blocks,
        w,
        w_formula,
        delta,
        n_offsets: ball.n_offsets,
        delta1: 1.0 / ((n_eff * d_pad) as f64),
        delta2: 1.0 / (n_eff as f64),
        eps_a: config.eps_a,
        eps_b: config.eps_b,
        kappa1: config.kappa1,
        kappa2: config.kappa2,
        gamma: config.gamma,
        beta: config.beta,
        strict,
        seed: config.seed,
    };

    let index_shell = TopIndex {
        params,
        original: points,
        stage1,
        stage2,
        tensor_params,
        mids: Vec::new(),
    };
    let num_terminal = index_shell.params.num_terminal;
    let mut per_block: Vec<Vec<RealVector>> =
        (0..num_terminal).map(|_| Vec::with_capacity(n)).collect();
    for p in &index_shell.original {
        for (g, block) in index_shell.terminal_blocks(p.as_slice())?.into_iter().enumerate() {
            per_block[g].push(RealVector::new(block)?);
        }
    }
    let mut mids = Vec::with_capacity(num_terminal);
    let mid_rng = rng.substream("mid");
    for (g, block_points) in per_block.into_iter().enumerate() {
        mids.push(
            build_mid_index(
                block_points,
                &index_shell.tensor_params,
                c_terminal,
                &mut mid_rng.substream_idx(g as u64),
            )
            .map_err(|e| stage_err("terminal index build", e))?,
        );
    }
    let mut index = index_shell;
    index.mids = mids;
    Ok(index)
}

fn stage_err(stage: &str, e: CoreError) -> CoreError {
    match e {
        CoreError::InfeasibleParams(msg) => {
            CoreError::InfeasibleParams(format!("{stage}: {msg}"))
        }
        CoreError::BadParam(msg) => CoreError::BadParam(format!("{stage}: {msg}")),
        other => other,
    }
}

impl TopIndex {
    pub fn params(&self) -> &ParamRecord {
        &self.params
    }

    pub fn original_points(&self) -> &[RealVector] {
        &self.original
    }

    pub fn stage1(&self) -> Option<&FastJLDecomp> {
        self.stage1.as_ref()
    }

    pub fn stage2(&self) -> &[RotationDecomp] {
        &self.stage2
    }

    pub fn tensor_params(&self) -> &TensorFamilyParams {
        &self.tensor_params
    }

    pub fn mids(&self) -> &[MidIndex] {
        &self.mids
    }

    /// Restore from stored parts (deserialization path); the mid indexes
    /// carry their own families and bucket tables.
    pub fn from_parts(
        params: ParamRecord,
        original: Vec<RealVector>,
        stage1: Option<FastJLDecomp>,
        stage2: Vec<RotationDecomp>,
        tensor_params: TensorFamilyParams,
        mids: Vec<MidIndex>,
    ) -> Result<Self, CoreError> {
        if mids.len() != params.num_terminal {
            return Err(CoreError::DimMismatch { expected: params.num_terminal, got: mids.len() });
        }
        Ok(TopIndex { params, original, stage1, stage2, tensor_params, mids })
    }

    /// All terminal-block images of a point in the original dimension,
    /// grid order, already scaled per stage.
    pub fn terminal_blocks(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, CoreError> {
        route_blocks(&self.params, self.stage1.as_ref(), &self.stage2, x)
    }
}

/// Terminal-block routing without a full index, for deserializers that must
/// recompute per-block points before the index exists.
pub fn route_blocks(
    params: &ParamRecord,
    stage1: Option<&FastJLDecomp>,
    stage2: &[RotationDecomp],
    x: &[f64],
) -> Result<Vec<Vec<f64>>, CoreError> {
    if x.len() != params.d {
        return Err(CoreError::DimMismatch { expected: params.d, got: x.len() });
    }
    let padded = pad_to(x, params.d_padded);
    let s1_images: Vec<Vec<f64>> = match stage1 {
        Some(f) => {
            let image = f.apply(&padded)?;
            let s = sqrt(params.d_padded as f64 / params.stage1_dim as f64);
            image
                .chunks(params.stage1_dim)
                .map(|ch| ch.iter().map(|v| v * s).collect())
                .collect()
        }
        None => alloc::vec![padded],
    };
    let mut out = Vec::with_capacity(params.num_terminal);
    if stage2.is_empty() {
        out.extend(s1_images);
        return Ok(out);
    }
    let s = sqrt(params.stage1_dim as f64 / params.m as f64);
    for (i, block) in s1_images.iter().enumerate() {
        let rotated = stage2[i].apply(block);
        for ch in rotated.chunks(params.m) {
            out.push(ch.iter().map(|v| v * s).collect());
        }
    }
    Ok(out)
}

/// Route a query through both stages and scan terminal buckets in grid
/// order. Qualification is the ORIGINAL-dimension distance at most c;
/// everything a bucket yields beyond that is a false positive, counted and
/// skipped, never returned.
pub fn query_top_index(index: &TopIndex, q: &RealVector) -> Result<QueryReport, CoreError> {
    let params = index.params();
    let blocks = index.terminal_blocks(q.as_slice())?;
    let mut candidates = 0;
    let mut false_positives = 0;
    let mut per_block = alloc::vec![0usize; params.num_terminal];
    for (g, mid) in index.mids.iter().enumerate() {
        for fid in decode_tensor(mid.family(), &blocks[g], None)? {
            for &pid in mid.bucket(&fid.encoded()) {
                candidates += 1;
                let d = dist(q.as_slice(), index.original[pid as usize].as_slice());
                if d <= params.c {
                    return Ok(QueryReport {
                        hit: Some((pid, d)),
                        candidates,
                        false_positives,
                        per_block_false_positives: per_block,
                        strict: params.strict,
                    });
                }
                false_positives += 1;
                per_block[g] += 1;
            }
        }
    }
    Ok(QueryReport {
        hit: None,
        candidates,
        false_positives,
        per_block_false_positives: per_block,
        strict: params.strict,
    })
}
