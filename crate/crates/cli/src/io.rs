//! File formats: fvecs vectors, CSV vectors, planted-id lists, and the
//! serialized index.
//!
//! # fvecs
//!
//! Per vector: a little-endian `i32` dimension, then that many
//! little-endian `f32` coordinates, repeated until end of file. Every
//! record must carry the same dimension; the first offender is reported by
//! record number.
//!
//! # CSV
//!
//! One vector per line, decimal floats separated by commas. Blank lines and
//! lines starting with `#` are skipped.
//!
//! # Index format, version 1
//!
//! All integers little-endian; `f64`/`f32` are IEEE-754 little-endian bit
//! patterns, so a load/save cycle is byte-identical. Layout:
//!
//! ```text
//! magic          5 bytes  "LVANN"
//! version        u32      1
//! param record:
//!   n u64 | d u64 | d_padded u64 | c f64 | c_terminal f64
//!   m_prime_formula u64 | stage1_applied u8 | stage1_dim u64
//!   m_formula u64 | m u64 | b u64 | arity u64 | stage2_applied u8
//!   num_terminal u64 | w f64 | w_formula f64 | delta f64 | n_offsets u64
//!   delta1 f64 | delta2 f64 | eps_a f64 | eps_b f64 | kappa1 f64
//!   kappa2 f64 | gamma f64 | beta f64 | strict u8 | seed u64
//! tensor params:
//!   ball: b u64 | w f64 | delta f64 | n_offsets u64 | max_resamples u32
//!   proj: m u64 | b u64 | mode u8 (0 full, 1 subsampled)
//!         per_node u64 | proj_seed u64 (both zero in full mode)
//!         eps_count u64 | eps f64 * eps_count
//!   eps_b f64 | n u64 | decode_cap u64
//! stage 1:       present u8
//!   if present:  d u64 | block u64 | signs i8 * d | perm u32 * d
//! stage 2:       count u64
//!   per decomp:  d u64 | block u64 | rows f64 * (d*d)
//! original points: count u64 | dim u64 | f64 * (count*dim)
//! mid indexes (one per terminal block, grid order):
//!   trees u64 | arity u64
//!   per (tree, leaf), leaf fastest: len u64 | offsets f64 * len
//!   buckets u64
//!   per bucket: key_len u32 | key bytes
//!   offsets u64 * (buckets + 1)
//!   postings u64 | u32 * postings
//! ```
//!
//! Per-terminal-block points are not stored: they are recomputed from the
//! original points through the stored stage decompositions, which is
//! deterministic and cheaper than carrying `num_terminal` copies of the
//! dataset.

use std::fs;
use std::path::Path;

use lvann_core::ball_lattice::{BallLatticeFamily, BallLatticeParams};
use lvann_core::reduction::{
    route_blocks, FastJLDecomp, ParamRecord, RotationDecomp, TopIndex,
};
use lvann_core::splitters::{ProjCollection, ProjMode};
use lvann_core::tensor::{MidIndex, TensorFamily, TensorFamilyParams};
use lvann_core::RealVector;

use crate::error::{FormatError, HarnessError};

const MAGIC: &[u8; 5] = b"LVANN";
const VERSION: u32 = 1;

/// fs wrappers that keep the path in the error message.
fn read_file(path: &Path) -> Result<Vec<u8>, HarnessError> {
    fs::read(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// fvecs

pub fn save_fvecs(path: &Path, points: &[RealVector]) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    for p in points {
        let dim = i32::try_from(p.dim())
            .map_err(|_| HarnessError::Input(format!("vector dimension {} too large", p.dim())))?;
        buf.extend_from_slice(&dim.to_le_bytes());
        for &v in p.as_slice() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_file(path, buf)?;
    Ok(())
}

pub fn load_fvecs(path: &Path) -> Result<Vec<RealVector>, HarnessError> {
    let bytes = read_file(path)?;
    let mut pos = 0usize;
    let mut out = Vec::new();
    let mut dim: Option<usize> = None;
    while pos < bytes.len() {
        let record = out.len();
        if pos + 4 > bytes.len() {
            return Err(HarnessError::format(
                FormatError::BadHeader,
                path,
                format!("record {record}: header cut off at byte {pos}"),
            ));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        pos += 4;
        if d <= 0 {
            return Err(HarnessError::format(
                FormatError::BadHeader,
                path,
                format!("record {record}: nonpositive dimension {d}"),
            ));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(HarnessError::format(
                    FormatError::DimMismatch,
                    path,
                    format!("record {record}: dimension {d}, expected {expected}"),
                ));
            }
            _ => {}
        }
        if pos + 4 * d > bytes.len() {
            return Err(HarnessError::format(
                FormatError::Truncated,
                path,
                format!("record {record}: payload needs {} bytes, {} left", 4 * d, bytes.len() - pos),
            ));
        }
        let mut coords = Vec::with_capacity(d);
        for i in 0..d {
            let v = f32::from_le_bytes(bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(HarnessError::format(
                    FormatError::BadValue,
                    path,
                    format!("record {record}, coordinate {i}: non-finite value"),
                ));
            }
            coords.push(v as f64);
        }
        pos += 4 * d;
        out.push(RealVector::new(coords).expect("finiteness checked above"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV

pub fn save_csv(path: &Path, points: &[RealVector]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for p in points {
        let line: Vec<String> = p.as_slice().iter().map(|v| format!("{v}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_file(path, text)?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Vec<RealVector>, HarnessError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut coords = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                HarnessError::format(
                    FormatError::BadValue,
                    path,
                    format!("line {}, field {}: cannot parse {:?}", lineno + 1, col + 1, field),
                )
            })?;
            if !v.is_finite() {
                return Err(HarnessError::format(
                    FormatError::BadValue,
                    path,
                    format!("line {}, field {}: non-finite value", lineno + 1, col + 1),
                ));
            }
            coords.push(v);
        }
        match dim {
            None => dim = Some(coords.len()),
            Some(expected) if expected != coords.len() => {
                return Err(HarnessError::format(
                    FormatError::DimMismatch,
                    path,
                    format!("line {}: {} fields, expected {expected}", lineno + 1, coords.len()),
                ));
            }
            _ => {}
        }
        out.push(RealVector::new(coords).expect("finiteness checked above"));
    }
    Ok(out)
}

/// Vectors from either supported format, chosen by file extension; `.csv`
/// is CSV, everything else fvecs.
pub fn load_vectors(path: &Path) -> Result<Vec<RealVector>, HarnessError> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        load_csv(path)
    } else {
        load_fvecs(path)
    }
}

// ---------------------------------------------------------------------------
// planted ids: one id per line, line i belongs to query i

pub fn save_planted(path: &Path, ids: &[u32]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for id in ids {
        text.push_str(&format!("{id}\n"));
    }
    write_file(path, text)?;
    Ok(())
}

pub fn load_planted(path: &Path) -> Result<Vec<u32>, HarnessError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: u32 = line.parse().map_err(|_| {
            HarnessError::format(
                FormatError::BadValue,
                path,
                format!("line {}: cannot parse id {:?}", lineno + 1, line),
            )
        })?;
        out.push(id);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// index writer

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

/// Serialize an index to its canonical byte form. Pure function of the
/// index contents, which is what makes build determinism testable at the
/// byte level.
pub fn index_to_bytes(index: &TopIndex) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);

    let p = index.params();
    w.usize(p.n);
    w.usize(p.d);
    w.usize(p.d_padded);
    w.f64(p.c);
    w.f64(p.c_terminal);
    w.usize(p.m_prime_formula);
    w.u8(p.stage1_applied as u8);
    w.usize(p.stage1_dim);
    w.usize(p.m_formula);
    w.usize(p.m);
    w.usize(p.b);
    w.usize(p.arity);
    w.u8(p.stage2_applied as u8);
    w.usize(p.num_terminal);
    w.f64(p.w);
    w.f64(p.w_formula);
    w.f64(p.delta);
    w.usize(p.n_offsets);
    w.f64(p.delta1);
    w.f64(p.delta2);
    w.f64(p.eps_a);
    w.f64(p.eps_b);
    w.f64(p.kappa1);
    w.f64(p.kappa2);
    w.f64(p.gamma);
    w.f64(p.beta);
    w.u8(p.strict as u8);
    w.u64(p.seed);

    let tp = index.tensor_params();
    w.usize(tp.ball.b);
    w.f64(tp.ball.w);
    w.f64(tp.ball.delta);
    w.usize(tp.ball.n_offsets);
    w.u32(tp.ball.max_resamples);
    w.usize(tp.proj.root_dim());
    w.usize(tp.proj.leaf_dim());
    match tp.proj.mode() {
        ProjMode::Full => {
            w.u8(0);
            w.u64(0);
            w.u64(0);
        }
        ProjMode::Subsampled { per_node, seed } => {
            w.u8(1);
            w.usize(per_node);
            w.u64(seed);
        }
    }
    w.usize(tp.proj.eps().len());
    for &e in tp.proj.eps() {
        w.f64(e);
    }
    w.f64(tp.eps_b);
    w.usize(tp.n);
    w.usize(tp.decode_cap);

    match index.stage1() {
        Some(f) => {
            w.u8(1);
            w.usize(f.dim());
            w.usize(f.block_dim());
            for &s in f.signs() {
                w.u8(if s > 0.0 { 1 } else { 0xff });
            }
            for &pi in f.perm() {
                w.u32(pi);
            }
        }
        None => w.u8(0),
    }

    w.usize(index.stage2().len());
    for r in index.stage2() {
        w.usize(r.dim());
        w.usize(r.block_dim());
        for i in 0..r.dim() {
            for &v in r.rows().row(i) {
                w.f64(v);
            }
        }
    }

    w.usize(index.original_points().len());
    w.usize(p.d);
    for pt in index.original_points() {
        for &v in pt.as_slice() {
            w.f64(v);
        }
    }

    for mid in index.mids() {
        let fam = mid.family();
        w.usize(fam.families().len());
        w.usize(fam.params().arity());
        for per_leaf in fam.families() {
            for ball in per_leaf {
                w.usize(ball.offsets_flat().len());
                for &v in ball.offsets_flat() {
                    w.f64(v);
                }
            }
        }
        w.usize(mid.num_buckets());
        for key in mid.bucket_keys() {
            w.u32(key.len() as u32);
            w.bytes(key);
        }
        for &off in mid.bucket_offsets() {
            w.usize(off);
        }
        w.usize(mid.postings().len());
        for &id in mid.postings() {
            w.u32(id);
        }
    }
    w.buf
}

pub fn save_index(path: &Path, index: &TopIndex) -> Result<(), HarnessError> {
    write_file(path, index_to_bytes(index))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// index reader

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], HarnessError> {
        if self.pos + len > self.buf.len() {
            return Err(HarnessError::format(
                FormatError::Truncated,
                self.path,
                format!("{what}: need {len} bytes at offset {}, file has {}", self.pos, self.buf.len()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8, HarnessError> {
        Ok(self.take(1, what)?[0])
    }
    fn bool(&mut self, what: &str) -> Result<bool, HarnessError> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(HarnessError::format(
                FormatError::BadValue,
                self.path,
                format!("{what}: flag byte {v} is neither 0 nor 1"),
            )),
        }
    }
    fn u32(&mut self, what: &str) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64, HarnessError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn usize(&mut self, what: &str) -> Result<usize, HarnessError> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| {
            HarnessError::format(
                FormatError::BadValue,
                self.path,
                format!("{what}: value {v} exceeds the address space"),
            )
        })
    }
    /// Length field that will be multiplied into an allocation; bounded by
    /// the remaining bytes so corrupt headers cannot demand absurd memory.
    fn len(&mut self, what: &str) -> Result<usize, HarnessError> {
        let v = self.usize(what)?;
        if v > self.buf.len() {
            return Err(HarnessError::format(
                FormatError::BadHeader,
                self.path,
                format!("{what}: count {v} exceeds the file size {}", self.buf.len()),
            ));
        }
        Ok(v)
    }
    fn f64(&mut self, what: &str) -> Result<f64, HarnessError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>, HarnessError> {
        let raw = self.take(8 * n, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn bad_structure(path: &Path, e: lvann_core::CoreError) -> HarnessError {
    HarnessError::format(FormatError::BadStructure, path, e.to_string())
}

pub fn load_index(path: &Path) -> Result<TopIndex, HarnessError> {
    let bytes = read_file(path)?;
    index_from_bytes(&bytes, path)
}

pub fn index_from_bytes(bytes: &[u8], path: &Path) -> Result<TopIndex, HarnessError> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    let magic = r.take(5, "magic")?;
    if magic != MAGIC {
        return Err(HarnessError::format(
            FormatError::BadMagic,
            path,
            format!("leading bytes {magic:?}, expected {MAGIC:?}"),
        ));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(HarnessError::format(
            FormatError::BadVersion,
            path,
            format!("format version {version}, this build reads {VERSION}"),
        ));
    }

    let params = ParamRecord {
        n: r.usize("n")?,
        d: r.usize("d")?,
        d_padded: r.usize("d_padded")?,
        c: r.f64("c")?,
        c_terminal: r.f64("c_terminal")?,
        m_prime_formula: r.usize("m_prime_formula")?,
        stage1_applied: r.bool("stage1_applied")?,
        stage1_dim: r.usize("stage1_dim")?,
        m_formula: r.usize("m_formula")?,
        m: r.usize("m")?,
        b: r.usize("b")?,
        arity: r.usize("arity")?,
        stage2_applied: r.bool("stage2_applied")?,
        num_terminal: r.len("num_terminal")?,
        w: r.f64("w")?,
        w_formula: r.f64("w_formula")?,
        delta: r.f64("delta")?,
        n_offsets: r.usize("n_offsets")?,
        delta1: r.f64("delta1")?,
        delta2: r.f64("delta2")?,
        eps_a: r.f64("eps_a")?,
        eps_b: r.f64("eps_b")?,
        kappa1: r.f64("kappa1")?,
        kappa2: r.f64("kappa2")?,
        gamma: r.f64("gamma")?,
        beta: r.f64("beta")?,
        strict: r.bool("strict")?,
        seed: r.u64("seed")?,
    };

    let ball = BallLatticeParams::new(
        r.usize("ball.b")?,
        r.f64("ball.w")?,
        r.f64("ball.delta")?,
        r.usize("ball.n_offsets")?,
        r.u32("ball.max_resamples")?,
    )
    .map_err(|e| bad_structure(path, e))?;
    let proj_m = r.usize("proj.m")?;
    let proj_b = r.usize("proj.b")?;
    let mode = match r.u8("proj.mode")? {
        0 => {
            r.u64("proj.per_node")?;
            r.u64("proj.seed")?;
            ProjMode::Full
        }
        1 => ProjMode::Subsampled { per_node: r.usize("proj.per_node")?, seed: r.u64("proj.seed")? },
        v => {
            return Err(HarnessError::format(
                FormatError::BadValue,
                path,
                format!("proj.mode: unknown tag {v}"),
            ))
        }
    };
    let eps_count = r.len("proj.eps_count")?;
    let eps = r.f64_vec(eps_count, "proj.eps")?;
    let proj = ProjCollection::new(proj_m, proj_b, mode, Some(eps))
        .map_err(|e| bad_structure(path, e))?;
    let eps_b = r.f64("tensor.eps_b")?;
    let tensor_n = r.usize("tensor.n")?;
    let decode_cap = r.usize("tensor.decode_cap")?;
    let tensor_params = TensorFamilyParams::new(eps_b, ball, proj, tensor_n)
        .map_err(|e| bad_structure(path, e))?
        .with_decode_cap(decode_cap);

    let stage1 = if r.bool("stage1.present")? {
        let d = r.len("stage1.d")?;
        let block = r.usize("stage1.block")?;
        let signs: Vec<f64> = r
            .take(d, "stage1.signs")?
            .iter()
            .map(|&b| if b == 1 { 1.0 } else { -1.0 })
            .collect();
        let raw = r.take(4 * d, "stage1.perm")?;
        let perm: Vec<u32> =
            raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Some(FastJLDecomp::from_parts(d, block, signs, perm).map_err(|e| bad_structure(path, e))?)
    } else {
        None
    };

    let stage2_count = r.len("stage2.count")?;
    let mut stage2 = Vec::with_capacity(stage2_count);
    for i in 0..stage2_count {
        let d = r.len(&format!("stage2[{i}].d"))?;
        let block = r.usize(&format!("stage2[{i}].block"))?;
        let rows = r.f64_vec(d * d, &format!("stage2[{i}].rows"))?;
        stage2.push(RotationDecomp::from_parts(d, block, rows).map_err(|e| bad_structure(path, e))?);
    }

    let n_points = r.len("points.count")?;
    let dim = r.usize("points.dim")?;
    if dim != params.d {
        return Err(HarnessError::format(
            FormatError::DimMismatch,
            path,
            format!("stored points have dim {dim}, param record says {}", params.d),
        ));
    }
    let mut original = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let coords = r.f64_vec(dim, &format!("points[{i}]"))?;
        original.push(RealVector::new(coords).map_err(|e| bad_structure(path, e))?);
    }

    // Per-terminal-block images, recomputed rather than stored.
    let mut per_block: Vec<Vec<RealVector>> =
        (0..params.num_terminal).map(|_| Vec::with_capacity(n_points)).collect();
    for pt in &original {
        let blocks = route_blocks(&params, stage1.as_ref(), &stage2, pt.as_slice())
            .map_err(|e| bad_structure(path, e))?;
        if blocks.len() != params.num_terminal {
            return Err(HarnessError::format(
                FormatError::BadStructure,
                path,
                format!("routing produced {} blocks, expected {}", blocks.len(), params.num_terminal),
            ));
        }
        for (g, block) in blocks.into_iter().enumerate() {
            per_block[g].push(RealVector::new(block).map_err(|e| bad_structure(path, e))?);
        }
    }

    let mut mids = Vec::with_capacity(params.num_terminal);
    for (g, block_points) in per_block.into_iter().enumerate() {
        let trees = r.len(&format!("mid[{g}].trees"))?;
        let arity = r.usize(&format!("mid[{g}].arity"))?;
        if arity != tensor_params.arity() {
            return Err(HarnessError::format(
                FormatError::BadStructure,
                path,
                format!("mid {g} stores arity {arity}, tensor params say {}", tensor_params.arity()),
            ));
        }
        let mut families = Vec::with_capacity(trees);
        for t in 0..trees {
            let mut per_leaf = Vec::with_capacity(arity);
            for l in 0..arity {
                let len = r.len(&format!("mid[{g}] tree {t} leaf {l} offsets"))?;
                let offsets = r.f64_vec(len, &format!("mid[{g}] tree {t} leaf {l} offsets"))?;
                per_leaf.push(
                    BallLatticeFamily::from_verified_parts(tensor_params.ball, offsets)
                        .map_err(|e| bad_structure(path, e))?,
                );
            }
            families.push(per_leaf);
        }
        let family = TensorFamily::from_verified_parts(tensor_params.clone(), families)
            .map_err(|e| bad_structure(path, e))?;
        let n_buckets = r.len(&format!("mid[{g}].buckets"))?;
        let mut keys = Vec::with_capacity(n_buckets);
        for k in 0..n_buckets {
            let klen = r.u32(&format!("mid[{g}] bucket {k} key length"))? as usize;
            keys.push(r.take(klen, &format!("mid[{g}] bucket {k} key"))?.to_vec());
        }
        let mut offsets = Vec::with_capacity(n_buckets + 1);
        for k in 0..=n_buckets {
            offsets.push(r.usize(&format!("mid[{g}] offset {k}"))?);
        }
        let n_postings = r.len(&format!("mid[{g}].postings"))?;
        let raw = r.take(4 * n_postings, &format!("mid[{g}] postings"))?;
        let postings: Vec<u32> =
            raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        mids.push(
            MidIndex::from_raw_parts(family, params.c_terminal, block_points, keys, offsets, postings)
                .map_err(|e| bad_structure(path, e))?,
        );
    }

    if r.pos != bytes.len() {
        return Err(HarnessError::format(
            FormatError::BadStructure,
            path,
            format!("{} trailing bytes after the last section", bytes.len() - r.pos),
        ));
    }

    TopIndex::from_parts(params, original, stage1, stage2, tensor_params, mids)
        .map_err(|e| bad_structure(path, e))
}
