//! Deterministic, labeled, counter-based randomness.
//!
//! Every random choice in the crate flows through an [`RngStream`], which is
//! a pure function of `(master seed, stream label, counter)`. Draws are
//! therefore identical across platforms and thread schedules, which is what
//! makes index builds reproducible byte-for-byte. Streams are cheap to fork:
//! a substream's key depends only on the parent key and the substream label,
//! never on how much the parent has been consumed.

use alloc::string::String;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

// splitmix64 finalizer: full-avalanche 64-bit mix.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(parent: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET ^ mix(parent);
    for b in label.as_bytes() {
        h = (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME);
    }
    mix(h.wrapping_add(GOLDEN))
}

/// A labeled counter-based random stream. `Clone` copies the position.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
    label: String,
}

impl RngStream {
    /// Stream for `label` under a 64-bit master seed.
    pub fn new(seed: u64, label: &str) -> Self {
        RngStream {
            key: derive_key(mix(seed), label),
            counter: 0,
            label: String::from(label),
        }
    }

    /// Independent child stream; depends on this stream's label chain but
    /// not on its current counter.
    pub fn substream(&self, label: &str) -> Self {
        RngStream {
            key: derive_key(self.key, label),
            counter: 0,
            label: alloc::format!("{}/{label}", self.label),
        }
    }

    /// Indexed child stream, for per-item forks inside loops.
    pub fn substream_idx(&self, idx: u64) -> Self {
        let mut buf = itoa(idx);
        buf.insert(0, '#');
        self.substream(&buf)
    }

    /// Draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(GOLDEN.wrapping_mul(self.counter)))
    }

    /// Uniform draw from [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from (0, 1]; safe to feed to a logarithm.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). Widening multiply; the O(n / 2^64)
    /// selection bias is far below anything observable here.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Standard normal draw (Box-Muller, cosine branch). Two uniforms per
    /// draw keeps the counter accounting branch-free.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Vector of iid standard normals.
    pub fn normal_vec(&mut self, dim: usize) -> alloc::vec::Vec<f64> {
        (0..dim).map(|_| self.normal()).collect()
    }

    /// Uniform direction on the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> alloc::vec::Vec<f64> {
        loop {
            let v = self.normal_vec(dim);
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

fn itoa(mut v: u64) -> String {
    if v == 0 {
        return String::from("0");
    }
    let mut out = alloc::vec::Vec::new();
    while v > 0 {
        out.push(b'0' + (v % 10) as u8);
        v /= 10;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}
