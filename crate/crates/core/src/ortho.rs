//! Orthogonal machinery: the normalized fast Walsh-Hadamard transform,
//! Haar-like random rotations, and the block decomposition type that
//! expresses R^d as a direct sum of d'-dimensional subspaces.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math::sqrt;
use crate::rng::RngStream;
use crate::vector::{dot, RealVector};

/// In-place (1/sqrt(d)) * H_d * x. The normalization makes it an involution
/// and an isometry.
pub fn fwht_in_place(x: &mut [f64]) -> Result<(), CoreError> {
    let d = x.len();
    if d == 0 || !d.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(d));
    }
    let mut h = 1;
    while h < d {
        let mut i = 0;
        while i < d {
            for j in i..i + h {
                let a = x[j];
                let b = x[j + h];
                x[j] = a + b;
                x[j + h] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
    let scale = 1.0 / sqrt(d as f64);
    for v in x.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

pub fn fwht(x: &RealVector) -> Result<RealVector, CoreError> {
    let mut out = x.as_slice().to_vec();
    fwht_in_place(&mut out)?;
    RealVector::new(out)
}

/// Dense d x d orthogonal matrix, row-major. y = R x has the same norm as x.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    d: usize,
    rows: Vec<f64>,
}

impl Rotation {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.d..(r + 1) * self.d]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        (0..self.d).map(|r| dot(self.row(r), x)).collect()
    }

    /// x = R^T y; exact inverse of apply up to roundoff.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.d);
        let mut out = vec![0.0; self.d];
        for r in 0..self.d {
            let yr = y[r];
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += yr * v;
            }
        }
        out
    }

    pub fn into_rows(self) -> Vec<f64> {
        self.rows
    }

    pub fn from_rows(d: usize, rows: Vec<f64>) -> Result<Self, CoreError> {
        if rows.len() != d * d {
            return Err(CoreError::DimMismatch { expected: d * d, got: rows.len() });
        }
        Ok(Rotation { d, rows })
    }

    /// Split the rows into contiguous blocks of `block_dim` each.
    pub fn into_decomp(self, block_dim: usize) -> Result<OrthoDecomp, CoreError> {
        OrthoDecomp::from_dense(self.d, block_dim, self.rows)
    }
}

/// Gaussian matrix orthonormalized row by row (modified Gram-Schmidt, one
/// re-orthogonalization pass), diagonal of the triangular factor positive.
pub fn random_rotation(d: usize, rng: &mut RngStream) -> Result<Rotation, CoreError> {
    if d == 0 {
        return Err(CoreError::BadParam(alloc::format!("rotation dimension must be positive")));
    }
    let mut rows = vec![0.0f64; d * d];
    for v in rows.iter_mut() {
        *v = rng.normal();
    }
    for r in 0..d {
        // Two projection sweeps keep orthogonality near machine precision.
        for _pass in 0..2 {
            for p in 0..r {
                let (done, cur) = rows.split_at_mut(r * d);
                let prev = &done[p * d..(p + 1) * d];
                let cur = &mut cur[..d];
                let c = dot(prev, cur);
                for (x, y) in cur.iter_mut().zip(prev) {
                    *x -= c * y;
                }
            }
        }
        let cur = &mut rows[r * d..(r + 1) * d];
        let nrm = sqrt(dot(cur, cur));
        if nrm < 1e-12 {
            // Probability-zero degeneracy; resample the row.
            for v in cur.iter_mut() {
                *v = rng.normal();
            }
            return random_rotation_retry(d, rows, r, rng);
        }
        for v in cur.iter_mut() {
            *v /= nrm;
        }
    }
    Ok(Rotation { d, rows })
}

// Cold path: restart orthonormalization from row r after a degenerate draw.
fn random_rotation_retry(
    d: usize,
    mut rows: Vec<f64>,
    from: usize,
    rng: &mut RngStream,
) -> Result<Rotation, CoreError> {
    for r in from..d {
        loop {
            for _pass in 0..2 {
                for p in 0..r {
                    let (done, cur) = rows.split_at_mut(r * d);
                    let prev = &done[p * d..(p + 1) * d];
                    let cur = &mut cur[..d];
                    let c = dot(prev, cur);
                    for (x, y) in cur.iter_mut().zip(prev) {
                        *x -= c * y;
                    }
                }
            }
            let cur = &mut rows[r * d..(r + 1) * d];
            let nrm = sqrt(dot(cur, cur));
            if nrm >= 1e-12 {
                for v in cur.iter_mut() {
                    *v /= nrm;
                }
                break;
            }
            for v in cur.iter_mut() {
                *v = rng.normal();
            }
        }
    }
    Ok(Rotation { d, rows })
}

/// How the blocks of a decomposition are realized.
#[derive(Debug, Clone, PartialEq)]
enum DecompKind {
    /// Block i reads coordinates [i*d', (i+1)*d').
    Identity,
    /// Stacked rows of a dense d x d orthogonal matrix.
    Dense(Vec<f64>),
}

/// Orthogonal decomposition of R^d into d/d' blocks of dimension d'. The
/// stacked block rows form an orthonormal basis, so per-block energies sum
/// to the squared input norm.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoDecomp {
    d: usize,
    block_dim: usize,
    kind: DecompKind,
}

impl OrthoDecomp {
    pub fn identity(d: usize, block_dim: usize) -> Result<Self, CoreError> {
        check_block_split(d, block_dim)?;
        Ok(OrthoDecomp { d, block_dim, kind: DecompKind::Identity })
    }

    pub fn from_dense(d: usize, block_dim: usize, rows: Vec<f64>) -> Result<Self, CoreError> {
        check_block_split(d, block_dim)?;
        if rows.len() != d * d {
            return Err(CoreError::DimMismatch { expected: d * d, got: rows.len() });
        }
        Ok(OrthoDecomp { d, block_dim, kind: DecompKind::Dense(rows) })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.d / self.block_dim
    }

    /// Row r of the stacked orthonormal system, materialized.
    pub fn row(&self, r: usize) -> Vec<f64> {
        debug_assert!(r < self.d);
        match &self.kind {
            DecompKind::Identity => {
                let mut e = vec![0.0; self.d];
                e[r] = 1.0;
                e
            }
            DecompKind::Dense(rows) => rows[r * self.d..(r + 1) * self.d].to_vec(),
        }
    }

    pub fn apply_block(&self, i: usize, x: &[f64]) -> Vec<f64> {
        debug_assert!(i < self.num_blocks());
        debug_assert_eq!(x.len(), self.d);
        let b = self.block_dim;
        match &self.kind {
            DecompKind::Identity => x[i * b..(i + 1) * b].to_vec(),
            DecompKind::Dense(rows) => (i * b..(i + 1) * b)
                .map(|r| dot(&rows[r * self.d..(r + 1) * self.d], x))
                .collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, CoreError> {
        if x.len() != self.d {
            return Err(CoreError::DimMismatch { expected: self.d, got: x.len() });
        }
        Ok((0..self.num_blocks()).map(|i| self.apply_block(i, x)).collect())
    }

    /// Pairwise-dot audit of the stacked rows against the Kronecker delta.
    pub fn check_orthonormal(&self, tol: f64) -> Result<(), CoreError> {
        for r in 0..self.d {
            let rr = self.row(r);
            for s in r..self.d {
                let want = if r == s { 1.0 } else { 0.0 };
                let got = dot(&rr, &self.row(s));
                if crate::math::fabs(got - want) > tol {
                    return Err(CoreError::BadParam(alloc::format!(
                        "rows {r},{s}: dot {got} vs {want}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_block_split(d: usize, block_dim: usize) -> Result<(), CoreError> {
    if d == 0 || block_dim == 0 || d % block_dim != 0 {
        return Err(CoreError::BadParam(alloc::format!(
            "block dimension {block_dim} must divide ambient dimension {d}"
        )));
    }
    Ok(())
}

pub fn apply_decomp(decomp: &OrthoDecomp, x: &RealVector) -> Result<Vec<RealVector>, CoreError> {
    let parts = decomp.apply(x.as_slice())?;
    parts.into_iter().map(RealVector::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::norm;

    #[test]
    fn fwht_matches_small_cases() {
        let y = fwht(&RealVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let s = 1.0 / sqrt(2.0);
        assert!((y[0] - s).abs() < 1e-15 && (y[1] - s).abs() < 1e-15);

        let y = fwht(&RealVector::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-15);
        for i in 1..4 {
            assert!(y[i].abs() < 1e-15);
        }
    }

    #[test]
    fn fwht_is_normalized_involution() {
        let mut rng = RngStream::new(11, "fwht");
        let x: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let v = RealVector::new(x.clone()).unwrap();
        let y = fwht(&v).unwrap();
        assert!((norm(&y) - norm(&x)).abs() <= 1e-10 * norm(&x));
        let z = fwht(&y).unwrap();
        for (a, b) in z.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fwht_rejects_bad_dims() {
        assert!(fwht(&RealVector::new(vec![1.0, 2.0, 3.0]).unwrap()).is_err());
        assert!(fwht_in_place(&mut []).is_err());
    }

    #[test]
    fn rotation_is_orthogonal_isometry() {
        let mut rng = RngStream::new(7, "rot");
        for d in [1usize, 2, 3, 8, 32] {
            let rot = random_rotation(d, &mut rng).unwrap();
            for r in 0..d {
                for s in r..d {
                    let want = if r == s { 1.0 } else { 0.0 };
                    assert!(
                        (dot(rot.row(r), rot.row(s)) - want).abs() < 1e-10,
                        "d={d} rows {r},{s}"
                    );
                }
            }
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let y = rot.apply(&x);
            assert!((norm(&y) - norm(&x)).abs() <= 1e-10 * norm(&x).max(1.0));
            let back = rot.apply_transpose(&y);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_is_deterministic_per_stream() {
        let a = random_rotation(16, &mut RngStream::new(99, "same")).unwrap();
        let b = random_rotation(16, &mut RngStream::new(99, "same")).unwrap();
        assert_eq!(a, b);
        let c = random_rotation(16, &mut RngStream::new(99, "other")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rotated_basis_vector_has_sphere_marginal() {
        // First coordinate of R e_1 is a uniform-on-sphere coordinate:
        // variance 1/d. 10^4 samples at d=4.
        let d = 4;
        let trials = 10_000;
        let mut rng = RngStream::new(42, "marginal");
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..trials {
            let rot = random_rotation(d, &mut rng).unwrap();
            let c = rot.row(0)[0]; // (R e_1)_1 = R_11
            sum += c;
            sumsq += c * c;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        // Var of x^2 for a sphere coordinate at d=4 is 1/16... use the Beta
        // form: x^2 ~ Beta(1/2, (d-1)/2), variance 2(d-1)/(d^2(d+2)).
        let se = sqrt(2.0 * (d as f64 - 1.0) / ((d * d) as f64 * (d as f64 + 2.0)) / trials as f64);
        assert!((var - 1.0 / d as f64).abs() < 3.0 * se, "var {var} vs {}", 1.0 / d as f64);
        assert!(mean.abs() < 3.0 / sqrt(trials as f64) * sqrt(1.0 / d as f64));
    }

    #[test]
    fn identity_decomp_slices_coordinates() {
        let dec = OrthoDecomp::identity(2, 1).unwrap();
        let parts = apply_decomp(&dec, &RealVector::new(vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].as_slice(), &[3.0]);
        assert_eq!(parts[1].as_slice(), &[4.0]);
    }

    #[test]
    fn decomp_conserves_energy() {
        let mut rng = RngStream::new(3, "energy");
        let rot = random_rotation(24, &mut rng).unwrap();
        let dec = rot.into_decomp(4).unwrap();
        assert_eq!(dec.num_blocks(), 6);
        dec.check_orthonormal(1e-10).unwrap();
        let x: Vec<f64> = (0..24).map(|_| rng.normal()).collect();
        let parts = dec.apply(&x).unwrap();
        let total: f64 = parts.iter().map(|p| dot(p, p)).sum();
        let nx = dot(&x, &x);
        assert!((total - nx).abs() <= 1e-9 * nx);
        // Zero maps to zero blocks.
        let zparts = dec.apply(&vec![0.0; 24]).unwrap();
        assert!(zparts.iter().all(|p| p.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(OrthoDecomp::identity(10, 3).is_err());
        assert!(OrthoDecomp::from_dense(4, 2, vec![0.0; 15]).is_err());
        let dec = OrthoDecomp::identity(4, 2).unwrap();
        assert!(dec.apply(&[1.0, 2.0]).is_err());
        let mut rows = vec![0.0; 16];
        for i in 0..4 {
            rows[i * 4 + i] = 1.0;
        }
        rows[1] = 0.5; // break orthonormality
        let bad = OrthoDecomp::from_dense(4, 2, rows).unwrap();
        assert!(bad.check_orthonormal(1e-10).is_err());
    }
}
