//! Orthonormal rotation vectors hiding the chain coordinates.

use rand::Rng;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, norm, random_unit, scaled};

/// Orthonormality tolerance for committed vectors.
pub const ORTHO_TOL: f64 = 1e-10;

/// Ordered orthonormal vectors `v_1..v_c` in `ℝ^dim`, of which `chain_len` are
/// eventually needed. Vectors past `committed_count()` are not yet chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationBasis {
    dim: usize,
    chain_len: usize,
    vectors: Vec<Arc<[f64]>>,
}

impl RotationBasis {
    pub fn empty(chain_len: usize, dim: usize) -> Result<Self> {
        if chain_len > dim {
            return Err(Error::InvalidInput(format!(
                "chain length {chain_len} exceeds dimension {dim}"
            )));
        }
        Ok(RotationBasis {
            dim,
            chain_len,
            vectors: Vec::with_capacity(chain_len),
        })
    }

    /// `v_i = e_i`.
    pub fn identity(chain_len: usize, dim: usize) -> Result<Self> {
        let mut b = Self::empty(chain_len, dim)?;
        for i in 0..chain_len {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            b.vectors.push(e.into());
        }
        Ok(b)
    }

    /// Fully committed basis drawn from the rotation-invariant distribution.
    pub fn random<R: Rng>(chain_len: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let mut b = Self::empty(chain_len, dim)?;
        let mut span = OrthoSpan::new(dim);
        while b.vectors.len() < chain_len {
            let v = span.draw_orthogonal(rng, 64)?;
            b.vectors.push(v.clone().into());
            span.push_orthonormal(v);
        }
        Ok(b)
    }

    /// Builds a basis from explicit vectors, checking orthonormality.
    pub fn from_vectors(chain_len: usize, dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let mut b = Self::empty(chain_len, dim)?;
        for v in vectors {
            b.commit(v)?;
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn committed_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_complete(&self) -> bool {
        self.vectors.len() == self.chain_len
    }

    pub fn vectors(&self) -> &[Arc<[f64]>] {
        &self.vectors
    }

    /// Appends `v` after checking it is a unit vector orthogonal to the committed ones.
    pub fn commit(&mut self, v: Vec<f64>) -> Result<()> {
        if self.is_complete() {
            return Err(Error::InconsistentBasis("basis already complete".into()));
        }
        if v.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        if (norm(&v) - 1.0).abs() > 1e-12 {
            return Err(Error::InconsistentBasis(format!(
                "vector {} has norm {}",
                self.vectors.len() + 1,
                norm(&v)
            )));
        }
        for (j, w) in self.vectors.iter().enumerate() {
            let ip = dot(&v, w);
            if ip.abs() > ORTHO_TOL {
                return Err(Error::InconsistentBasis(format!(
                    "vector {} has inner product {ip:e} with vector {}",
                    self.vectors.len() + 1,
                    j + 1
                )));
            }
        }
        self.vectors.push(v.into());
        Ok(())
    }

    /// `⟨v_j, u⟩` for every committed `j`, zero-padded to `chain_len`.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.chain_len];
        for (pj, v) in p.iter_mut().zip(&self.vectors) {
            *pj = dot(v, u);
        }
        p
    }

    /// `Σ_j c_j v_j` over committed vectors.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            if *c != 0.0 {
                axpy(&mut out, *c, v);
            }
        }
        out
    }

    /// Largest entry of `|VᵀV − I|` over committed vectors.
    pub fn gram_error(&self) -> f64 {
        let n = self.vectors.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.vectors[i], &self.vectors[j]) - target).abs());
            }
        }
        worst
    }
}

/// Orthonormal basis of a growing subspace, maintained by two-pass modified
/// Gram–Schmidt.
#[derive(Debug, Clone)]
pub struct OrthoSpan {
    dim: usize,
    q: Vec<Vec<f64>>,
}

impl OrthoSpan {
    pub fn new(dim: usize) -> Self {
        OrthoSpan { dim, q: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Removes the span components from `v` in place, two passes.
    pub fn project_out(&self, v: &mut [f64]) {
        for _ in 0..2 {
            for q in &self.q {
                let c = dot(q, v);
                axpy(v, -c, q);
            }
        }
    }

    /// Adds the direction of `v` if it is not already (numerically) in the span.
    /// Returns whether the rank grew.
    pub fn add(&mut self, v: &[f64]) -> bool {
        let scale = norm(v);
        if scale == 0.0 || self.q.len() == self.dim {
            return false;
        }
        let mut r = v.to_vec();
        self.project_out(&mut r);
        let rn = norm(&r);
        if rn <= 1e-10 * scale {
            return false;
        }
        self.q.push(scaled(&r, 1.0 / rn));
        true
    }

    /// Appends a vector that is already unit length and orthogonal to the span.
    pub fn push_orthonormal(&mut self, v: Vec<f64>) {
        self.q.push(v);
    }

    /// Random unit vector orthogonal to the span. A draw whose residual norm
    /// falls below `1e-8` is discarded, up to `attempts` times.
    pub fn draw_orthogonal<R: Rng>(&self, rng: &mut R, attempts: usize) -> Result<Vec<f64>> {
        if self.q.len() >= self.dim {
            return Err(Error::DimensionExhausted(format!(
                "span already has full rank {}",
                self.dim
            )));
        }
        for _ in 0..attempts {
            let mut v = random_unit(rng, self.dim);
            self.project_out(&mut v);
            let rn = norm(&v);
            if rn >= 1e-8 {
                return Ok(scaled(&v, 1.0 / rn));
            }
        }
        Err(Error::DimensionExhausted(format!(
            "no orthogonal direction found in {attempts} draws"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = RotationBasis::random(40, 60, &mut rng).unwrap();
        assert!(b.gram_error() < 1e-12);
        assert!(b.is_complete());
    }

    #[test]
    fn commit_rejects_non_orthogonal_vector() {
        let mut b = RotationBasis::empty(2, 3).unwrap();
        b.commit(vec![1.0, 0.0, 0.0]).unwrap();
        let s = 0.5f64.sqrt();
        assert!(matches!(
            b.commit(vec![s, s, 0.0]),
            Err(Error::InconsistentBasis(_))
        ));
    }

    #[test]
    fn drawn_vector_is_orthogonal_to_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut span = OrthoSpan::new(5);
        span.add(&[1.0, 2.0, 3.0, 0.0, 0.0]);
        span.add(&[0.0, 1.0, -1.0, 1.0, 0.0]);
        assert!(!span.add(&[2.0, 5.0, 5.0, 1.0, 0.0]));
        let v = span.draw_orthogonal(&mut rng, 64).unwrap();
        assert!(dot(&v, &[1.0, 2.0, 3.0, 0.0, 0.0]).abs() < 1e-12);
        assert!(dot(&v, &[0.0, 1.0, -1.0, 1.0, 0.0]).abs() < 1e-12);
    }

    #[test]
    fn full_span_exhausts_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut span = OrthoSpan::new(2);
        span.add(&[1.0, 0.0]);
        span.add(&[1.0, 1.0]);
        assert!(matches!(
            span.draw_orthogonal(&mut rng, 4),
            Err(Error::DimensionExhausted(_))
        ));
    }
}
