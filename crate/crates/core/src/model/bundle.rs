//! Derivatives of the rotated chain in factored form.
//!
//! The order-`m` derivative is `Σ_i c_i r_i^{⊗m}` (plus `λ·I` at order 2) with
//! `r_i = v_i − v_{i+1}`. Vectors not yet committed count as zero, so a bundle
//! built from a partial basis is exact whenever the evaluation point is
//! orthogonal to the missing directions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, norm, SymTridiagonal};

/// Where the chain vectors `v_j` live.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    /// `v_j = e_j` for `j < committed`.
    Identity { committed: usize },
    /// Explicit orthonormal vectors.
    Rotated(Vec<Arc<[f64]>>),
}

impl Frame {
    pub fn committed(&self) -> usize {
        match self {
            Frame::Identity { committed } => *committed,
            Frame::Rotated(v) => v.len(),
        }
    }

    /// `⟨v_j, u⟩` zero-padded to `chain_len`.
    pub fn project(&self, u: &[f64], chain_len: usize) -> Vec<f64> {
        let mut p = vec![0.0; chain_len];
        match self {
            Frame::Identity { committed } => {
                let c = (*committed).min(chain_len);
                p[..c].copy_from_slice(&u[..c]);
            }
            Frame::Rotated(vs) => {
                for (pj, v) in p.iter_mut().zip(vs) {
                    *pj = dot(v, u);
                }
            }
        }
        p
    }

    /// `out += Σ_j w_j v_j` over committed `j`.
    pub fn accumulate(&self, w: &[f64], out: &mut [f64]) {
        match self {
            Frame::Identity { committed } => {
                for (o, wj) in out.iter_mut().zip(w).take(*committed) {
                    *o += wj;
                }
            }
            Frame::Rotated(vs) => {
                for (wj, v) in w.iter().zip(vs) {
                    if *wj != 0.0 {
                        axpy(out, *wj, v);
                    }
                }
            }
        }
    }
}

/// Result of contracting a derivative tensor with some directions.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Scalar(f64),
    Vector(Vec<f64>),
    /// Remaining order-`order` tensor `Σ_i coeffs[i]·r_i^{⊗order} + identity·I`,
    /// in the frame of the bundle it came from.
    Tensor {
        order: usize,
        coeffs: Vec<f64>,
        identity: f64,
    },
}

/// Value, gradient and factored higher derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Highest populated derivative order.
    pub order: usize,
    /// Weight of the identity term at order 2.
    pub lambda: f64,
    pub(crate) dim: usize,
    pub(crate) chain_len: usize,
    pub(crate) frame: Frame,
    /// `coeffs[m − 2][i]` multiplies `r_i^{⊗m}`.
    pub(crate) coeffs: Vec<Vec<f64>>,
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Factor coefficients of the order-`m` tensor, `2 ≤ m ≤ order`.
    pub fn coefficients(&self, m: usize) -> Option<&[f64]> {
        if m < 2 || m > self.order {
            return None;
        }
        self.coeffs.get(m - 2).map(|c| c.as_slice())
    }

    /// `⟨r_i, u⟩` for every factor.
    pub fn factor_dots(&self, u: &[f64]) -> Vec<f64> {
        let p = self.frame.project(u, self.chain_len);
        p.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Dense `r_i` as a `dim`-vector.
    pub fn factor(&self, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.chain_len];
        w[i] = 1.0;
        w[i + 1] = -1.0;
        let mut out = vec![0.0; self.dim];
        self.frame.accumulate(&w, &mut out);
        out
    }

    /// `Σ_i w_i r_i` as a dense vector.
    pub fn combine_factors(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_factors(w, &mut out);
        out
    }

    fn add_factors(&self, w: &[f64], out: &mut [f64]) {
        let n = self.chain_len;
        let mut acc = vec![0.0; n];
        for (i, wi) in w.iter().enumerate() {
            acc[i] += wi;
            acc[i + 1] -= wi;
        }
        self.frame.accumulate(&acc, out);
    }

    /// Contracts the order-`m` derivative with `dirs` (at most `m` of them).
    pub fn apply_to_vectors(&self, m: usize, dirs: &[&[f64]]) -> Result<Contraction> {
        if m == 0 || m > self.order {
            return Err(Error::InvalidInput(format!(
                "order {m} not populated (bundle order {})",
                self.order
            )));
        }
        if dirs.len() > m {
            return Err(Error::InvalidInput(format!(
                "{} directions for an order-{m} tensor",
                dirs.len()
            )));
        }
        if let Some(bad) = dirs.iter().find(|u| u.len() != self.dim) {
            return Err(Error::InvalidInput(format!(
                "direction has length {}, expected {}",
                bad.len(),
                self.dim
            )));
        }
        if m == 1 {
            return Ok(match dirs.first() {
                Some(u) => Contraction::Scalar(dot(&self.gradient, u)),
                None => Contraction::Vector(self.gradient.clone()),
            });
        }
        let mut w = self.coeffs[m - 2].clone();
        for u in dirs {
            let d = self.factor_dots(u);
            for (wi, di) in w.iter_mut().zip(&d) {
                *wi *= di;
            }
        }
        let id = if m == 2 { self.lambda } else { 0.0 };
        let rest = m - dirs.len();
        Ok(match rest {
            0 => {
                let mut s: f64 = w.iter().sum();
                if m == 2 {
                    s += id * dot(dirs[0], dirs[1]);
                }
                Contraction::Scalar(s)
            }
            1 => {
                let mut v = self.combine_factors(&w);
                if m == 2 {
                    axpy(&mut v, id, dirs[0]);
                }
                Contraction::Vector(v)
            }
            order => Contraction::Tensor {
                order,
                coeffs: w,
                identity: if dirs.is_empty() { id } else { 0.0 },
            },
        })
    }

    /// `∇^m f[u, ..., u]` (m copies of `u`), the common directional case.
    pub fn directional(&self, m: usize, u: &[f64]) -> Result<f64> {
        let dirs = vec![u; m];
        match self.apply_to_vectors(m, &dirs)? {
            Contraction::Scalar(s) => Ok(s),
            _ => unreachable!("full contraction is scalar"),
        }
    }

    /// `∇^m f[u, ..., u, ·]` (m − 1 copies of `u`).
    pub fn directional_vector(&self, m: usize, u: &[f64]) -> Result<Vec<f64>> {
        let dirs = vec![u; m - 1];
        match self.apply_to_vectors(m, &dirs)? {
            Contraction::Vector(v) => Ok(v),
            _ => unreachable!("contraction with m-1 directions is a vector"),
        }
    }

    /// Materializes the order-`m` derivative as a row-major `dim^m` array.
    pub fn densify_tensor(&self, m: usize, budget: usize) -> Result<Vec<f64>> {
        if m == 0 || m > self.order {
            return Err(Error::InvalidInput(format!("order {m} not populated")));
        }
        let needed = (self.dim as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
        if needed > budget as u128 {
            return Err(Error::TooLarge {
                needed,
                budget: budget as u128,
            });
        }
        if m == 1 {
            return Ok(self.gradient.clone());
        }
        let d = self.dim;
        let size = needed as usize;
        let mut out = vec![0.0; size];
        let mut idx = vec![0usize; m];
        for (i, c) in self.coeffs[m - 2].iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let r = self.factor(i);
            let support: Vec<usize> = (0..d).filter(|&j| r[j] != 0.0).collect();
            if support.is_empty() {
                continue;
            }
            // iterate over support^m only
            let s = support.len();
            let total = s.pow(m as u32);
            for flat in 0..total {
                let mut rem = flat;
                let mut prod = *c;
                let mut pos = 0usize;
                for slot in idx.iter_mut().rev() {
                    *slot = support[rem % s];
                    rem /= s;
                }
                for &j in &idx {
                    prod *= r[j];
                    pos = pos * d + j;
                }
                out[pos] += prod;
            }
        }
        if m == 2 {
            for j in 0..d {
                out[j * d + j] += self.lambda;
            }
        }
        Ok(out)
    }

    /// Hessian as a symmetric tridiagonal matrix; only for identity frames
    /// whose dimension covers the committed vectors.
    pub fn hessian_tridiagonal(&self) -> Result<SymTridiagonal> {
        let c = match self.frame {
            Frame::Identity { committed } => committed,
            Frame::Rotated(_) => {
                return Err(Error::InvalidInput(
                    "tridiagonal Hessian needs an identity frame".into(),
                ))
            }
        };
        if self.order < 2 {
            return Err(Error::InvalidInput("Hessian not populated".into()));
        }
        let n = self.dim;
        let mut diag = vec![self.lambda; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (i, ci) in self.coeffs[0].iter().enumerate() {
            if i < c {
                diag[i] += ci;
            }
            if i + 1 < c {
                diag[i + 1] += ci;
                off[i] -= ci;
            }
        }
        Ok(SymTridiagonal { diag, off })
    }

    /// Re-expresses the bundle in the coordinates `[v_1..v_c, q]`, where `q`
    /// is the unit direction of the gradient orthogonal to the committed
    /// vectors (omitted when that component vanishes). The local Taylor model
    /// is invariant under rotations fixing this subspace, so its minimizer lies
    /// there.
    pub fn reduce(&self) -> ReducedBundle {
        let c = self.frame.committed().min(self.chain_len);
        let p = self.frame.project(&self.gradient, self.chain_len);
        let mut perp = self.gradient.clone();
        let mut neg = vec![0.0; self.chain_len];
        for (nj, pj) in neg.iter_mut().zip(&p).take(c) {
            *nj = -pj;
        }
        self.frame.accumulate(&neg, &mut perp);
        // second pass against cancellation
        let p2 = self.frame.project(&perp, self.chain_len);
        let neg2: Vec<f64> = p2.iter().map(|v| -v).collect();
        self.frame.accumulate(&neg2, &mut perp);
        let pn = norm(&perp);
        let gn = norm(&self.gradient);
        let q = if pn > 1e-13 * gn.max(f64::MIN_POSITIVE) {
            Some(perp.iter().map(|v| v / pn).collect::<Vec<f64>>())
        } else {
            None
        };
        let n = c + usize::from(q.is_some());
        let mut g = vec![0.0; n];
        g[..c].copy_from_slice(&p[..c]);
        if q.is_some() {
            g[c] = pn;
        }
        let red_chain = self.chain_len.min(c + 1);
        let coeffs = self
            .coeffs
            .iter()
            .map(|cm| cm[..red_chain.saturating_sub(1)].to_vec())
            .collect();
        let bundle = DerivativeBundle {
            value: self.value,
            gradient: g,
            order: self.order,
            lambda: self.lambda,
            dim: n,
            chain_len: red_chain,
            frame: Frame::Identity { committed: c },
            coeffs,
        };
        ReducedBundle {
            bundle,
            frame: self.frame.clone(),
            chain_len: self.chain_len,
            dim: self.dim,
            q,
        }
    }
}

/// A bundle in reduced coordinates together with the map back to `ℝ^dim`.
#[derive(Debug, Clone)]
pub struct ReducedBundle {
    pub bundle: DerivativeBundle,
    frame: Frame,
    chain_len: usize,
    dim: usize,
    q: Option<Vec<f64>>,
}

impl ReducedBundle {
    pub fn reduced_dim(&self) -> usize {
        self.bundle.dim
    }

    /// Maps reduced coordinates back to the ambient space.
    pub fn lift(&self, h: &[f64]) -> Vec<f64> {
        let c = self.frame.committed().min(self.chain_len);
        let mut out = vec![0.0; self.dim];
        let mut w = vec![0.0; self.chain_len];
        w[..c].copy_from_slice(&h[..c]);
        self.frame.accumulate(&w, &mut out);
        if let Some(q) = &self.q {
            axpy(&mut out, h[c], q);
        }
        out
    }

    /// Coordinates of an ambient vector in the reduced basis (its component
    /// outside the subspace is dropped).
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        let c = self.frame.committed().min(self.chain_len);
        let p = self.frame.project(u, self.chain_len);
        let mut out = p[..c].to_vec();
        if let Some(q) = &self.q {
            out.push(dot(q, u));
        }
        out
    }
}
