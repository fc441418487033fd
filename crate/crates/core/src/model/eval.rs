//! Closed-form evaluation of the chain function and its rotated version.

use crate::error::{Error, Result};
use crate::model::basis::RotationBasis;
use crate::model::bundle::{DerivativeBundle, Frame};
use crate::model::params::InstanceParams;
use crate::numeric::{factorial, norm, norm_sq, signed_pow};

/// `g^{(m)}(s)` for `g(s) = |s|^{k+1}/(k+1)`, with `sign(0) = 0`.
pub fn g_derivative(k: usize, m: usize, s: f64) -> f64 {
    if m == 0 {
        return s.abs().powi(k as i32 + 1) / (k as f64 + 1.0);
    }
    if m > k + 1 {
        return 0.0;
    }
    let p = (k + 1 - m) as f64;
    let c = factorial(k) / factorial(k + 1 - m);
    c * signed_pow(s, p, m % 2 == 1)
}

/// Bregman divergence `g(a) − g(b) − g'(b)(a − b) ≥ 0`, evaluated without
/// cancellation: the exact Taylor expansion around `b` when `a` and `b` share
/// a sign (`g` is a polynomial on each half-line), a sum of non-negative
/// terms otherwise.
pub fn g_bregman(k: usize, a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return g_derivative(k, 0, a);
    }
    let kf = k as f64;
    let bk = b.abs().powi(k as i32);
    if a == 0.0 {
        return kf / (kf + 1.0) * bk * b.abs();
    }
    if (a > 0.0) != (b > 0.0) {
        return g_derivative(k, 0, a) + kf / (kf + 1.0) * bk * b.abs() + bk * a.abs();
    }
    let d = a - b;
    let mut sum = 0.0;
    let mut dpow = d;
    let mut fact = 1.0;
    for m in 2..=k + 1 {
        dpow *= d;
        fact *= m as f64;
        sum += g_derivative(k, m, b) * dpow / fact;
    }
    sum.max(0.0)
}

/// `(1/(k+1))Σ_{i<T̃}|x_i − x_{i+1}|^{k+1} − γx_1 + (λ̃/2)‖x‖²`; coordinates
/// past `T̃` only enter the quadratic term.
pub fn eval_chain(params: &InstanceParams, x: &[f64]) -> Result<f64> {
    let t = params.chain_len;
    if x.len() < t {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, chain needs {t}",
            x.len()
        )));
    }
    let k = params.k;
    let chain: f64 = x[..t]
        .windows(2)
        .map(|w| g_derivative(k, 0, w[0] - w[1]))
        .sum();
    Ok(chain - params.gamma * x[0] + 0.5 * params.lambda_tilde() * norm_sq(x))
}

/// Everything needed to evaluate one member of the family
/// `scale·(Σ g(⟨r_i,x⟩) − γ⟨v_1,x⟩) + (λ/2)‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct ChainSpec {
    pub k: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub scale: f64,
    pub chain_len: usize,
}

impl ChainSpec {
    /// The unscaled chain `f̃` (scale 1, quadratic weight `λ̃`).
    pub fn plain(p: &InstanceParams) -> Self {
        ChainSpec {
            k: p.k,
            gamma: p.gamma,
            lambda: p.lambda_tilde(),
            scale: 1.0,
            chain_len: p.chain_len,
        }
    }

    /// The rotated and rescaled function.
    pub fn rotated(p: &InstanceParams) -> Self {
        ChainSpec {
            k: p.k,
            gamma: p.gamma,
            lambda: p.lambda,
            scale: p.scale(),
            chain_len: p.chain_len,
        }
    }

    pub fn evaluate(&self, frame: Frame, x: &[f64], order: usize) -> DerivativeBundle {
        let t = self.chain_len;
        let p = frame.project(x, t);
        let s: Vec<f64> = p.windows(2).map(|w| w[0] - w[1]).collect();
        let chain: f64 = s.iter().map(|&si| g_derivative(self.k, 0, si)).sum();
        let value = self.scale * (chain - self.gamma * p[0]) + 0.5 * self.lambda * norm_sq(x);

        let mut gradient: Vec<f64> = x.iter().map(|v| self.lambda * v).collect();
        let mut w = vec![0.0; t];
        for (i, si) in s.iter().enumerate() {
            let d = self.scale * g_derivative(self.k, 1, *si);
            w[i] += d;
            w[i + 1] -= d;
        }
        w[0] -= self.scale * self.gamma;
        frame.accumulate(&w, &mut gradient);

        let coeffs = (2..=order)
            .map(|m| {
                s.iter()
                    .map(|&si| self.scale * g_derivative(self.k, m, si))
                    .collect()
            })
            .collect();
        DerivativeBundle {
            value,
            gradient,
            order,
            lambda: self.lambda,
            dim: x.len(),
            chain_len: t,
            frame,
            coeffs,
        }
    }
}

/// Derivatives of orders `0..=order` of the rotated function at `x`.
///
/// With a partially committed basis the missing vectors are treated as zero,
/// which is exact provided `x` is orthogonal to them; this is checked through
/// the last committed vector, which must also be orthogonal to `x`.
pub fn eval_rotated(
    params: &InstanceParams,
    basis: &RotationBasis,
    x: &[f64],
    order: usize,
) -> Result<DerivativeBundle> {
    if order == 0 || order > params.k {
        return Err(Error::InvalidInput(format!(
            "order must be in 1..={}, got {order}",
            params.k
        )));
    }
    if x.len() != basis.dim() || basis.chain_len() != params.chain_len {
        return Err(Error::InvalidInput(format!(
            "point of length {} against basis of dimension {} and chain length {}",
            x.len(),
            basis.dim(),
            basis.chain_len()
        )));
    }
    let c = basis.committed_count();
    if c < params.chain_len {
        if c == 0 {
            return Err(Error::InconsistentBasis(
                "no basis vector committed".into(),
            ));
        }
        let last = crate::numeric::dot(&basis.vectors()[c - 1], x);
        if last.abs() > 1e-10 * norm(x).max(1.0) {
            return Err(Error::InconsistentBasis(format!(
                "point has component {last:e} along the last committed vector"
            )));
        }
    }
    let frame = Frame::Rotated(basis.vectors().to_vec());
    Ok(ChainSpec::rotated(params).evaluate(frame, x, order))
}

/// Derivatives of the unscaled chain `f̃` at `x` in chain coordinates.
pub fn eval_chain_bundle(params: &InstanceParams, x: &[f64], order: usize) -> Result<DerivativeBundle> {
    if x.len() < params.chain_len {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, chain needs {}",
            x.len(),
            params.chain_len
        )));
    }
    if order == 0 || order > params.k {
        return Err(Error::InvalidInput(format!("order must be in 1..={}", params.k)));
    }
    let frame = Frame::Identity {
        committed: params.chain_len,
    };
    Ok(ChainSpec::plain(params).evaluate(frame, x, order))
}
