//! Minimization of the regularized Taylor model
//! `φ(h) = Σ_{m=1}^k ∇^m f[h]^m/m! + σ/(k+1)·‖h‖^{k+1}`
//! for a bundle in reduced (identity-frame) coordinates.

use crate::error::{Error, Result};
use crate::model::{DerivativeBundle, Frame};
use crate::numeric::{dot, factorial, norm, SymTridiagonal};

use super::InnerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorStep {
    pub h: Vec<f64>,
    pub steps: usize,
    pub grad_norm: f64,
}

struct Model<'a> {
    b: &'a DerivativeBundle,
    committed: usize,
    sigma: f64,
    /// `1/(j)!` for `j = 0..=k`.
    inv_fact: Vec<f64>,
}

impl Model<'_> {
    fn chain_weights(&self, s: &[f64], shift: usize) -> Vec<f64> {
        // Σ_m c_{m,i} s_i^{m−shift}/(m−shift)!
        let mut w = vec![0.0; s.len()];
        for m in 2..=self.b.order {
            let c = &self.b.coeffs[m - 2];
            let p = m - shift;
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += c[i] * s[i].powi(p as i32) * self.inv_fact[p];
            }
        }
        w
    }

    fn value(&self, h: &[f64]) -> f64 {
        let s = self.b.factor_dots(h);
        let chain: f64 = self.chain_weights(&s, 0).iter().sum();
        let hn = norm(h);
        let k = self.b.order as f64;
        dot(&self.b.gradient, h)
            + 0.5 * self.b.lambda * hn * hn
            + chain
            + self.sigma / (k + 1.0) * hn.powf(k + 1.0)
    }

    fn gradient(&self, h: &[f64], s: &[f64], hn: f64) -> Vec<f64> {
        let k = self.b.order as i32;
        let mut g = self.b.combine_factors(&self.chain_weights(s, 1));
        let reg = self.sigma * hn.powi(k - 1);
        for ((gi, hi), g0) in g.iter_mut().zip(h).zip(&self.b.gradient) {
            *gi += g0 + (self.b.lambda + reg) * hi;
        }
        g
    }

    fn tridiagonal(&self, s: &[f64], shift: f64) -> SymTridiagonal {
        let n = self.b.dim;
        let c = self.committed;
        let w = self.chain_weights(s, 2);
        let mut diag = vec![self.b.lambda + shift; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (i, wi) in w.iter().enumerate() {
            diag[i] += wi;
            if i + 1 < c {
                diag[i + 1] += wi;
                off[i] -= wi;
            }
        }
        SymTridiagonal { diag, off }
    }

    /// Newton direction `−∇²φ(h)^{-1}∇φ(h)`.
    fn newton_direction(&self, h: &[f64], s: &[f64], hn: f64, grad: &[f64]) -> Option<Vec<f64>> {
        let k = self.b.order as i32;
        let alpha = self.sigma * hn.powi(k - 1);
        let tri = self.tridiagonal(s, alpha);
        let y1 = tri.solve_shifted(0.0, grad)?;
        let mut dir = y1.clone();
        if hn > 0.0 && k > 1 {
            // rank-one part σ(k−1)‖h‖^{k−3} h hᵀ via Sherman–Morrison
            let beta = self.sigma * (k - 1) as f64 * hn.powi(k - 3);
            let y2 = tri.solve_shifted(0.0, h)?;
            let denom = 1.0 + beta * dot(h, &y2);
            let coef = beta * dot(h, &y1) / denom;
            for (d, v) in dir.iter_mut().zip(&y2) {
                *d -= coef * v;
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        Some(dir)
    }
}

/// Minimizes the regularized Taylor model of `bundle` by damped Newton with
/// Armijo backtracking, starting from `h = 0`.
///
/// `bundle` must use an identity frame (see [`DerivativeBundle::reduce`]); the
/// Hessian is then tridiagonal up to the rank-one regularizer term.
pub fn minimize_taylor_model(bundle: &DerivativeBundle, sigma: f64, cfg: &InnerConfig) -> Result<TaylorStep> {
    let committed = match bundle.frame {
        Frame::Identity { committed } => committed,
        Frame::Rotated(_) => {
            return Err(Error::InvalidInput("Taylor model needs reduced coordinates".into()))
        }
    };
    let n = bundle.dim;
    let g0 = norm(&bundle.gradient);
    let mut h = vec![0.0; n];
    if g0 == 0.0 {
        return Ok(TaylorStep { h, steps: 0, grad_norm: 0.0 });
    }
    let model = Model {
        b: bundle,
        committed,
        sigma,
        inv_fact: (0..=bundle.order).map(|j| 1.0 / factorial(j)).collect(),
    };
    let target = cfg.tol * g0;
    let mut val: f64 = 0.0;
    let mut gn = g0;
    for step in 0..cfg.max_steps {
        let s = bundle.factor_dots(&h);
        let hn = norm(&h);
        let grad = model.gradient(&h, &s, hn);
        gn = norm(&grad);
        if gn <= target {
            return Ok(TaylorStep { h, steps: step, grad_norm: gn });
        }
        let dir = model.newton_direction(&h, &s, hn, &grad).ok_or_else(|| {
            Error::InnerSolveFailure(format!("model Hessian not positive definite at inner step {step}"))
        })?;
        let slope = dot(&grad, &dir);
        // the predicted decrease is below the resolution of the model value:
        // take the full Newton step while it still shrinks the gradient
        if slope.abs() <= 1e-14 * val.abs() && gn <= 1e-6 * g0 {
            let trial: Vec<f64> = h.iter().zip(&dir).map(|(a, d)| a + d).collect();
            let tg = model.gradient(&trial, &bundle.factor_dots(&trial), norm(&trial));
            if norm(&tg) < gn {
                val = model.value(&trial);
                h = trial;
                continue;
            }
            return Ok(TaylorStep { h, steps: step, grad_norm: gn });
        }
        if !(slope < 0.0) {
            return Err(Error::InnerSolveFailure(format!(
                "Newton direction is not a descent direction (slope {slope:e}) at inner step {step}"
            )));
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = h.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let tv = model.value(&trial);
            if tv <= val + 1e-4 * t * slope {
                h = trial;
                val = tv;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no measurable decrease: the iterate is optimal to working precision
            // unless the gradient is still large
            if gn <= 1e-6 * g0 {
                return Ok(TaylorStep { h, steps: step, grad_norm: gn });
            }
            return Err(Error::InnerSolveFailure(format!(
                "line search stalled at inner step {step} with model gradient {gn:e} (initial {g0:e})"
            )));
        }
        if !val.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite model value".into()));
        }
    }
    Err(Error::InnerSolveFailure(format!(
        "{} inner steps left model gradient at {gn:e} (target {target:e})",
        cfg.max_steps
    )))
}
