//! Instance parameters, admissibility checks and the choice of the driving
//! coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::{factorial, Ext, Precision, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `d > T̃`, the chain is long enough for the doubly exponential tail.
    #[default]
    #[serde(alias = "highdim")]
    High,
    /// `T̃ = d`, only `γ > 0` is required.
    #[serde(alias = "lowdim")]
    Low,
}

/// Parameters of one chain instance.
///
/// `lambda_tilde` and `scale` are derived at construction and never stored
/// independently of `lambda` and `mu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub k: usize,
    pub lambda: f64,
    pub mu_k: f64,
    pub gamma: f64,
    pub chain_len: usize,
    pub dim: usize,
    pub regime: Regime,
    lambda_tilde: f64,
    scale: f64,
}

impl InstanceParams {
    pub fn new(
        k: usize,
        lambda: f64,
        mu_k: f64,
        gamma: f64,
        chain_len: usize,
        dim: usize,
        regime: Regime,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("order k must be >= 2, got {k}")));
        }
        for (name, v) in [("lambda", lambda), ("mu_k", mu_k), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
        }
        if lambda <= 0.0 || mu_k <= 0.0 || gamma < 0.0 {
            return Err(Error::InvalidInput(
                "lambda and mu_k must be positive, gamma non-negative".into(),
            ));
        }
        if chain_len == 0 || dim < chain_len {
            return Err(Error::InvalidInput(format!(
                "need 1 <= chain_len <= dim, got chain_len={chain_len}, dim={dim}"
            )));
        }
        let c = chain_constant(k);
        Ok(InstanceParams {
            k,
            lambda,
            mu_k,
            gamma,
            chain_len,
            dim,
            regime,
            lambda_tilde: c * lambda / mu_k,
            scale: mu_k / c,
        })
    }

    /// Builds an instance from `λ̃` directly (taking `μ_k` as given).
    pub fn from_lambda_tilde(
        k: usize,
        lambda_tilde: f64,
        mu_k: f64,
        gamma: f64,
        chain_len: usize,
        dim: usize,
        regime: Regime,
    ) -> Result<Self> {
        let lambda = lambda_tilde * mu_k / chain_constant(k);
        Self::new(k, lambda, mu_k, gamma, chain_len, dim, regime)
    }

    /// `λ̃ = k!·2^{(k+3)/2}·λ/μ_k`
    pub fn lambda_tilde(&self) -> f64 {
        self.lambda_tilde
    }

    /// `μ_k/(k!·2^{(k+3)/2})`, the prefactor of the rotated chain.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.k,
            self.lambda,
            self.mu_k,
            gamma,
            self.chain_len,
            self.dim,
            self.regime,
        )
    }

    pub fn with_sizes(&self, chain_len: usize, dim: usize) -> Result<Self> {
        Self::new(
            self.k,
            self.lambda,
            self.mu_k,
            self.gamma,
            chain_len,
            dim,
            self.regime,
        )
    }

    /// Smallest chain length the high-dimensional analysis asks for, `4γ/λ̃^{k/(k−1)}`.
    pub fn required_chain_len(&self) -> f64 {
        let k = self.k as f64;
        4.0 * self.gamma / self.lambda_tilde.powf(k / (k - 1.0))
    }
}

/// `k!·2^{(k+3)/2}`
pub fn chain_constant(k: usize) -> f64 {
    crate::numeric::factorial(k) * 2f64.powf((k as f64 + 3.0) / 2.0)
}

fn chain_constant_r<R: Real>(k: usize) -> R {
    factorial::<R>(k).mul(&R::from_f64(2.0).powr((k as f64 + 3.0) / 2.0))
}

/// One failed inequality `lhs <relation> rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
}

fn check<R: Real>(out: &mut Vec<Violation>, name: &str, lhs: R, rel: &str, rhs: R) {
    let ok = match rel {
        "<" => lhs.lt(&rhs),
        ">" => rhs.lt(&lhs),
        "<=" => !rhs.lt(&lhs),
        ">=" => !lhs.lt(&rhs),
        _ => unreachable!("unknown relation {rel}"),
    };
    if !ok {
        out.push(Violation {
            name: name.to_string(),
            relation: rel.to_string(),
            lhs: lhs.to_f64(),
            rhs: rhs.to_f64(),
        });
    }
}

fn ensure_finite(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} is not finite")));
        }
        if *v < 0.0 {
            return Err(Error::InvalidInput(format!("{name} is negative")));
        }
    }
    Ok(())
}

/// Checks the bounds on `D` and `ε` that only involve `(k, λ, μ_k)`.
pub fn validate_assumptions(
    k: usize,
    lambda: f64,
    mu_k: f64,
    d_bound: f64,
    eps: f64,
    regime: Regime,
    precision: Precision,
) -> Result<Vec<Violation>> {
    ensure_finite(&[("lambda", lambda), ("mu_k", mu_k), ("D", d_bound), ("eps", eps)])?;
    if k < 2 {
        return Err(Error::InvalidInput(format!("order k must be >= 2, got {k}")));
    }
    Ok(match precision {
        Precision::F64 => assumptions_in::<f64>(k, lambda, mu_k, d_bound, eps, regime),
        Precision::Extended => assumptions_in::<Ext>(k, lambda, mu_k, d_bound, eps, regime),
    })
}

fn assumptions_in<R: Real>(
    k: usize,
    lambda: f64,
    mu_k: f64,
    d_bound: f64,
    eps: f64,
    regime: Regime,
) -> Vec<Violation> {
    let kf = k as f64;
    let lam = R::from_f64(lambda);
    let mu = R::from_f64(mu_k);
    let d = R::from_f64(d_bound);
    let e = R::from_f64(eps);
    let lt = chain_constant_r::<R>(k).mul(&lam).div(&mu);
    let sqrt3 = R::from_f64(3.0).sqrt();
    let mut out = Vec::new();
    match regime {
        Regime::High => {
            let a = sqrt3.mul(&lt.powr(1.0 / (kf - 1.0)));
            let b = sqrt3
                .mul(&R::from_f64(12.0).powr((3.0 * kf + 1.0) / (2.0 * (kf + 1.0))))
                .mul(&lt.powr(5.0 / (4.0 * (2.0 * kf - 1.0))));
            check(&mut out, "D lower bound (not too lucky)", d, ">", a.max(b));
            let four_k_fact = R::from_f64(4.0).mul(&factorial::<R>(k));
            let e1 = four_k_fact
                .mul(&four_k_fact)
                .mul(&lam.powr(kf + 1.0))
                .div(&mu.mul(&mu))
                .powr(1.0 / (kf - 1.0));
            let e2 = lam.div(&R::from_f64(8.0)).mul(&lt.powr(2.0 / (kf - 1.0)));
            check(&mut out, "eps upper bound (standards not too low)", e, "<", e1.min(e2));
        }
        Regime::Low => {
            let inv = R::from_f64(1.0).div(&lt);
            let rhs = inv
                .add(&R::from_f64(2.0).sqrt().mul(&inv.powr(1.5)))
                .sqrt();
            check(&mut out, "D lower bound (low dimension)", d, ">", rhs);
            check(&mut out, "eps < lambda/32", e, "<", lam.div(&R::from_f64(32.0)));
        }
    }
    out
}

/// Every violated inequality for `params` in `regime`; empty means admissible.
pub fn validate_params(
    params: &InstanceParams,
    regime: Regime,
    d_bound: f64,
    eps: f64,
    precision: Precision,
) -> Result<Vec<Violation>> {
    let mut out = validate_assumptions(
        params.k,
        params.lambda,
        params.mu_k,
        d_bound,
        eps,
        regime,
        precision,
    )?;
    let mut more = match precision {
        Precision::F64 => instance_checks::<f64>(params, regime, d_bound),
        Precision::Extended => instance_checks::<Ext>(params, regime, d_bound),
    };
    out.append(&mut more);
    Ok(out)
}

/// Only the conditions on `γ`, `T̃` and `d` of `params` in its own regime
/// (`d_bound` enters the low-dimensional dimension cap only).
pub fn validate_instance(params: &InstanceParams, d_bound: f64) -> Vec<Violation> {
    instance_checks::<f64>(params, params.regime, d_bound)
}

fn instance_checks<R: Real>(p: &InstanceParams, regime: Regime, d_bound: f64) -> Vec<Violation> {
    let kf = p.k as f64;
    let lam = R::from_f64(p.lambda);
    let mu = R::from_f64(p.mu_k);
    let lt = chain_constant_r::<R>(p.k).mul(&lam).div(&mu);
    let g = R::from_f64(p.gamma);
    let mut out = Vec::new();
    match regime {
        Regime::High => {
            let g1 = lt.powr(kf / (kf - 1.0));
            let g2 = R::from_f64(12.0)
                .powr(2.0 * kf / (kf + 1.0))
                .mul(&lt.powr(2.0 * kf / (2.0 * kf - 1.0)));
            check(&mut out, "gamma lower bound", g.clone(), ">", g1.clone().max(g2));
            let need = R::from_f64(4.0).mul(&g).div(&g1);
            check(
                &mut out,
                "chain length >= 4 gamma / lambda_tilde^(k/(k-1))",
                R::from_f64(p.chain_len as f64),
                ">=",
                need,
            );
            check(
                &mut out,
                "dimension > chain length",
                R::from_f64(p.dim as f64),
                ">",
                R::from_f64(p.chain_len as f64),
            );
        }
        Regime::Low => {
            check(&mut out, "gamma > 0", g, ">", R::from_f64(0.0));
            check(
                &mut out,
                "chain length == dimension",
                R::from_f64(p.chain_len as f64),
                "<=",
                R::from_f64(p.dim as f64),
            );
            check(
                &mut out,
                "chain length == dimension",
                R::from_f64(p.dim as f64),
                "<=",
                R::from_f64(p.chain_len as f64),
            );
            let cap = R::from_f64(d_bound)
                .powr(kf - 1.0)
                .div(&lt)
                .powr(2.0 / (3.0 * kf + 1.0));
            check(
                &mut out,
                "dimension within low-dimensional regime",
                R::from_f64(p.dim as f64),
                "<=",
                cap,
            );
        }
    }
    out
}

/// `γ = (2^{(3k+9)/2}(k!)³λ³D⁴/(9μ_k³))^{k/(3k+1)}`, the largest driving
/// coefficient whose minimizer norm bound stays within `D²`.
pub fn select_gamma(k: usize, lambda: f64, mu_k: f64, d_bound: f64) -> Result<f64> {
    ensure_finite(&[("lambda", lambda), ("mu_k", mu_k), ("D", d_bound)])?;
    if lambda <= 0.0 || mu_k <= 0.0 || d_bound <= 0.0 || k < 2 {
        return Err(Error::InvalidInput(
            "select_gamma needs k >= 2 and positive lambda, mu_k, D".into(),
        ));
    }
    let kf = k as f64;
    // log-space keeps large D and large k from overflowing intermediate powers
    let ln_inner = (3.0 * kf + 9.0) / 2.0 * 2f64.ln()
        + 3.0 * crate::numeric::factorial(k).ln()
        + 3.0 * lambda.ln()
        + 4.0 * d_bound.ln()
        - 9f64.ln()
        - 3.0 * mu_k.ln();
    Ok((kf / (3.0 * kf + 1.0) * ln_inner).exp())
}

/// Extended-precision twin of [`select_gamma`].
pub fn select_gamma_extended(k: usize, lambda: f64, mu_k: f64, d_bound: f64) -> Result<Ext> {
    select_gamma(k, lambda, mu_k, d_bound)?;
    let kf = k as f64;
    let f = factorial::<Ext>(k);
    let lam = Ext::from_f64(lambda);
    let mu = Ext::from_f64(mu_k);
    let d = Ext::from_f64(d_bound);
    let inner = Ext::from_f64(2.0)
        .powr((3.0 * kf + 9.0) / 2.0)
        .mul(&f.mul(&f).mul(&f))
        .mul(&lam.mul(&lam).mul(&lam))
        .mul(&d.mul(&d).mul(&d).mul(&d))
        .div(&Ext::from_f64(9.0).mul(&mu.mul(&mu).mul(&mu)));
    Ok(inner.powf(&Ext::from_f64(kf).div(&Ext::from_f64(3.0 * kf + 1.0))))
}

/// Right-hand side of the minimizer norm bound, `3γ^{(3k+1)/2k}/λ̃^{3/2}`.
pub fn high_dim_norm_bound(k: usize, gamma: f64, lambda_tilde: f64) -> f64 {
    let kf = k as f64;
    3.0 * gamma.powf((3.0 * kf + 1.0) / (2.0 * kf)) / lambda_tilde.powf(1.5)
}
