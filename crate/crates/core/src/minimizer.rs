//! Exact minimizer of the chain function and the closed-form bounds it obeys.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::eval::{eval_chain, eval_chain_bundle};
use crate::model::io::float_str;
use crate::model::{InstanceParams, Regime, RotationBasis};
use crate::numeric::{max_abs, norm};

/// How the minimizer was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Shooting,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSolution {
    #[serde(with = "float_str::vec")]
    pub x_star: Vec<f64>,
    /// Stationarity residual of each equation, `∂f̃/∂x_t`.
    #[serde(with = "float_str::vec")]
    pub residuals: Vec<f64>,
    #[serde(with = "float_str")]
    pub residual_max: f64,
    /// `|Σ_t x̃*_t − γ/λ̃|`.
    #[serde(with = "float_str")]
    pub sum_residual: f64,
    /// First (1-based) index with `x̃*_{t0+1} ≤ λ̃^{1/(k−1)}/2`; high-dimensional regime only.
    pub t0: Option<usize>,
    pub method: SolveMethod,
}

/// Stationarity residuals `∂f̃/∂x_t` at `x` (chain coordinates only).
pub fn stationarity_residuals(params: &InstanceParams, x: &[f64]) -> Result<Vec<f64>> {
    let b = eval_chain_bundle(params, x, 1)?;
    Ok(b.gradient[..params.chain_len].to_vec())
}

/// `γ^{1/k} + √(2γ^{1+1/k}/λ̃)`, an upper bound on `x̃*_1`.
pub fn head_upper_bound(params: &InstanceParams) -> f64 {
    let k = params.k as f64;
    let g = params.gamma;
    g.powf(1.0 / k) + (2.0 * g.powf(1.0 + 1.0 / k) / params.lambda_tilde()).sqrt()
}

/// Runs the forward recursion `x_{t+1} = x_t − max(γ − λ̃S_t, 0)^{1/k}` from `x1`.
pub fn shoot_from(params: &InstanceParams, x1: f64) -> Vec<f64> {
    let k = params.k as f64;
    let lt = params.lambda_tilde();
    let mut x = Vec::with_capacity(params.chain_len);
    x.push(x1);
    let mut s = x1;
    for _ in 1..params.chain_len {
        let last = *x.last().unwrap();
        let arg = (params.gamma - lt * s).max(0.0);
        let next = last - arg.powf(1.0 / k);
        s += next;
        x.push(next);
    }
    x
}

fn shooting_residual(params: &InstanceParams, x1: f64) -> f64 {
    shoot_from(params, x1).iter().sum::<f64>() - params.gamma / params.lambda_tilde()
}

/// Bisection on the first coordinate so that the recursion meets the sum
/// identity `Σx_t = γ/λ̃`.
pub fn shoot(params: &InstanceParams) -> Result<Vec<f64>> {
    let (mut lo, mut hi) = (0.0, head_upper_bound(params));
    let (rlo, rhi) = (shooting_residual(params, lo), shooting_residual(params, hi));
    if !(rlo < 0.0 && rhi >= 0.0) || !rhi.is_finite() {
        return Err(Error::BracketFailure { lo, hi });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if shooting_residual(params, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(shoot_from(params, 0.5 * (lo + hi)))
}

/// Damped Newton from the origin on the dense Hessian (assembled column by
/// column from generic contractions and factored by Cholesky) until
/// `‖∇f̃‖ ≤ tol·λ̃`, which puts the output within `tol` of the minimizer.
/// Deliberately shares nothing with the shooting solver beyond evaluation.
pub fn brute_force_minimizer(params: &InstanceParams, tol: f64) -> Result<Vec<f64>> {
    const CAP: usize = 500;
    if params.chain_len > 2000 {
        return Err(Error::InvalidInput(format!(
            "brute force limited to chain length 2000, got {}",
            params.chain_len
        )));
    }
    let n = params.chain_len;
    let target = tol * params.lambda_tilde();
    let mut x = vec![0.0; n];
    let mut b = eval_chain_bundle(params, &x, 2)?;
    for _ in 0..CAP {
        let gn = norm(&b.gradient);
        if gn <= target {
            return Ok(x);
        }
        let mut h = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = b.directional_vector(2, &e)?;
            e[j] = 0.0;
            for i in 0..n {
                h[i * n + j] = col[i];
            }
        }
        let dir = cholesky_solve(&mut h, n, &b.gradient)
            .ok_or_else(|| Error::NumericalBreakdown("Hessian lost positive definiteness".into()))?;
        let slope: f64 = dir.iter().zip(&b.gradient).map(|(d, g)| d * g).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - alpha * di).collect();
            let tb = eval_chain_bundle(params, &trial, 2)?;
            // once the value test drowns in rounding, a shrinking gradient decides
            let decrease = tb.value <= b.value - 1e-4 * alpha * slope;
            let rounding = tb.value <= b.value + 4.0 * f64::EPSILON * b.value.abs() && norm(&tb.gradient) < gn;
            if decrease || rounding {
                x = trial;
                b = tb;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: CAP,
        grad_norm: norm(&b.gradient),
    })
}

/// Solves `A y = r` for symmetric positive definite row-major `a` (overwritten
/// by its Cholesky factor).
fn cholesky_solve(a: &mut [f64], n: usize, r: &[f64]) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    let mut y = r.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[i * n + k] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[k * n + i] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    Some(y)
}

/// Damped Newton on the full stationarity system with the tridiagonal Hessian.
fn newton_polish(params: &InstanceParams, start: &[f64]) -> Result<Vec<f64>> {
    let tol = 1e-14 * params.gamma.max(f64::MIN_POSITIVE);
    let mut x = start.to_vec();
    let mut b = eval_chain_bundle(params, &x, 2)?;
    let mut gmax = max_abs(&b.gradient);
    for it in 0..200 {
        if gmax <= tol {
            return Ok(x);
        }
        let h = b.hessian_tridiagonal()?;
        let dir = h.solve_shifted(0.0, &b.gradient).ok_or_else(|| Error::PolishFailure {
            iterations: it,
            grad_norm: gmax,
            unpolished: start.to_vec(),
        })?;
        let slope: f64 = dir.iter().zip(&b.gradient).map(|(d, g)| d * g).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi - alpha * di).collect();
            let tb = eval_chain_bundle(params, &trial, 2)?;
            let tmax = max_abs(&tb.gradient);
            let decrease = tb.value <= b.value - 1e-4 * alpha * slope;
            let rounding = tb.value <= b.value + 4.0 * f64::EPSILON * b.value.abs() && tmax < gmax;
            if decrease || rounding {
                x = trial;
                b = tb;
                gmax = tmax;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gmax <= 1e-10 * params.gamma {
        return Ok(x);
    }
    Err(Error::PolishFailure {
        iterations: 200,
        grad_norm: gmax,
        unpolished: start.to_vec(),
    })
}

/// Re-solves the tail, where coordinates fall far below `x_1`, in the
/// cancellation-free form `(x_t − x_{t+1})^k = λ̃·Σ_{j>t} x_j` one coordinate at
/// a time, so tiny coordinates come out with full relative accuracy.
fn refine_tail(params: &InstanceParams, x: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    let k = params.k as i32;
    let lt = params.lambda_tilde();
    let head = x[0].abs();
    let Some(p) = (0..n - 1).find(|&t| x[t + 1] < 1e-4 * head) else {
        return;
    };
    for _sweep in 0..100 {
        let mut changed = 0.0_f64;
        // suffix sums from the current iterate
        let mut suffix = vec![0.0; n + 1];
        for t in (0..n).rev() {
            suffix[t] = suffix[t + 1] + x[t].max(0.0);
        }
        for t in p..n - 1 {
            let xt = x[t].max(0.0);
            let rest = suffix[t + 2];
            // solve (xt − u)^k = λ̃(u + rest) for u in [0, xt]
            let phi = |u: f64| (xt - u).powi(k) - lt * (u + rest);
            let (mut lo, mut hi) = (0.0, xt);
            if phi(0.0) <= 0.0 {
                changed = changed.max(x[t + 1].abs());
                x[t + 1] = 0.0;
                continue;
            }
            let mut u = (xt.powi(k) / lt - rest).clamp(0.0, xt);
            for _ in 0..200 {
                let f = phi(u);
                if f > 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                let df = -(k as f64) * (xt - u).powi(k - 1) - lt;
                let mut next = u - f / df;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - u).abs() <= 1e-17 * next.abs() || next == u || hi - lo <= f64::MIN_POSITIVE {
                    u = next;
                    break;
                }
                u = next;
            }
            let rel = if x[t + 1] != 0.0 {
                ((u - x[t + 1]) / x[t + 1]).abs()
            } else if u != 0.0 {
                1.0
            } else {
                0.0
            };
            changed = changed.max(rel);
            x[t + 1] = u;
        }
        if changed <= 1e-15 {
            break;
        }
    }
}

/// First index `t0` (1-based) with `x_{t0+1} ≤ λ̃^{1/(k−1)}/2`.
pub fn find_t0(params: &InstanceParams, x: &[f64]) -> Option<usize> {
    let thr = params.lambda_tilde().powf(1.0 / (params.k as f64 - 1.0)) / 2.0;
    (0..x.len().saturating_sub(1)).find(|&i| x[i + 1] <= thr).map(|i| i + 1)
}

fn package(params: &InstanceParams, x: Vec<f64>, method: SolveMethod) -> Result<MinimizerSolution> {
    let residuals = stationarity_residuals(params, &x)?;
    let residual_max = max_abs(&residuals);
    let sum_residual = (x.iter().sum::<f64>() - params.gamma / params.lambda_tilde()).abs();
    let t0 = match params.regime {
        Regime::High => find_t0(params, &x),
        Regime::Low => None,
    };
    Ok(MinimizerSolution {
        x_star: x,
        residuals,
        residual_max,
        sum_residual,
        t0,
        method,
    })
}

/// Exact minimizer of `f̃`: shooting bisection, Newton polish, tail refinement.
/// Falls back to brute force (then polishes) if the shooting bracket fails.
pub fn solve_chain_minimizer(params: &InstanceParams) -> Result<MinimizerSolution> {
    if params.gamma == 0.0 {
        return package(params, vec![0.0; params.chain_len], SolveMethod::Shooting);
    }
    let (start, method) = match shoot(params) {
        Ok(x) => (x, SolveMethod::Shooting),
        Err(Error::BracketFailure { .. }) if params.chain_len <= 2000 => {
            // coordinates sum to γ/λ̃, so ask for accuracy relative to that scale;
            // the polish below does the rest
            let scale = (params.gamma / params.lambda_tilde()).max(1.0);
            let x = brute_force_minimizer(params, 1e-9 * scale)?;
            (x, SolveMethod::BruteForce)
        }
        Err(e) => return Err(e),
    };
    let mut x = newton_polish(params, &start)?;
    refine_tail(params, &mut x);
    let sol = package(params, x, method)?;
    if sol.residual_max > 1e-9 * params.gamma {
        return Err(Error::PolishFailure {
            iterations: 0,
            grad_norm: sol.residual_max,
            unpolished: start,
        });
    }
    Ok(sol)
}

/// Closed-form lower bound on `x̃*_t` (1-based `t`) for the active regime.
pub fn coordinate_lower_bound(params: &InstanceParams, t: usize) -> f64 {
    let k = params.k as f64;
    let g = params.gamma;
    let lt = params.lambda_tilde();
    let offset = match params.regime {
        Regime::High => g.powf((k + 1.0) / (2.0 * k)) / (12.0 * lt.sqrt()),
        Regime::Low => 0.25 * g / (lt + (2.0 * lt * g.powf((k - 1.0) / k)).sqrt()),
    };
    (offset + (0.5 - t as f64) * g.powf(1.0 / k)).max(0.0)
}

/// `λ̃^{1/(k−1)}·6^{−k^{j+1}}` together with its natural log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub value: f64,
    pub ln: f64,
}

/// Doubly exponential lower bound on `x̃*_{t0+j}`.
pub fn tail_decay_bound(params: &InstanceParams, solution: &MinimizerSolution, j: usize) -> Result<TailBound> {
    let t0 = solution
        .t0
        .ok_or_else(|| Error::PreconditionViolated("t0 is only defined in the high-dimensional regime".into()))?;
    if t0 + j > params.chain_len {
        return Err(Error::InvalidInput(format!(
            "index t0 + j = {} exceeds chain length {}",
            t0 + j,
            params.chain_len
        )));
    }
    Ok(tail_decay_value(params, j))
}

pub fn tail_decay_value(params: &InstanceParams, j: usize) -> TailBound {
    let k = params.k as f64;
    let ln = params.lambda_tilde().ln() / (k - 1.0) - k.powf(j as f64 + 1.0) * 6f64.ln();
    TailBound { value: ln.exp(), ln }
}

/// Log of the upper tail bound `x_t^{k^j}/λ̃^{(k^j−1)/(k−1)}` on `x̃*_{t+j}`.
pub fn upper_tail_ln(params: &InstanceParams, x_t: f64, j: usize) -> f64 {
    let k = params.k as f64;
    let kj = k.powf(j as f64);
    kj * x_t.ln() - (kj - 1.0) / (k - 1.0) * params.lambda_tilde().ln()
}

/// Closed-form bound on `‖x̃*‖²` for the active regime.
pub fn norm_bound(params: &InstanceParams) -> f64 {
    let k = params.k as f64;
    let g = params.gamma;
    let lt = params.lambda_tilde();
    match params.regime {
        Regime::High => 3.0 * g.powf((3.0 * k + 1.0) / (2.0 * k)) / lt.powf(1.5),
        Regime::Low => (1.0 + (2.0 * g.powf((k - 1.0) / k) / lt).sqrt()) * g.powf((k + 1.0) / k) / lt,
    }
}

/// `ln x̃*_t` for every chain coordinate, continued past the `f64` underflow
/// point. Once `x_t^{k−1}/λ̃ < 1e-17` the exact tail obeys
/// `(x_t − x_{t+1})^k = λ̃·Σ_{j>t} x_j` with both `x_{t+1}/x_t` and
/// `Σ_{j>t+1} x_j / x_{t+1}` below machine precision, so
/// `ln x_{t+1} = k·ln x_t − ln λ̃` to working accuracy. The recursion takes
/// over from the first coordinate that is zero or subnormal; a zero that is
/// not preceded by such a deep coordinate stays `−∞`.
pub fn ln_coordinates(params: &InstanceParams, x: &[f64]) -> Vec<f64> {
    let k = params.k as f64;
    let ln_lt = params.lambda_tilde().ln();
    let deep = |l: f64| (k - 1.0) * l - ln_lt < -17.0 * std::f64::consts::LN_10;
    let mut out: Vec<f64> = Vec::with_capacity(x.len());
    for (t, v) in x.iter().enumerate() {
        let prev = if t > 0 { Some(out[t - 1]) } else { None };
        let l = match prev {
            Some(p) if *v < f64::MIN_POSITIVE && p.is_finite() && deep(p) => k * p - ln_lt,
            _ => v.ln(),
        };
        out.push(l);
    }
    out
}

/// `x* = Σ_i x̃*_i v_i`.
pub fn pull_back(solution: &MinimizerSolution, basis: &RotationBasis) -> Result<Vec<f64>> {
    if !basis.is_complete() {
        return Err(Error::InconsistentBasis(format!(
            "{} of {} vectors committed",
            basis.committed_count(),
            basis.chain_len()
        )));
    }
    if solution.x_star.len() != basis.chain_len() {
        return Err(Error::InvalidInput("solution and basis lengths differ".into()));
    }
    Ok(basis.combine(&solution.x_star))
}

/// `f̃(x̃*)`.
pub fn chain_optimum(params: &InstanceParams, solution: &MinimizerSolution) -> Result<f64> {
    eval_chain(params, &solution.x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::chain_constant;

    fn inst(k: usize, t: usize, gamma: f64, lt: f64, regime: Regime) -> InstanceParams {
        InstanceParams::from_lambda_tilde(k, lt, chain_constant(k), gamma, t, t + 1, regime).unwrap()
    }

    #[test]
    fn small_instance_matches_brute_force() {
        let p = inst(2, 4, 1.0, 1.0, Regime::High);
        let s = solve_chain_minimizer(&p).unwrap();
        let b = brute_force_minimizer(&p, 1e-10).unwrap();
        for (a, e) in s.x_star.iter().zip(&b) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!(s.sum_residual <= 1e-10 * p.gamma / p.lambda_tilde());
    }

    #[test]
    fn last_equation_holds() {
        let p = inst(3, 40, 48.0, 1.0, Regime::High);
        let s = solve_chain_minimizer(&p).unwrap();
        let n = s.x_star.len();
        let lhs = (s.x_star[n - 2] - s.x_star[n - 1]).powi(3);
        assert!((lhs - p.lambda_tilde() * s.x_star[n - 1]).abs() < 1e-10);
    }

    #[test]
    fn zero_gamma_gives_zero() {
        let p = inst(2, 5, 0.0, 1.0, Regime::Low);
        assert!(solve_chain_minimizer(&p).unwrap().x_star.iter().all(|v| *v == 0.0));
        let tiny = inst(2, 5, 1e-12, 1.0, Regime::Low);
        assert!(max_abs(&brute_force_minimizer(&tiny, 1e-14).unwrap()) < 1e-11);
    }

    #[test]
    fn tail_bound_at_zero_offset() {
        let p = inst(3, 10, 48.0, 0.5, Regime::High);
        let b = tail_decay_value(&p, 0);
        let expect = 0.5f64.powf(0.5) * 6f64.powi(-3);
        assert!((b.value - expect).abs() < 1e-15);
    }

    #[test]
    fn coordinate_bound_vanishes_far_down_the_chain() {
        let p = inst(2, 128, 32.0, 1.0, Regime::High);
        assert_eq!(coordinate_lower_bound(&p, 128), 0.0);
        // the bound at t = 1 is positive only once γ^{(k−1)/2k} > 6√λ̃
        assert_eq!(coordinate_lower_bound(&p, 1), 0.0);
        let big = inst(2, 128, 1300.0, 1.0, Regime::High);
        assert!(coordinate_lower_bound(&big, 1) > 0.0);
    }

    #[test]
    fn head_exceeds_half_threshold_above_gamma_floor() {
        for k in 2..=4 {
            let kf = k as f64;
            let lt: f64 = 0.7;
            let floor = 12f64.powf(2.0 * kf / (kf + 1.0)) * lt.powf(2.0 * kf / (2.0 * kf - 1.0));
            let p = inst(k, 64, 1.01 * floor, lt, Regime::High);
            let s = solve_chain_minimizer(&p).unwrap();
            assert!(s.x_star[0] >= lt.powf(1.0 / (kf - 1.0)) / 2.0);
        }
    }

    #[test]
    fn pull_back_needs_full_basis() {
        let p = inst(2, 3, 1.0, 1.0, Regime::High);
        let s = solve_chain_minimizer(&p).unwrap();
        let b = RotationBasis::empty(3, 4).unwrap();
        assert!(matches!(pull_back(&s, &b), Err(Error::InconsistentBasis(_))));
        let id = RotationBasis::identity(3, 4).unwrap();
        let x = pull_back(&s, &id).unwrap();
        assert_eq!(&x[..3], s.x_star.as_slice());
        assert_eq!(x[3], 0.0);
    }
}
