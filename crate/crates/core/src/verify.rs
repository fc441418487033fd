//! Independent numerical checks: finite differences, sampled convexity and
//! Lipschitz estimates, tensor operator norms, and clause-by-clause assertions
//! of the minimizer bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimizer::{
    coordinate_lower_bound, find_t0, ln_coordinates, norm_bound, tail_decay_value, MinimizerSolution,
};
use crate::model::params::validate_instance;
use crate::model::{DerivativeBundle, Frame, InstanceParams, Regime, RotationBasis};
use crate::numeric::{dot, norm, random_unit};
use crate::oracle::Oracle;

/// Outcome of one check. `passed` holds exactly when
/// `worst_violation <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub details: String,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, worst: f64, tolerance: f64, samples: usize, details: impl Into<String>) -> Self {
        CheckReport {
            check_name: name.into(),
            // NaN never passes
            passed: worst <= tolerance,
            worst_violation: worst,
            tolerance,
            samples,
            details: details.into(),
        }
    }
}

/// True when every report passed.
pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

fn order_m_scalar<O: Oracle + ?Sized>(oracle: &mut O, x: &[f64], m: usize, u: &[f64]) -> Result<f64> {
    let b = oracle.query(x, m.max(1))?;
    if m == 0 {
        return Ok(b.value);
    }
    b.directional(m, u)
}

/// Compares `∇^m f(x)[u]^m` with the central difference of
/// `∇^{m−1} f(·)[u]^{m−1}` along 10 random unit directions.
///
/// The step is `step·(1 + ‖x‖)`; errors are relative to
/// `|∇^m f[u]^m| + |∇^{m−1} f(x)[u]^{m−1}|/(1+‖x‖)` so that a vanishing
/// derivative is judged against the scale of its antiderivative.
pub fn fd_derivative_check<O: Oracle + ?Sized>(
    oracle: &mut O,
    x: &[f64],
    m: usize,
    step: f64,
    seed: u64,
) -> Result<CheckReport> {
    if m == 0 || m > oracle.order() {
        return Err(Error::InvalidInput(format!("order {m} outside 1..={}", oracle.order())));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 + norm(x);
    let h = step * scale;
    let mut worst = 0.0_f64;
    let n = 10;
    for _ in 0..n {
        let u = random_unit(&mut rng, x.len());
        let analytic = order_m_scalar(oracle, x, m, &u)?;
        let base = order_m_scalar(oracle, x, m - 1, &u)?;
        let xp: Vec<f64> = x.iter().zip(&u).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(&u).map(|(a, d)| a - h * d).collect();
        let fd = (order_m_scalar(oracle, &xp, m - 1, &u)? - order_m_scalar(oracle, &xm, m - 1, &u)?) / (2.0 * h);
        let denom = analytic.abs() + base.abs() / scale;
        let err = if denom > 0.0 { (analytic - fd).abs() / denom } else { (analytic - fd).abs() };
        worst = worst.max(err);
    }
    Ok(CheckReport::new(
        format!("finite differences, order {m}"),
        worst,
        step.max(1e-5),
        n,
        format!("step {h:e}"),
    ))
}

/// Order-`m` part of `a − b` as a bundle of its own. Both bundles must come
/// from the same instance (same frame); the identity term cancels.
fn difference_bundle(a: &DerivativeBundle, b: &DerivativeBundle, m: usize) -> Result<DerivativeBundle> {
    if a.frame != b.frame || a.dim != b.dim || m < 2 || m > a.order.min(b.order) {
        return Err(Error::InvalidInput("bundles are not comparable at this order".into()));
    }
    let mut coeffs = vec![vec![0.0; a.chain_len.saturating_sub(1)]; m - 1];
    coeffs[m - 2] = a.coeffs[m - 2].iter().zip(&b.coeffs[m - 2]).map(|(p, q)| p - q).collect();
    Ok(DerivativeBundle {
        value: 0.0,
        gradient: vec![0.0; a.dim],
        order: m,
        lambda: 0.0,
        dim: a.dim,
        chain_len: a.chain_len,
        frame: a.frame.clone(),
        coeffs,
    })
}

/// Lower estimate of `max_{‖u‖=1} |∇^m[u]^m|` for the order-`m` tensor of
/// `bundle`, by shifted power iteration on `±T` from `restarts` starting
/// points (half of them random, the rest along the heaviest factors).
pub fn tensor_norm_estimate(bundle: &DerivativeBundle, m: usize, restarts: usize, seed: u64) -> Result<f64> {
    if m < 2 || m > bundle.order {
        return Err(Error::InvalidInput(format!("order {m} not populated")));
    }
    let c = &bundle.coeffs[m - 2];
    // bounds ‖T‖ since ‖r_i‖ ≤ √2
    let alpha = c.iter().map(|v| v.abs()).sum::<f64>() * 2f64.powf(m as f64 / 2.0)
        + if m == 2 { bundle.lambda.abs() } else { 0.0 };
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[j].abs().total_cmp(&c[i].abs()).then(i.cmp(&j)));
    let mut best = 0.0_f64;
    for r in 0..restarts.max(1) {
        let mut u = if r % 2 == 1 && r / 2 < order.len() {
            let f = bundle.factor(order[r / 2]);
            let n = norm(&f);
            f.iter().map(|v| v / n).collect()
        } else {
            random_unit(&mut rng, bundle.dim)
        };
        for sign in [1.0, -1.0] {
            let mut last = f64::NEG_INFINITY;
            for _ in 0..300 {
                let tv = bundle.directional_vector(m, &u)?;
                let val = sign * dot(&tv, &u);
                best = best.max(val.abs());
                let mut next: Vec<f64> = tv.iter().zip(&u).map(|(t, ui)| sign * t + alpha * ui).collect();
                let nn = norm(&next);
                if nn == 0.0 {
                    break;
                }
                next.iter_mut().for_each(|v| *v /= nn);
                let prev = std::mem::replace(&mut u, next);
                if val - last <= 1e-15 * val.abs() && crate::numeric::dist(&u, &prev) <= 1e-9 {
                    break;
                }
                last = val;
            }
        }
    }
    Ok(best)
}

fn sample_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let u = random_unit(rng, center.len());
    let r = radius * rng.gen::<f64>().powf(1.0 / center.len() as f64);
    center.iter().zip(&u).map(|(c, d)| c + r * d).collect()
}

/// Samples `n_pairs` pairs in the ball `B(center, radius)` and lower-estimates
/// `‖∇^m f(x) − ∇^m f(y)‖/‖x − y‖` (20 power-iteration restarts per pair).
/// Passes when the largest ratio is at most `bound`.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_estimate<O: Oracle + ?Sized>(
    oracle: &mut O,
    m: usize,
    center: &[f64],
    radius: f64,
    n_pairs: usize,
    bound: f64,
    seed: u64,
) -> Result<CheckReport> {
    if n_pairs == 0 || m == 0 || m > oracle.order() {
        return Err(Error::InvalidInput("need n_pairs >= 1 and 1 <= m <= k".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for p in 0..n_pairs {
        let x = sample_ball(&mut rng, center, radius);
        let y = sample_ball(&mut rng, center, radius);
        let dist = crate::numeric::dist(&x, &y);
        if dist == 0.0 {
            continue;
        }
        let bx = oracle.query(&x, m)?;
        let by = oracle.query(&y, m)?;
        let diff = if m == 1 {
            let d: Vec<f64> = bx.gradient.iter().zip(&by.gradient).map(|(a, b)| a - b).collect();
            norm(&d)
        } else {
            let d = difference_bundle(&bx, &by, m)?;
            tensor_norm_estimate(&d, m, 20, seed ^ (p as u64).wrapping_mul(0x9e37_79b9))?
        };
        worst = worst.max(diff / dist);
    }
    Ok(CheckReport::new(
        format!("Lipschitz constant of order-{m} derivative"),
        worst,
        bound,
        n_pairs,
        format!("ball radius {radius:e}"),
    ))
}

/// Samples pairs in `B(center, radius)` and checks
/// `f(y) ≥ f(x) + ⟨∇f(x), y − x⟩ + (λ/2)‖y − x‖²` up to `1e-9` relative slack.
pub fn strong_convexity_check<O: Oracle + ?Sized>(
    oracle: &mut O,
    lambda: f64,
    center: &[f64],
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_pairs {
        let x = sample_ball(&mut rng, center, radius);
        let y = sample_ball(&mut rng, center, radius);
        let bx = oracle.query(&x, 1)?;
        let fy = oracle.query(&y, 1)?.value;
        let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let rhs = bx.value + dot(&bx.gradient, &d) + 0.5 * lambda * dot(&d, &d);
        let scale = bx.value.abs() + fy.abs() + norm(&bx.gradient) * norm(&d) + f64::MIN_POSITIVE;
        worst = worst.max((rhs - fy) / scale);
    }
    Ok(CheckReport::new(
        "strong convexity",
        worst.max(0.0),
        1e-9,
        n_pairs,
        format!("lambda {lambda:e}, ball radius {radius:e}"),
    ))
}

/// `max_{2≤j≤k} ‖∇^j f(x*)‖` for an instance with chain coordinates
/// `x_chain` of its minimizer. Orders above 2 use [`tensor_norm_estimate`]
/// in chain coordinates, where the rotation drops out.
pub fn estimate_m(params: &InstanceParams, x_chain: &[f64], restarts: usize, seed: u64) -> Result<f64> {
    use crate::model::eval::ChainSpec;
    let frame = Frame::Identity { committed: params.chain_len };
    let b = ChainSpec::rotated(params).evaluate(frame, x_chain, params.k);
    let mut m = b.hessian_tridiagonal()?.spectral_norm();
    for j in 3..=params.k {
        m = m.max(tensor_norm_estimate(&b, j, restarts, seed.wrapping_add(j as u64))?);
    }
    Ok(m)
}

fn max_or_zero(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0_f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// `(ln x_{t0+j} − ln λ̃/(k−1))/k^j` must stay above `−k·ln 6`; this form
/// avoids overflowing `k^{j+1}`. In the log-continued part of the tail the
/// quantity is exactly constant, so the scan stops there.
fn tail_report(params: &InstanceParams, ln_x: &[f64], t0: Option<usize>, name: &str) -> CheckReport {
    let t_len = params.chain_len;
    let Some(t0) = t0 else {
        return CheckReport::new(name, f64::INFINITY, 0.0, 0, "no index t0 with x_{t0+1} <= lambda~^{1/(k-1)}/2");
    };
    let k = params.k as f64;
    let c = params.lambda_tilde().ln() / (k - 1.0);
    let floor = -k * 6f64.ln();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for j in 1..=t_len - t0 {
        let kj = k.powi(j as i32);
        let l = ln_x[t0 + j - 1];
        if !kj.is_finite() {
            break;
        }
        let a = (l - c) / kj;
        // report how far below the admissible floor the scaled log lies
        worst = worst.max(floor - a);
        checked += 1;
        // direct comparison where the bound itself is representable
        let b = tail_decay_value(params, j);
        if b.ln.is_finite() && l.is_finite() {
            worst = worst.max((b.ln - l) / kj);
        }
        if l.is_finite() && l < f64::MIN_POSITIVE.ln() {
            break;
        }
    }
    CheckReport::new(
        name,
        worst.max(0.0),
        1e-12,
        checked,
        format!("t0 = {t0}, scaled log floor {floor:.6}"),
    )
}

/// One report per clause of the minimizer bounds, recomputed from
/// `solution.x_star` (cached residuals and `t0` are ignored), plus a
/// `preconditions` report for the assumptions on `γ` and `T̃`.
pub fn structure_suite(params: &InstanceParams, solution: &MinimizerSolution, basis: &RotationBasis) -> Result<Vec<CheckReport>> {
    let x = &solution.x_star;
    let n = params.chain_len;
    if x.len() != n || basis.chain_len() != n || !basis.is_complete() {
        return Err(Error::InvalidInput("solution and basis must match the chain length".into()));
    }
    let g = params.gamma;
    let lt = params.lambda_tilde();
    let head = x[0].abs().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();

    let pre = validate_instance(params, f64::INFINITY);
    out.push(CheckReport::new(
        "preconditions",
        pre.len() as f64,
        0.0,
        1,
        pre.iter().map(|v| format!("{}: {:e} {} {:e}", v.name, v.lhs, v.relation, v.rhs)).collect::<Vec<_>>().join("; "),
    ));

    out.push(CheckReport::new(
        "coordinates non-negative",
        max_or_zero(x.iter().map(|v| -v)),
        0.0,
        n,
        "",
    ));
    out.push(CheckReport::new(
        "coordinates non-increasing",
        max_or_zero(x.windows(2).map(|w| (w[1] - w[0]) / head)),
        1e-15,
        n.saturating_sub(1),
        "relative to x_1",
    ));
    let mut prefix = 0.0;
    let mut rec = 0.0_f64;
    for t in 0..n.saturating_sub(1) {
        prefix += x[t];
        let d = x[t] - x[t + 1];
        let lhs = d.abs().powi(params.k as i32) * d.signum();
        rec = rec.max((lhs - (g - lt * prefix)).abs() / g.max(f64::MIN_POSITIVE));
    }
    out.push(CheckReport::new(
        "consecutive differences follow the driving recursion",
        rec,
        1e-9,
        n.saturating_sub(1),
        "(x_t - x_{t+1})^k against gamma - lambda~ * prefix sum, relative to gamma",
    ));
    let target = g / lt;
    let sum: f64 = x.iter().sum();
    out.push(CheckReport::new(
        "coordinates sum to gamma / lambda~",
        (sum - target).abs() / target.max(f64::MIN_POSITIVE),
        1e-10,
        1,
        format!("sum {sum:e}, expected {target:e}"),
    ));
    let lb_check = |vals: &[f64]| {
        max_or_zero(vals.iter().enumerate().map(|(t, v)| (coordinate_lower_bound(params, t + 1) - v) / head))
    };
    out.push(CheckReport::new("coordinate lower bound", lb_check(x), 1e-12, n, "relative to x_1"));
    let nb = norm_bound(params);
    let sq: f64 = x.iter().map(|v| v * v).sum();
    out.push(CheckReport::new(
        "squared norm bound",
        sq / nb - 1.0,
        1e-12,
        1,
        format!("{sq:e} against {nb:e}"),
    ));

    let ln_x = ln_coordinates(params, x);
    let t0 = find_t0(params, x);
    if params.regime == Regime::High {
        out.push(CheckReport::new(
            "t0 within first half of the chain",
            t0.map_or(f64::INFINITY, |t| t as f64 - n as f64 / 2.0).max(0.0),
            0.0,
            1,
            format!("t0 = {t0:?}, chain length {n}"),
        ));
        out.push(tail_report(params, &ln_x, t0, "doubly exponential tail"));
    }

    // rotated statements: ⟨v_t, x*⟩ = x̃*_t and ‖x*‖² = Σ x̃*_t²
    let xs = basis.combine(x);
    let proj = basis.project(&xs);
    let rot = max_or_zero(proj.iter().zip(x).map(|(p, v)| (p - v).abs() / head));
    out.push(CheckReport::new("projections recover chain coordinates", rot, 1e-12, n, "relative to x_1"));
    let xs_sq: f64 = xs.iter().map(|v| v * v).sum();
    out.push(CheckReport::new(
        "rotation preserves the norm",
        (xs_sq - sq).abs() / sq.max(f64::MIN_POSITIVE),
        1e-12,
        1,
        "",
    ));
    out.push(CheckReport::new("rotated coordinate lower bound", lb_check(&proj), 1e-12, n, "relative to x_1"));
    out.push(CheckReport::new(
        "rotated squared norm bound",
        xs_sq / nb - 1.0,
        1e-12,
        1,
        format!("{xs_sq:e} against {nb:e}"),
    ));
    if params.regime == Regime::High {
        // projections carry absolute error ~1e-16‖x*‖; below that floor the
        // tail is read from the chain coordinates, which the projection check
        // above ties to the rotated point
        let floor = 1e-13 * norm(&xs);
        let ln_p: Vec<f64> = proj
            .iter()
            .zip(&ln_x)
            .map(|(p, l)| if *p > floor { p.ln() } else { *l })
            .collect();
        let proj_t0 = find_t0(params, &proj);
        let mut r = tail_report(params, &ln_p, proj_t0, "rotated doubly exponential tail");
        if let Some(t) = proj_t0 {
            if 2 * t > n {
                r = CheckReport::new(r.check_name, f64::INFINITY, 0.0, r.samples, "t0 beyond half the chain");
            }
        }
        out.push(r);
    }
    Ok(out)
}
