//! Cubic regularized Newton: `h = argmin ⟨g,h⟩ + ½⟨Hh,h⟩ + (m2/6)‖h‖³`.

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};
use crate::oracle::Oracle;

use super::{IterRecord, SolverRun};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicStep {
    pub h: Vec<f64>,
    /// Root `r = ‖h‖` of the secular equation.
    pub r: f64,
    pub iterations: usize,
}

/// Solves the cubic subproblem through the secular equation `‖h(r)‖ = r`,
/// `h(r) = −(H + (m2·r/2)I)^{-1} g`.
///
/// `solve(shift, rhs)` must return `(H + shift·I)^{-1} rhs`, which exists for
/// every `shift ≥ 0` when `H` is positive definite. `lambda_min` is a lower
/// bound on the spectrum of `H`, used only for bracketing.
pub fn solve_cubic_secular<F>(mut solve: F, g: &[f64], m2: f64, lambda_min: f64) -> Result<CubicStep>
where
    F: FnMut(f64, &[f64]) -> Option<Vec<f64>>,
{
    let gn = norm(g);
    let fail = |shift: f64| Error::NumericalBreakdown(format!("shifted solve failed at shift {shift:e}"));
    if gn == 0.0 {
        return Ok(CubicStep { h: vec![0.0; g.len()], r: 0.0, iterations: 0 });
    }
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let h0 = solve(0.0, &neg).ok_or_else(|| fail(0.0))?;
    let h0n = norm(&h0);
    if m2 == 0.0 {
        return Ok(CubicStep { h: h0, r: h0n, iterations: 0 });
    }
    // ψ(r) = ‖h(r)‖ − r is decreasing, positive at 0 and non-positive at hi
    let mut lo = 0.0;
    let mut hi = h0n.min((2.0 * gn / m2).sqrt());
    if lambda_min > 0.0 {
        hi = hi.min(gn / lambda_min);
    }
    let mut r = hi;
    let mut best = None;
    for it in 1..=200 {
        let shift = 0.5 * m2 * r;
        let h = solve(shift, &neg).ok_or_else(|| fail(shift))?;
        let hn = norm(&h);
        let psi = hn - r;
        if psi.abs() <= 1e-13 * r.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            return Ok(CubicStep { h, r, iterations: it });
        }
        if psi > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        // Newton on 1/‖h(r)‖ − 1/r, which is nearly linear in r
        let w = solve(shift, &h).ok_or_else(|| fail(shift))?;
        let phi = 1.0 / hn - 1.0 / r;
        let dphi = 0.5 * m2 * dot(&h, &w) / hn.powi(3) + 1.0 / (r * r);
        let mut next = r - phi / dphi;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        best = Some(h);
        r = next;
    }
    let h = best.unwrap_or(h0);
    let r = norm(&h);
    Ok(CubicStep { h, r, iterations: 200 })
}

/// One CRN step from `x`: queries second-order information and returns the
/// next iterate together with the step.
pub fn crn_step<O: Oracle + ?Sized>(oracle: &mut O, x: &[f64], m2: f64) -> Result<(Vec<f64>, CubicStep)> {
    if !(m2 > 0.0) {
        return Err(Error::InvalidInput(format!("m2 must be positive, got {m2}")));
    }
    let b = oracle.query(x, 2)?;
    crn_step_from(&b, x, m2)
}

pub(crate) fn crn_step_from(
    b: &crate::model::DerivativeBundle,
    x: &[f64],
    m2: f64,
) -> Result<(Vec<f64>, CubicStep)> {
    if !crate::numeric::all_finite(&b.gradient) || !b.value.is_finite() {
        return Err(Error::NumericalBreakdown("non-finite oracle response".into()));
    }
    let red = b.reduce();
    let tri = red.bundle.hessian_tridiagonal()?;
    let step = solve_cubic_secular(|s, rhs| tri.solve_shifted(s, rhs), &red.bundle.gradient, m2, b.lambda)?;
    let h = red.lift(&step.h);
    let next: Vec<f64> = x.iter().zip(&h).map(|(a, d)| a + d).collect();
    Ok((next, CubicStep { h, r: step.r, iterations: step.iterations }))
}

/// Runs CRN from `x0` for at most `max_iters` steps, stopping once the oracle
/// reports a gap `≤ eps`. With `detect_divergence`, five consecutive gap
/// increases abort the run.
pub fn crn_run<O: Oracle + ?Sized>(
    oracle: &mut O,
    x0: &[f64],
    m2: f64,
    eps: f64,
    max_iters: usize,
    detect_divergence: bool,
) -> Result<SolverRun> {
    let mut run = SolverRun::new(x0);
    run.phase_starts.push((3, 0));
    crn_phase(oracle, &mut run, m2, eps, max_iters, detect_divergence, 3)?;
    Ok(run)
}

pub(crate) fn crn_phase<O: Oracle + ?Sized>(
    oracle: &mut O,
    run: &mut SolverRun,
    m2: f64,
    eps: f64,
    steps: usize,
    detect_divergence: bool,
    phase: u8,
) -> Result<()> {
    let mut rises = 0;
    let mut prev_gap: Option<f64> = None;
    for _ in 0..steps {
        let x = run.x_final.clone();
        let b = oracle.query(&x, 2)?;
        run.queries += 1;
        let gap = oracle.last_gap();
        run.final_gap = gap;
        if let Some(g) = gap {
            if g <= eps {
                return Ok(());
            }
            if let Some(p) = prev_gap {
                rises = if g > p { rises + 1 } else { 0 };
                if detect_divergence && rises >= 5 {
                    return Err(Error::QuadraticPhaseFailure(rises));
                }
            }
        }
        prev_gap = gap;
        let (next, step) = crn_step_from(&b, &x, m2)?;
        run.iterates.push(IterRecord {
            iter: run.iterates.len() + 1,
            phase,
            gap,
            step_norm: step.r,
            queries: run.queries,
        });
        run.x_final = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(h: &DMatrix<f64>) -> impl FnMut(f64, &[f64]) -> Option<Vec<f64>> + '_ {
        move |s, rhs| {
            let a = h + DMatrix::identity(h.nrows(), h.ncols()) * s;
            a.cholesky().map(|c| c.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec())
        }
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let h = DMatrix::identity(3, 3);
        let s = solve_cubic_secular(dense_solve(&h), &[0.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn vanishing_regularization_gives_newton_step() {
        let lam = 0.7;
        let h = DMatrix::identity(3, 3) * lam;
        let g = [0.3, -1.0, 2.0];
        let s = solve_cubic_secular(dense_solve(&h), &g, 1e-12, lam).unwrap();
        for (hi, gi) in s.h.iter().zip(&g) {
            assert!((hi + gi / lam).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_subproblem_matches_line_search() {
        // f(x) = λ/2‖x‖² + (c/6)‖x‖³; the model minimizer lies on the ray −x
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (lam, c, m2) = (0.5, 2.0, 3.0);
        for _ in 0..5 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xv = DVector::from_column_slice(&x);
            let r = xv.norm();
            let g: Vec<f64> = x.iter().map(|v| (lam + 0.5 * c * r) * v).collect();
            let hess = DMatrix::identity(3, 3) * (lam + 0.5 * c * r) + (&xv * xv.transpose()) * (0.5 * c / r);
            let step = solve_cubic_secular(dense_solve(&hess), &g, m2, lam).unwrap();
            // first-order condition
            let hv = DVector::from_column_slice(&step.h);
            let foc = DVector::from_column_slice(&g) + &hess * &hv + &hv * (0.5 * m2 * hv.norm());
            assert!(foc.norm() <= 1e-9 * DVector::from_column_slice(&g).norm());
            // brute force along −x̂
            let u = -&xv / r;
            let gu = DVector::from_column_slice(&g).dot(&u);
            let hu = (&hess * &u).dot(&u);
            // bisection on the slope of the 1-D model, increasing for t > 0
            let slope = |t: f64| gu + hu * t + 0.5 * m2 * t * t;
            let (mut lo, mut hi) = (0.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let expect = &u * t;
            assert!((hv - expect).norm() <= 1e-8);
        }
    }
}
