//! Gradient descent with Armijo backtracking, the first-order baseline.

use crate::error::{Error, Result};
use crate::numeric::{norm, norm_sq};
use crate::oracle::Oracle;

use super::{IterRecord, SolverRun};

/// Every function value used by the line search costs one oracle query.
/// Stops when the oracle reports a gap `≤ eps` or after `max_iters` steps.
pub fn gradient_descent<O: Oracle + ?Sized>(oracle: &mut O, x0: &[f64], eps: f64, max_iters: usize) -> Result<SolverRun> {
    let mut run = SolverRun::new(x0);
    run.phase_starts.push((1, 0));
    let mut x = x0.to_vec();
    let mut b = oracle.query(&x, 1)?;
    run.queries += 1;
    let mut eta = 1.0;
    for it in 1..=max_iters {
        let gap = oracle.last_gap();
        run.final_gap = gap;
        if gap.is_some_and(|g| g <= eps) {
            break;
        }
        let gsq = norm_sq(&b.gradient);
        if gsq == 0.0 {
            break;
        }
        if !b.value.is_finite() || !gsq.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite value or gradient".into()));
        }
        eta *= 2.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&b.gradient).map(|(a, g)| a - eta * g).collect();
            let tb = oracle.query(&trial, 1)?;
            run.queries += 1;
            if tb.value <= b.value - 0.5 * eta * gsq {
                run.iterates.push(IterRecord {
                    iter: it,
                    phase: 1,
                    gap,
                    step_norm: eta * gsq.sqrt(),
                    queries: run.queries,
                });
                x = trial;
                b = tb;
                break;
            }
            eta *= 0.5;
            if eta * norm(&b.gradient) < 1e-300 {
                return Err(Error::NumericalBreakdown("line search step underflowed".into()));
            }
        }
    }
    run.final_gap = oracle.last_gap();
    run.x_final = x;
    Ok(run)
}
