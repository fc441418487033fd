//! Three-phase schedule: restarted ATD until the Hessian-Lipschitz proxy is
//! controlled, restarted ATD into the quadratic region, then CRN.

use crate::error::Result;
use crate::oracle::Oracle;

use super::atd::restarted_phase;
use super::crn::crn_phase;
use super::{PhasePlan, SolverConfig, SolverRun};

/// Runs the combined method. Phase lengths come from the plan; in
/// certificate mode a phase also ends once the measured gap reaches its
/// target, and Phase 3 runs until the gap is `≤ ε` (capped by `max_iters`).
pub fn combined_solver<O: Oracle + ?Sized>(
    oracle: &mut O,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(SolverRun, PhasePlan)> {
    let plan = PhasePlan::new(cfg)?;
    let mut run = SolverRun::new(x0);
    let cert = cfg.certificate_mode;
    if cfg.k > 2 && plan.t1 > 0 {
        run.phase_starts.push((1, run.iterates.len()));
        let stop = cert.then_some(plan.phase1_target);
        restarted_phase(oracle, cfg, &mut run, plan.tau, plan.t1, stop, 1)?;
    }
    run.phase_starts.push((2, run.iterates.len()));
    let stop = cert.then_some(plan.phase2_target);
    restarted_phase(oracle, cfg, &mut run, plan.tau, plan.t2, stop, 2)?;

    run.phase_starts.push((3, run.iterates.len()));
    let steps = if cert {
        cfg.max_iters.saturating_sub(run.iterates.len())
    } else {
        plan.t3
    };
    crn_phase(oracle, &mut run, plan.crn_m2, cfg.eps, steps, true, 3)?;
    Ok((run, plan))
}
