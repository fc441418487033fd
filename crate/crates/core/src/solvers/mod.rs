//! Upper-bound algorithms: accelerated Taylor descent with restarts, cubic
//! regularized Newton, and the three-phase schedule combining them.

mod atd;
mod combined;
mod crn;
mod gd;
mod taylor;

pub use atd::{atd_run, calibrate_c_k, default_c_k, restarted_atd, CalibrationReport};
pub use combined::combined_solver;
pub use crn::{crn_run, crn_step, solve_cubic_secular, CubicStep};
pub use gd::gradient_descent;
pub use taylor::{minimize_taylor_model, TaylorStep};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Violation;

/// Settings of the inner regularized-model solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub max_steps: usize,
    /// Stop when the model gradient norm drops below `tol · max(1, ‖g‖)`.
    pub tol: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            max_steps: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub k: usize,
    pub mu_k: f64,
    pub lambda: f64,
    /// Bound on `‖x⁰ − x*‖`.
    #[serde(rename = "D")]
    pub d_radius: f64,
    /// `max_{2≤j≤k} ‖∇^j f(x*)‖`.
    #[serde(rename = "M")]
    pub m: f64,
    pub c_k: f64,
    pub eps: f64,
    /// Cap on outer iterations.
    pub max_iters: usize,
    #[serde(default)]
    pub atd_inner: InnerConfig,
    /// Trigger phase changes (and stop) on measured gaps when the oracle knows them.
    #[serde(default)]
    pub certificate_mode: bool,
}

impl SolverConfig {
    pub fn new(k: usize, mu_k: f64, lambda: f64, d_radius: f64, m: f64, eps: f64) -> Self {
        SolverConfig {
            k,
            mu_k,
            lambda,
            d_radius,
            m,
            c_k: default_c_k(k),
            eps,
            max_iters: 2048,
            atd_inner: InnerConfig::default(),
            certificate_mode: false,
        }
    }

    /// Inequalities under which the upper bound is stated.
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in [
            ("mu_k > 0", self.mu_k),
            ("lambda > 0", self.lambda),
            ("M > 0", self.m),
            ("c_k > 0", self.c_k),
            ("eps > 0", self.eps),
        ] {
            if !(v > 0.0) {
                out.push(Violation {
                    name: name.into(),
                    relation: ">".into(),
                    lhs: v,
                    rhs: 0.0,
                });
            }
        }
        if !(self.d_radius > 2.0) {
            out.push(Violation {
                name: "D > 2 (not too lucky)".into(),
                relation: ">".into(),
                lhs: self.d_radius,
                rhs: 2.0,
            });
        }
        let cap = self.lambda.powi(3) / (2.0 * std::f64::consts::E * self.m * self.m);
        if !(self.eps < cap) {
            out.push(Violation {
                name: "eps < lambda^3 / (2 e M^2)".into(),
                relation: "<".into(),
                lhs: self.eps,
                rhs: cap,
            });
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput(format!("order k={} must be >= 2", self.k)));
        }
        for (name, v) in [
            ("mu_k", self.mu_k),
            ("lambda", self.lambda),
            ("M", self.m),
            ("c_k", self.c_k),
            ("eps", self.eps),
            ("D", self.d_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `ATD` regularization weight `σ`: the model is
    /// `Taylor_k(h) + σ/(k+1)·‖h‖^{k+1}` with `σ = μ_k/(k−1)!`, the smallest
    /// weight that keeps it convex.
    pub fn sigma(&self) -> f64 {
        self.mu_k / crate::numeric::factorial(self.k - 1)
    }
}

/// `(M/4)D^{k−1} + (μ_k/2)D^{k+1}`, the worst gap at distance `D` from `x*`.
pub fn suboptimality_at_distance(k: usize, m: f64, mu_k: f64, d: f64) -> Result<f64> {
    if !(d >= 2.0) {
        return Err(Error::PreconditionViolated(format!("bound needs D >= 2, got {d}")));
    }
    let k = k as i32;
    Ok(0.25 * m * d.powi(k - 1) + 0.5 * mu_k * d.powi(k + 1))
}

/// Bound on the Hessian Lipschitz constant inside `B(x*, r)`:
/// `M·(r^{k−3} − 1)/(r − 1) + μ_k·r^{k−2}`, with the limit `M(k−3) + μ_k` at `r = 1`.
pub fn mu2_proxy_bound(k: usize, m: f64, mu_k: f64, r: f64) -> f64 {
    let ki = k as i32;
    let ratio = if (r - 1.0).abs() < 1e-12 {
        k as f64 - 3.0
    } else {
        (r.powi(ki - 3) - 1.0) / (r - 1.0)
    };
    m * ratio + mu_k * r.powi(ki - 2)
}

/// Step counts of the three-phase schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    /// Unrounded restart period.
    pub tau_real: f64,
    pub tau: usize,
    /// Phase-1 length from the closed form as printed.
    pub t1_printed: usize,
    /// Phase-1 length recomputed from the restart bound with the Phase-1 target.
    pub t1_derived: usize,
    pub t1_discrepancy: bool,
    /// Length used for scheduling (the recomputed value; 0 when `k = 2`).
    pub t1: usize,
    pub t2: usize,
    /// Target gap at the end of Phase 1.
    pub phase1_target: f64,
    /// `λ³/(32M²)`, target gap at the end of Phase 2.
    pub phase2_target: f64,
    /// `min{1, (M/μ_k)^{1/(k−2)}}`, infinite for `k = 2`.
    pub r_switch: f64,
    pub crn_m2: f64,
    /// Scheduled CRN steps `4·⌈log log(λ³/(M²ε))⌉`.
    pub t3: usize,
}

/// `(4c_kμ_kD^{k−1}/λ)^{2/(3k+1)}`.
pub fn restart_period(cfg: &SolverConfig) -> f64 {
    let k = cfg.k as f64;
    (4.0 * cfg.c_k * cfg.mu_k * cfg.d_radius.powf(k - 1.0) / cfg.lambda).powf(2.0 / (3.0 * k + 1.0))
}

/// Restarted-ATD steps sufficient to reach gap `target` from distance `D`.
pub fn restart_budget(cfg: &SolverConfig, target: f64) -> usize {
    let k = cfg.k as f64;
    let x = cfg.m * cfg.d_radius.powf(k - 1.0) + 2.0 * cfg.mu_k * cfg.d_radius.powf(k + 1.0);
    ceil_steps(restart_period(cfg) * (x / (4.0 * target)).log2())
}

fn ceil_steps(v: f64) -> usize {
    if v.is_finite() && v > 0.0 {
        v.ceil() as usize
    } else {
        0
    }
}

/// `⌈log log(λ³/(M²ε))⌉`, at least 1.
pub fn crn_loglog(cfg: &SolverConfig) -> usize {
    let ratio = cfg.lambda.powi(3) / (cfg.m * cfg.m * cfg.eps);
    let ll = ratio.ln().max(1.0).ln();
    ceil_steps(ll).max(1)
}

impl PhasePlan {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.k as f64;
        let (lam, mu, m, d) = (cfg.lambda, cfg.mu_k, cfg.m, cfg.d_radius);
        let tau_real = restart_period(cfg);
        let x = m * d.powf(k - 1.0) + 2.0 * mu * d.powf(k + 1.0);
        let (t1_printed, t1_derived, phase1_target, r_switch, crn_m2) = if cfg.k == 2 {
            (0, 0, f64::INFINITY, f64::INFINITY, mu)
        } else {
            let e = 2.0 / (k - 2.0);
            let printed = tau_real * (x * x / (8.0 * lam) * (mu / m).powf(e)).log2();
            let target = 0.5 * lam * (m / mu).powf(e).min(1.0);
            (
                ceil_steps(printed),
                restart_budget(cfg, target),
                target,
                (m / mu).powf(1.0 / (k - 2.0)).min(1.0),
                2.0 * m,
            )
        };
        let phase2_target = lam.powi(3) / (32.0 * m * m);
        Ok(PhasePlan {
            tau_real,
            tau: ceil_steps(tau_real).max(1),
            t1_printed,
            t1_derived,
            t1_discrepancy: t1_printed != t1_derived,
            t1: t1_derived,
            t2: restart_budget(cfg, phase2_target),
            phase1_target,
            phase2_target,
            r_switch,
            crn_m2,
            t3: 4 * crn_loglog(cfg),
        })
    }
}

/// One outer iteration of a solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub phase: u8,
    /// Gap at the point queried at the start of the iteration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub step_norm: f64,
    /// Oracle queries used so far.
    pub queries: usize,
}

/// Trace of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub iterates: Vec<IterRecord>,
    pub x_final: Vec<f64>,
    /// Outer iteration at which each phase started (phase number, iteration).
    pub phase_starts: Vec<(u8, usize)>,
    pub queries: usize,
    /// Gap at the last queried iterate, when the oracle reports it.
    pub final_gap: Option<f64>,
}

impl SolverRun {
    pub(crate) fn new(x0: &[f64]) -> Self {
        SolverRun {
            iterates: Vec::new(),
            x_final: x0.to_vec(),
            phase_starts: Vec::new(),
            queries: 0,
            final_gap: None,
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.iterates.len()
    }

    pub fn last_gap(&self) -> Option<f64> {
        self.final_gap
    }

    /// JSON-lines run log, one iteration per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.iterates {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, d: f64) -> SolverConfig {
        let mut c = SolverConfig::new(k, 2.0, 0.5, d, 1.5, 1e-8);
        c.c_k = 1.0;
        c
    }

    #[test]
    fn suboptimality_bound_rejects_small_radius() {
        assert!(matches!(
            suboptimality_at_distance(3, 1.0, 1.0, 1.5),
            Err(Error::PreconditionViolated(_))
        ));
        let a = suboptimality_at_distance(3, 1.0, 1.0, 3.0).unwrap();
        assert!(suboptimality_at_distance(3, 1.1, 1.0, 3.0).unwrap() > a);
        assert!(suboptimality_at_distance(3, 1.0, 1.1, 3.0).unwrap() > a);
        assert!(suboptimality_at_distance(3, 1.0, 1.0, 3.1).unwrap() > a);
        assert_eq!(suboptimality_at_distance(2, 0.0, 2.0, 2.0).unwrap(), 8.0);
    }

    #[test]
    fn mu2_proxy_limits() {
        // below the switch radius the bound is at most 2M (orders 3 and 4)
        for k in 3..=4 {
            let (m, mu) = (0.7, 3.0);
            let r_sw = (m / mu as f64).powf(1.0 / (k as f64 - 2.0)).min(1.0);
            for f in [0.1, 0.5, 0.99] {
                assert!(mu2_proxy_bound(k, m, mu, f * r_sw) <= 2.0 * m);
            }
        }
        // from order 5 on, (r^{k−3} − 1)/(r − 1) = 1 + r + ... exceeds 1 and
        // so does the bound
        let (m, mu) = (1.0, 0.5);
        assert!(mu2_proxy_bound(5, m, mu, 0.9) > 2.0 * m);
        // small-radius limit for k > 3
        assert!((mu2_proxy_bound(5, 2.0, 1.0, 1e-9) - 2.0).abs() < 1e-8);
        // the r = 1 value is continuous
        let a = mu2_proxy_bound(5, 2.0, 1.0, 1.0);
        assert!((a - mu2_proxy_bound(5, 2.0, 1.0, 1.0 + 1e-7)).abs() < 1e-5);
    }

    #[test]
    fn restart_period_scales_with_radius() {
        let r = restart_period(&cfg(2, 20.0)) / restart_period(&cfg(2, 10.0));
        assert!((r - 2f64.powf(2.0 / 7.0)).abs() < 1e-12);
        let r = restart_period(&cfg(3, 20.0)) / restart_period(&cfg(3, 10.0));
        assert!((r - 2f64.powf(4.0 / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn phase_plan_for_order_two_skips_first_phase() {
        let p = PhasePlan::new(&cfg(2, 10.0)).unwrap();
        assert_eq!(p.t1, 0);
        assert!(p.r_switch.is_infinite());
        assert_eq!(p.crn_m2, 2.0);
        assert!(p.t2 > 0 && p.tau >= 1);
    }

    #[test]
    fn first_phase_length_flags_closed_form_mismatch() {
        let p = PhasePlan::new(&cfg(3, 10.0)).unwrap();
        assert_eq!(p.t1, p.t1_derived);
        assert_eq!(p.t1_discrepancy, p.t1_printed != p.t1_derived);
        assert!(p.t1_printed > p.t1_derived);
        assert_eq!(p.crn_m2, 3.0);
        assert!((p.r_switch - 0.75).abs() < 1e-15);
    }

    #[test]
    fn config_checks_assumptions() {
        let mut c = cfg(2, 10.0);
        assert!(c.check().is_empty());
        c.eps = 1.0;
        c.d_radius = 2.0;
        let names: Vec<_> = c.check().into_iter().map(|v| v.name).collect();
        assert_eq!(names.len(), 2);
    }
}
