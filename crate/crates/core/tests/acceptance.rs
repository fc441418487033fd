//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hosc::adversary::{run_duel, AdversaryState, DuelOracle};
use hosc::harness::{build_instance, fit_exponent, run_sweep, Algorithm, Caps, ExperimentConfig, SweepPoint, Vary};
use hosc::minimizer::{brute_force_minimizer, pull_back, solve_chain_minimizer, stationarity_residuals, MinimizerSolution};
use hosc::model::params::{chain_constant, validate_instance};
use hosc::model::{DerivativeBundle, Instance, InstanceParams, Regime, RotationBasis};
use hosc::oracle::Oracle;
use hosc::solvers::{combined_solver, gradient_descent, restarted_atd, SolverConfig};
use hosc::verify::{self, CheckReport};
use hosc::Result;

struct Line {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> Line {
    match r {
        Ok((passed, detail)) => Line { name, passed, detail },
        Err(e) => Line {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Smallest power-of-two `λ̃` for which `γ = 1.1·γ_min` fits in a chain of
/// length `t`, so that every assumption of the high-dimensional bounds holds.
fn valid_instance(k: usize, t: usize) -> Result<InstanceParams> {
    let kf = k as f64;
    let mut lt = 1.0_f64;
    loop {
        let g_min = lt.powf(kf / (kf - 1.0)).max(12f64.powf(2.0 * kf / (kf + 1.0)) * lt.powf(2.0 * kf / (2.0 * kf - 1.0)));
        let gamma = 1.1 * g_min;
        if 4.0 * gamma / lt.powf(kf / (kf - 1.0)) <= t as f64 {
            return InstanceParams::from_lambda_tilde(k, lt, chain_constant(k), gamma, t, t + 1, Regime::High);
        }
        lt *= 2.0;
    }
}

fn minimizer_instances() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for t in [8, 16, 32, 64, 128, 256, 512] {
        v.push((2, t));
        v.push((3, t));
    }
    for t in [8, 16, 32, 64, 256, 512] {
        v.push((4, t));
    }
    v
}

fn criterion_1(solved: &mut Vec<(InstanceParams, MinimizerSolution)>) -> Result<(bool, String)> {
    let start = Instant::now();
    let mut worst_res = 0.0_f64;
    let mut worst_sum = 0.0_f64;
    let mut worst_bf = 0.0_f64;
    let mut compared = 0;
    for (k, t) in minimizer_instances() {
        let p = valid_instance(k, t)?;
        let sol = solve_chain_minimizer(&p)?;
        let res = stationarity_residuals(&p, &sol.x_star)?;
        let r = res.iter().fold(0.0_f64, |a, b| a.max(b.abs())) / p.gamma;
        let target = p.gamma / p.lambda_tilde();
        let s = (sol.x_star.iter().sum::<f64>() - target).abs() / target;
        worst_res = worst_res.max(r);
        worst_sum = worst_sum.max(s);
        if t <= 64 {
            let bf = brute_force_minimizer(&p, 1e-7)?;
            let d = bf.iter().zip(&sol.x_star).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            worst_bf = worst_bf.max(d);
            compared += 1;
        }
        solved.push((p, sol));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_res <= 1e-9 && worst_sum <= 1e-10 && worst_bf <= 1e-6 && secs < 60.0;
    Ok((
        ok,
        format!(
            "{} instances, residual/gamma {worst_res:.1e}, sum identity {worst_sum:.1e}, \
             brute force max diff {worst_bf:.1e} on {compared}, {secs:.1} s",
            solved.len()
        ),
    ))
}

fn failing(reports: &[CheckReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({:.1e})", r.check_name, r.worst_violation))
        .collect()
}

fn criterion_2(solved: &[(InstanceParams, MinimizerSolution)]) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut valid = 0;
    let mut clauses = 0;
    let mut bad = Vec::new();
    for (p, sol) in solved {
        if !validate_instance(p, f64::INFINITY).is_empty() {
            continue;
        }
        valid += 1;
        let basis = RotationBasis::random(p.chain_len, p.dim, &mut rng)?;
        let reports = verify::structure_suite(p, sol, &basis)?;
        clauses += reports.len();
        for f in failing(&reports) {
            bad.push(format!("k={} T={}: {f}", p.k, p.chain_len));
        }
    }
    for d in [8, 16, 32] {
        let p = InstanceParams::from_lambda_tilde(2, 1.0, chain_constant(2), 1.0, d, d, Regime::Low)?;
        let sol = solve_chain_minimizer(&p)?;
        let basis = RotationBasis::random(d, d, &mut rng)?;
        let reports = verify::structure_suite(&p, &sol, &basis)?;
        clauses += reports.len();
        for f in failing(&reports) {
            bad.push(format!("low d={d}: {f}"));
        }
    }
    Ok((
        bad.is_empty() && !solved.is_empty() && valid == solved.len(),
        format!("{valid} valid high-dimensional instances plus 3 low-dimensional, {clauses} clause reports, failures: {bad:?}"),
    ))
}

fn criterion_3() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for k in [2, 3, 4] {
        let p = InstanceParams::from_lambda_tilde(k, 0.5, chain_constant(k), 6.0, 24, 32, Regime::High)?;
        let sol = solve_chain_minimizer(&p)?;
        let basis = RotationBasis::random(24, 32, &mut rng)?;
        let xs = pull_back(&sol, &basis)?;
        let mut inst = Instance::new(p.clone(), basis)?;
        let radius = hosc::numeric::norm(&xs).max(1.0);
        let mut reports = vec![
            verify::strong_convexity_check(&mut inst, p.lambda, &xs, radius, 1000, 31)?,
            verify::lipschitz_estimate(&mut inst, k, &xs, radius, 200, p.mu_k * (1.0 + 1e-6), 32)?,
        ];
        if k >= 3 {
            let m = verify::estimate_m(&p, &sol.x_star, 20, 33)?;
            let r = 0.9 * (m / p.mu_k).powf(1.0 / (k as f64 - 2.0)).min(1.0);
            reports.push(verify::lipschitz_estimate(&mut inst, 2, &xs, r, 200, 2.0 * m, 34)?);
        }
        for r in &reports {
            summary.push(format!("k={k} {}: {:.3e}/{:.3e}", r.check_name, r.worst_violation, r.tolerance));
        }
        bad.extend(failing(&reports).into_iter().map(|f| format!("k={k}: {f}")));
    }
    Ok((bad.is_empty(), format!("{}; failures: {bad:?}", summary.join("; "))))
}

/// Keeps every response handed out during a duel.
struct Recorder<'a, O: Oracle> {
    inner: O,
    log: &'a mut Vec<(Vec<f64>, usize, DerivativeBundle)>,
}

impl<O: Oracle> Oracle for Recorder<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        let b = self.inner.query(x, order)?;
        self.log.push((x.to_vec(), order, b.clone()));
        Ok(b)
    }
    fn last_gap(&self) -> Option<f64> {
        self.inner.last_gap()
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn criterion_4() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    let mut cert_violations = 0;
    let mut points = 0;
    for seed in 0..10u64 {
        let k = 2 + (seed % 2) as usize;
        let pt = SweepPoint { k, lambda: 1e-2, mu_k: chain_constant(k), d: 10.0, eps: 1e-12 };
        let built = build_instance(&pt, Regime::High, &Caps { chain_len: 48, ..Caps::default() })?;
        let mut state = AdversaryState::new(&built.params, 64, seed)?;
        let m = verify::estimate_m(state.params(), &state.solution().x_star, 20, seed)?;
        let mut cfg = SolverConfig::new(k, pt.mu_k, pt.lambda, pt.d, m, pt.eps);
        cfg.certificate_mode = true;
        let mut log = Vec::new();
        {
            let duel = DuelOracle::new(&mut state, pt.eps, 64, false);
            let mut rec = Recorder { inner: duel, log: &mut log };
            let x0 = vec![0.0; rec.dim()];
            let r = match seed % 3 {
                0 => gradient_descent(&mut rec, &x0, pt.eps, 64).map(|_| ()),
                1 => restarted_atd(&mut rec, &x0, &cfg).map(|_| ()),
                _ => combined_solver(&mut rec, &x0, &cfg).map(|_| ()),
            };
            match r {
                Ok(()) | Err(hosc::Error::BudgetExhausted(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let n = state.answered();
        for t in 1..=n {
            points += 1;
            if state.gap_certificate(t) > state.true_gap(t) {
                cert_violations += 1;
            }
        }
        let (basis, _) = state.finalize()?;
        let inst = Instance::new(state.params().clone(), basis)?;
        for (x, order, b) in &log {
            let again = inst.eval(x, *order)?;
            worst = worst.max((again.value - b.value).abs());
            worst = worst.max(max_diff(&again.gradient, &b.gradient));
            for m in 2..=*order {
                worst = worst.max(max_diff(again.coefficients(m).unwrap(), b.coefficients(m).unwrap()));
            }
        }
    }
    Ok((
        worst <= 1e-10 && cert_violations == 0,
        format!("10 duels, {points} answered queries, max response mismatch {worst:.1e}, certificate violations {cert_violations}"),
    ))
}

fn sweep_config(k: &[usize], ds: &[f64], eps: f64, algorithms: Vec<Algorithm>, seeds: Vec<u64>, caps: Caps) -> ExperimentConfig {
    let mut sweep = Vec::new();
    for &k in k {
        for &d in ds {
            sweep.push(SweepPoint { k, lambda: 1e-3, mu_k: chain_constant(k), d, eps });
        }
    }
    ExperimentConfig {
        sweep,
        algorithms,
        regime: Regime::High,
        seeds,
        output_dir: None,
        caps,
        stop_on_success: true,
    }
}

fn criterion_5() -> Result<(bool, String)> {
    let caps = Caps { chain_len: 256, max_iters: 1024, ..Caps::default() };
    let cfg = sweep_config(&[2], &[10.0, 30.0, 100.0], 1e-11, vec![Algorithm::Gd, Algorithm::Atd, Algorithm::Combined], vec![1], caps);
    let records = run_sweep(&cfg)?;
    let mut bad = Vec::new();
    let mut tightest = f64::INFINITY;
    for r in &records {
        let label = format!("{} D={}", r.algorithm.name(), r.d);
        if let Some(e) = &r.error {
            bad.push(format!("{label}: {e}"));
        } else if !r.lower_bound.eps_admissible {
            bad.push(format!("{label}: eps not admissible"));
        } else if !r.respects_lower_bound() {
            bad.push(format!("{label}: first success {:?} < {:.2}", r.first_success_t, r.lower_bound.t_lower));
        }
        if let Some(t) = r.first_success_t {
            tightest = tightest.min(t as f64 / r.lower_bound.t_lower.max(1e-300));
        }
    }
    Ok((
        bad.is_empty(),
        format!("{} duels, smallest first_success_T / t_lower = {tightest:.1}, violations: {bad:?}", records.len()),
    ))
}

fn criterion_6() -> Result<(bool, String)> {
    let start = Instant::now();
    let caps = Caps::default();
    let ds = [10.0, 30.0, 100.0, 300.0];
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, target) in [(2usize, 2.0 / 7.0), (3, 0.4)] {
        let cfg = sweep_config(&[k], &ds, 1e-11, vec![Algorithm::Combined], vec![7], caps);
        let records = run_sweep(&cfg)?;
        let fit = fit_exponent(&records, Vary::D)?;
        let within = (fit.slope - target).abs() <= 0.2 * target;
        ok &= within;
        let ts: Vec<_> = records.iter().map(|r| r.first_success_t).collect();
        parts.push(format!("k={k} slope {:.4} (target {target:.4}, r2 {:.3}, T {ts:?})", fit.slope, fit.r2));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    Ok((ok, format!("{}; {secs:.0} s", parts.join("; "))))
}

fn criterion_7() -> Result<(bool, String)> {
    let eps = 1e-24;
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [2usize, 3] {
        let mu = chain_constant(k);
        let lambda = 1e-3;
        let pt = SweepPoint { k, lambda, mu_k: mu, d: 30.0, eps };
        let built = build_instance(&pt, Regime::High, &Caps { chain_len: 256, ..Caps::default() })?;
        let mut state = AdversaryState::new(&built.params, 8192, 7)?.without_query_log();
        let m = verify::estimate_m(state.params(), &state.solution().x_star, 20, 7)?;
        let mut cfg = SolverConfig::new(k, mu, lambda, pt.d, m, eps);
        cfg.certificate_mode = true;
        let mut out = None;
        run_duel(
            &mut state,
            |o, x0| {
                out = Some(combined_solver(o, x0, &cfg)?);
                Ok(())
            },
            eps,
            8192,
            false,
        )?;
        let (run, plan) = out.ok_or_else(|| hosc::Error::InvalidInput("solver produced no run".into()))?;
        let budget = plan.t1 + plan.t2 + plan.t3;
        let iters = run.outer_iterations();
        // Local contraction e+ <= (L+m2)/(2λ)·e² with λe²/2 <= gap <= Me²/2
        // gives gap+ <= M(L+m2)²/(2λ⁴)·gap², where L = m2 is the cubic weight.
        let curv = if k == 2 { mu } else { 2.0 * m };
        let big_k = m * (2.0 * curv).powi(2) / (2.0 * lambda.powi(4));
        let mut gaps: Vec<f64> = run.iterates.iter().filter(|r| r.phase == 3).filter_map(|r| r.gap).collect();
        if let Some(g) = run.final_gap {
            if gaps.last() != Some(&g) {
                gaps.push(g);
            }
        }
        let ratios: Vec<f64> = gaps.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / (w[0] * w[0])).collect();
        let mut best_run = 0;
        let mut cur = 0;
        for r in &ratios {
            cur = if *r <= big_k { cur + 1 } else { 0 };
            best_run = best_run.max(cur);
        }
        let worst = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let pass = iters <= budget && best_run >= 3;
        ok &= pass;
        parts.push(format!(
            "k={k} iterations {iters} <= {budget}, {} quadratic steps with worst ratio {worst:.1e} <= K {big_k:.1e}",
            best_run
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_8() -> Result<(bool, String)> {
    let caps = Caps { chain_len: 128, max_iters: 512, ..Caps::default() };
    let mut cfg = sweep_config(&[2, 3], &[10.0, 30.0], 1e-11, vec![Algorithm::Gd, Algorithm::Combined, Algorithm::Crn], vec![1, 2], caps);
    let mut bytes = Vec::new();
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| hosc::Error::Io(e.to_string()))?;
        cfg.output_dir = Some(dir.path().to_path_buf());
        run_sweep(&cfg)?;
        let read = |f: &str| std::fs::read(dir.path().join(f)).map_err(|e| hosc::Error::Io(e.to_string()));
        bytes.push((read("summary.csv")?, read("records.jsonl")?));
        dirs.push(dir);
    }
    let same = bytes[0] == bytes[1];
    Ok((
        same,
        format!("summary.csv {} bytes, records.jsonl {} bytes, identical: {same}", bytes[0].0.len(), bytes[0].1.len()),
    ))
}

fn main() -> ExitCode {
    let mut solved = Vec::new();
    let c1 = outcome("minimizer accuracy", criterion_1(&mut solved));
    let lines = vec![
        c1,
        outcome("structural clauses", criterion_2(&solved)),
        outcome("smoothness and strong convexity", criterion_3()),
        outcome("adversary consistency", criterion_4()),
        outcome("lower bound respected", criterion_5()),
        outcome("exponent reproduction", criterion_6()),
        outcome("quadratic convergence", criterion_7()),
        outcome("determinism", criterion_8()),
    ];
    let mut all = true;
    for (i, l) in lines.iter().enumerate() {
        all &= l.passed;
        println!("{} criterion {} {}: {}", if l.passed { "PASS" } else { "FAIL" }, i + 1, l.name, l.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
