//! Experiment orchestration: instance construction at desk scale, duel sweeps
//! with deterministic persistence, and exponent fits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{lower_bound, run_duel, AdversaryState, DuelPoint, LowerBoundReport};
use crate::error::{Error, Result};
use crate::model::params::{chain_constant, validate_params};
use crate::model::{select_gamma, InstanceParams, Regime, Violation};
use crate::oracle::Oracle;
use crate::precision::Precision;
use crate::solvers::{combined_solver, crn_run, gradient_descent, restarted_atd, SolverConfig};

/// Solvers that can be run against the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[serde(alias = "gradient_descent")]
    Gd,
    #[serde(alias = "restarted_atd")]
    Atd,
    Combined,
    Crn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Atd => "atd",
            Algorithm::Combined => "combined",
            Algorithm::Crn => "crn",
        }
    }
}

/// One `(k, λ, μ_k, D, ε)` cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub lambda: f64,
    pub mu_k: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub eps: f64,
}

/// Size limits that keep a sweep at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub chain_len: usize,
    pub dim: usize,
    pub max_iters: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            chain_len: 1024,
            dim: 8192,
            max_iters: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sweep: Vec<SweepPoint>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub regime: Regime,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub caps: Caps,
    /// Stop each duel at the first query that reaches `ε`.
    #[serde(default = "default_true")]
    pub stop_on_success: bool,
}

fn default_true() -> bool {
    true
}

/// A sweep cell turned into concrete instance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltInstance {
    pub params: InstanceParams,
    /// Chain length the analysis asks for, before capping.
    pub required_chain_len: f64,
    /// Every violated assumption, including a shortened chain.
    pub violations: Vec<Violation>,
}

impl BuiltInstance {
    pub fn chain_truncated(&self) -> bool {
        (self.params.chain_len as f64) < self.required_chain_len
    }
}

/// High-dimensional: `γ` from [`select_gamma`], chain length
/// `min(⌈4γ/λ̃^{k/(k−1)}⌉, cap)`. Low-dimensional: `γ = 1` and
/// `d = T̃ = ⌊(μ_k D^{k−1}/(c_k λ))^{2/(3k+1)}⌋` capped likewise.
pub fn build_instance(point: &SweepPoint, regime: Regime, caps: &Caps) -> Result<BuiltInstance> {
    let SweepPoint { k, lambda, mu_k, d, eps } = *point;
    let cap = caps.chain_len.min(caps.dim.saturating_sub(1)).max(1);
    let (gamma, required, chain_len, dim) = match regime {
        Regime::High => {
            let gamma = select_gamma(k, lambda, mu_k, d)?;
            let lt = chain_constant(k) * lambda / mu_k;
            let kf = k as f64;
            let required = (4.0 * gamma / lt.powf(kf / (kf - 1.0))).ceil();
            let t = if required >= cap as f64 { cap } else { (required as usize).max(1) };
            (gamma, required, t, t + 1)
        }
        Regime::Low => {
            let kf = k as f64;
            let lt = chain_constant(k) * lambda / mu_k;
            let dd = (d.powf(kf - 1.0) / lt).powf(2.0 / (3.0 * kf + 1.0)).floor().max(1.0);
            let t = if dd >= cap as f64 { cap } else { dd as usize };
            (1.0, dd, t, t)
        }
    };
    let params = InstanceParams::new(k, lambda, mu_k, gamma, chain_len, dim, regime)?;
    let violations = validate_params(&params, regime, d, eps, Precision::F64)?;
    Ok(BuiltInstance {
        params,
        required_chain_len: required,
        violations,
    })
}

/// Outcome of one `(cell, algorithm, seed)` duel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub instance_id: String,
    pub k: usize,
    pub lambda: f64,
    pub mu_k: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub eps: f64,
    pub gamma: f64,
    pub chain_len: usize,
    pub chain_truncated: bool,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `max_{2≤j≤k}‖∇^j f(x*)‖` handed to the upper-bound solvers.
    #[serde(rename = "M")]
    pub m: f64,
    pub series: Vec<DuelPoint>,
    #[serde(rename = "first_success_T")]
    pub first_success_t: Option<usize>,
    pub queries: usize,
    pub halted_by: String,
    pub lower_bound: LowerBoundReport,
    pub violations: Vec<Violation>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    /// `first_success_T ≥ t_lower`; a run that never succeeds satisfies it.
    pub fn respects_lower_bound(&self) -> bool {
        self.first_success_t
            .map_or(true, |t| t as f64 >= self.lower_bound.t_lower)
    }
}

fn instance_id(p: &SweepPoint, regime: Regime) -> String {
    let r = match regime {
        Regime::High => "high",
        Regime::Low => "low",
    };
    format!("{r}-k{}-D{}-lambda{}-mu{}-eps{}", p.k, p.d, p.lambda, p.mu_k, p.eps)
}

fn solve_with<O: Oracle + ?Sized>(alg: Algorithm, oracle: &mut O, x0: &[f64], cfg: &SolverConfig) -> Result<()> {
    match alg {
        Algorithm::Gd => gradient_descent(oracle, x0, cfg.eps, cfg.max_iters).map(|_| ()),
        Algorithm::Atd => restarted_atd(oracle, x0, cfg).map(|_| ()),
        Algorithm::Combined => combined_solver(oracle, x0, cfg).map(|_| ()),
        Algorithm::Crn => {
            let m2 = if cfg.k == 2 { cfg.mu_k } else { 2.0 * cfg.m };
            crn_run(oracle, x0, m2, cfg.eps, cfg.max_iters, false).map(|_| ())
        }
    }
}

/// Runs one duel; sub-module failures end up in `error`.
pub fn run_cell(point: &SweepPoint, alg: Algorithm, seed: u64, config: &ExperimentConfig) -> ExperimentRecord {
    let caps = &config.caps;
    let mut rec = ExperimentRecord {
        instance_id: instance_id(point, config.regime),
        k: point.k,
        lambda: point.lambda,
        mu_k: point.mu_k,
        d: point.d,
        eps: point.eps,
        gamma: 0.0,
        chain_len: 0,
        chain_truncated: false,
        algorithm: alg,
        seed,
        m: 0.0,
        series: Vec::new(),
        first_success_t: None,
        queries: 0,
        halted_by: String::new(),
        lower_bound: LowerBoundReport {
            t_lower_poly: 0.0,
            t_lower_loglog: 0.0,
            t_lower: 0.0,
            eps_admissible: false,
            certified: false,
        },
        violations: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let built = build_instance(point, config.regime, caps)?;
        rec.gamma = built.params.gamma;
        rec.chain_len = built.params.chain_len;
        rec.chain_truncated = built.chain_truncated();
        rec.violations = built.violations.clone();
        rec.lower_bound = lower_bound(&built.params, point.eps, config.regime);
        let max_iters = caps.max_iters;
        let mut state = AdversaryState::new(&built.params, max_iters, seed)?.without_query_log();
        rec.m = crate::verify::estimate_m(state.params(), &state.solution().x_star, 20, seed)?;
        let mut cfg = SolverConfig::new(point.k, point.mu_k, point.lambda, point.d, rec.m, point.eps);
        cfg.max_iters = max_iters;
        cfg.certificate_mode = true;
        let trace = run_duel(
            &mut state,
            |o, x0| solve_with(alg, o, x0, &cfg),
            point.eps,
            max_iters,
            config.stop_on_success,
        )?;
        rec.series = trace.series;
        rec.first_success_t = trace.first_success_t;
        rec.queries = trace.queries;
        rec.halted_by = trace.halted_by;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Every `(cell, algorithm, seed)` combination, run in parallel and returned
/// in that nested order. Writes `records.jsonl` and `summary.csv` when
/// `output_dir` is set.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let mut cells = Vec::new();
    for p in &config.sweep {
        for a in &config.algorithms {
            for s in &config.seeds {
                cells.push((*p, *a, *s));
            }
        }
    }
    let records: Vec<ExperimentRecord> = cells
        .par_iter()
        .map(|(p, a, s)| run_cell(p, *a, *s, config))
        .collect();
    if let Some(dir) = &config.output_dir {
        write_outputs(&records, dir)?;
    }
    Ok(records)
}

pub const CSV_HEADER: [&str; 9] = [
    "k",
    "D",
    "lambda",
    "mu_k",
    "eps",
    "algorithm",
    "seed",
    "first_success_T",
    "lower_bound",
];

/// `records.jsonl` (one record per line) and `summary.csv` in `dir`.
/// Floats use the shortest representation that round-trips.
pub fn write_outputs(records: &[ExperimentRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut jsonl = fs::File::create(dir.join("records.jsonl"))?;
    for r in records {
        writeln!(jsonl, "{}", serde_json::to_string(r)?)?;
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.d.to_string(),
            r.lambda.to_string(),
            r.mu_k.to_string(),
            r.eps.to_string(),
            r.algorithm.name().to_string(),
            r.seed.to_string(),
            r.first_success_t.map_or(String::new(), |t| t.to_string()),
            r.lower_bound.t_lower.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_outputs`].
pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Parameter varied across records in an exponent fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vary {
    #[serde(rename = "D")]
    D,
    #[serde(rename = "mu_over_lambda")]
    MuOverLambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares on `(ln varied, ln first_success_T)`. Runs that never
/// succeeded are left out; fewer than four remaining points is an error.
pub fn fit_exponent(records: &[ExperimentRecord], vary: Vary) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| {
            let x = match vary {
                Vary::D => r.d,
                Vary::MuOverLambda => r.mu_k / r.lambda,
            };
            r.first_success_t.map(|t| (x.ln(), (t as f64).ln()))
        })
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs at least 4 successful runs, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("varied parameter takes a single value".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExponentFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: pts.len(),
    })
}
