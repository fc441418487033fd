//! Resisting oracle: answers queries while choosing the hidden rotation lazily,
//! each new chain vector orthogonal to everything the algorithm has seen.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimizer::{pull_back, solve_chain_minimizer, MinimizerSolution};
use crate::model::eval::{g_bregman, ChainSpec};
use crate::model::{DerivativeBundle, Frame, InstanceParams, OrthoSpan, Regime, RotationBasis};
use crate::numeric::{factorial, norm_sq};
use crate::oracle::Oracle;

/// Extra ambient directions beyond `T̃ + max_queries`.
pub const DIM_SLACK: usize = 8;

/// What the adversary remembers about one answered query.
#[derive(Debug, Clone)]
struct QueryRecord {
    /// `⟨v_j, x⟩` for the vectors committed when the query was answered;
    /// all later vectors are orthogonal to `x`.
    proj: Vec<f64>,
    /// `‖x − Σ_j proj_j v_j‖²`.
    perp_sq: f64,
    /// Vectors committed when the response was computed.
    committed: usize,
}

/// Partially committed instance driven by the queries it receives.
#[derive(Debug, Clone)]
pub struct AdversaryState {
    params: InstanceParams,
    basis: RotationBasis,
    span: OrthoSpan,
    rng: ChaCha8Rng,
    seed: u64,
    max_queries: usize,
    keep_queries: bool,
    queries: Vec<Vec<f64>>,
    records: Vec<QueryRecord>,
    seen: HashMap<Vec<u64>, usize>,
    solution: MinimizerSolution,
    finalized: bool,
}

impl AdversaryState {
    /// `params.dim` is replaced by `T̃ + max_queries + DIM_SLACK` so that an
    /// orthogonal direction always exists.
    pub fn new(params: &InstanceParams, max_queries: usize, seed: u64) -> Result<Self> {
        let dim = params.chain_len + max_queries + DIM_SLACK;
        let params = params.with_sizes(params.chain_len, dim)?;
        let solution = solve_chain_minimizer(&params)?;
        Ok(AdversaryState {
            basis: RotationBasis::empty(params.chain_len, dim)?,
            span: OrthoSpan::new(dim),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            max_queries,
            keep_queries: true,
            queries: Vec::new(),
            records: Vec::new(),
            seen: HashMap::new(),
            solution,
            params,
            finalized: false,
        })
    }

    /// Stop storing raw query points (saves `dim` floats per query).
    /// Gaps and certificates do not need them.
    pub fn without_query_log(mut self) -> Self {
        self.keep_queries = false;
        self
    }

    pub fn params(&self) -> &InstanceParams {
        &self.params
    }

    pub fn mode(&self) -> Regime {
        self.params.regime
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn queries(&self) -> &[Vec<f64>] {
        &self.queries
    }

    pub fn answered(&self) -> usize {
        self.records.len()
    }

    pub fn basis(&self) -> &RotationBasis {
        &self.basis
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn solution(&self) -> &MinimizerSolution {
        &self.solution
    }

    /// Responds to a query at `x` with derivatives up to `order`.
    pub fn answer_query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        if self.finalized {
            return Err(Error::AlreadyFinalized);
        }
        let d = self.params.dim;
        if x.len() != d {
            return Err(Error::InvalidInput(format!(
                "query has length {}, expected {d}",
                x.len()
            )));
        }
        if !crate::numeric::all_finite(x) {
            return Err(Error::InvalidInput("query is not finite".into()));
        }
        if order == 0 || order > self.params.k {
            return Err(Error::InvalidInput(format!(
                "order must be in 1..={}",
                self.params.k
            )));
        }
        if self.records.len() >= self.max_queries {
            return Err(Error::DimensionExhausted(format!(
                "more than {} queries in dimension {d}",
                self.max_queries
            )));
        }
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let repeat = self.seen.get(&key).copied();

        self.span.add(x);
        if !self.basis.is_complete() {
            let v = self.span.draw_orthogonal(&mut self.rng, 64)?;
            self.span.push_orthonormal(v.clone());
            self.basis.commit(v)?;
        }
        // a repeated point is answered from the vectors it saw the first time,
        // which makes replies bitwise reproducible
        let committed = repeat.unwrap_or(self.basis.committed_count());
        let vectors = self.basis.vectors()[..committed].to_vec();
        let frame = Frame::Rotated(vectors);
        let proj = frame.project(x, committed.min(self.params.chain_len));
        let mut resid = x.to_vec();
        let neg: Vec<f64> = proj.iter().map(|p| -p).collect();
        frame.accumulate(&neg, &mut resid);
        let bundle = ChainSpec::rotated(&self.params).evaluate(frame, x, order);

        self.seen.entry(key).or_insert(committed);
        self.records.push(QueryRecord {
            proj,
            perp_sq: norm_sq(&resid),
            committed,
        });
        if self.keep_queries {
            self.queries.push(x.to_vec());
        }
        Ok(bundle)
    }

    /// `f(x^t) − f(x*)` for the `t`-th answered query (1-based), valid for every
    /// completion of the basis.
    pub fn true_gap(&self, t: usize) -> f64 {
        let r = &self.records[t - 1];
        let n = self.params.chain_len;
        let xs = &self.solution.x_star;
        let k = self.params.k;
        let at = |i: usize| if i < r.proj.len() { r.proj[i] } else { 0.0 };
        let mut chain = 0.0;
        let mut dist = r.perp_sq;
        for i in 0..n {
            let di = at(i) - xs[i];
            dist += di * di;
            if i + 1 < n {
                chain += g_bregman(k, at(i) - at(i + 1), xs[i] - xs[i + 1]);
            }
        }
        self.params.scale() * chain + 0.5 * self.params.lambda * dist
    }

    /// `‖x^t − x*‖`.
    pub fn distance(&self, t: usize) -> f64 {
        let r = &self.records[t - 1];
        let xs = &self.solution.x_star;
        let mut dist = r.perp_sq;
        for (i, xi) in xs.iter().enumerate() {
            let p = r.proj.get(i).copied().unwrap_or(0.0);
            dist += (p - xi) * (p - xi);
        }
        dist.sqrt()
    }

    /// `(λ/2)⟨v_t, x*⟩²`, zero once `t` exceeds the chain.
    pub fn gap_certificate(&self, t: usize) -> f64 {
        if t == 0 || t > self.params.chain_len {
            return 0.0;
        }
        let v = self.solution.x_star[t - 1];
        0.5 * self.params.lambda * v * v
    }

    /// Number of vectors that were committed when query `t` was answered.
    pub fn committed_at(&self, t: usize) -> usize {
        self.records[t - 1].committed
    }

    /// Commits the remaining vectors and returns the basis with `x*`.
    pub fn finalize(&mut self) -> Result<(RotationBasis, Vec<f64>)> {
        if self.finalized {
            return Err(Error::AlreadyFinalized);
        }
        while !self.basis.is_complete() {
            let v = self.span.draw_orthogonal(&mut self.rng, 64)?;
            self.span.push_orthonormal(v.clone());
            self.basis.commit(v)?;
        }
        self.finalized = true;
        let x = pull_back(&self.solution, &self.basis)?;
        Ok((self.basis.clone(), x))
    }
}

/// Closed-form lower bound on the number of queries needed to reach gap `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub t_lower_poly: f64,
    pub t_lower_loglog: f64,
    pub t_lower: f64,
    pub eps_admissible: bool,
    /// Low-dimensional mode: whether `(λ/2)·lb(d/10)² > ε` for the coordinate
    /// lower bound at the given parameters, i.e. whether the bound is actually
    /// certified for this instance.
    pub certified: bool,
}

/// Evaluates the lower bound for `params` at accuracy `eps`.
pub fn lower_bound(params: &InstanceParams, eps: f64, mode: Regime) -> LowerBoundReport {
    let k = params.k as f64;
    let lam = params.lambda;
    let mu = params.mu_k;
    let g = params.gamma;
    let lt = params.lambda_tilde();
    match mode {
        Regime::High => {
            let poly = g.powf((k - 1.0) / (2.0 * k)) / (12.0 * lt.sqrt());
            let ln_arg = (2.0 / (k - 1.0)) * 2f64.ln() + factorial(params.k).ln() / (k - 1.0)
                + (k + 1.0) / (2.0 * (k - 1.0)) * lam.ln()
                - mu.ln() / (k - 1.0)
                - 0.5 * eps.ln();
            let log6 = ln_arg / 6f64.ln();
            let loglog = if log6 > 0.0 { log6.ln() / k.ln() - 1.0 } else { f64::NEG_INFINITY };
            let first = (4.0 / (k - 1.0) * 2f64.ln() + 2.0 / (k - 1.0) * factorial(params.k).ln()
                + (k + 1.0) / (k - 1.0) * lam.ln()
                - 2.0 / (k - 1.0) * mu.ln())
            .exp();
            let second = lam * g.powf(2.0 / k) / 8.0;
            let admissible = eps < first && eps < second;
            let t_lower = poly.max(loglog).max(0.0);
            LowerBoundReport {
                t_lower_poly: poly,
                t_lower_loglog: loglog.max(0.0),
                t_lower,
                eps_admissible: admissible,
                certified: admissible,
            }
        }
        Regime::Low => {
            let d = params.chain_len as f64;
            let t = d / 10.0;
            let inner = 0.25 * g / (lt + (2.0 * lt * g.powf((k - 1.0) / k)).sqrt());
            let lb = (inner + (0.5 - t) * g.powf(1.0 / k)).max(0.0);
            let d_cap = 10.0 * g.powf((k - 1.0) / k)
                / (4.0 * (lt + (2.0 * lt * g.powf((k - 1.0) / k)).sqrt()))
                + 2.5;
            let admissible = eps <= g.powf(2.0 / k) * lam / 32.0 && d <= d_cap;
            LowerBoundReport {
                t_lower_poly: t,
                t_lower_loglog: 0.0,
                t_lower: t,
                eps_admissible: admissible,
                certified: 0.5 * lam * lb * lb > eps,
            }
        }
    }
}

/// One answered query of a duel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuelPoint {
    pub t: usize,
    pub gap: f64,
    pub dist: f64,
    pub certificate: f64,
}

/// Outcome of running one algorithm against the adversary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelTrace {
    pub series: Vec<DuelPoint>,
    /// First query index with gap `≤ ε`; `None` if never reached.
    pub first_success_t: Option<usize>,
    pub queries: usize,
    pub halted_by: String,
}

/// Oracle view of an adversary that enforces a query budget and, optionally,
/// halts the run once some query has reached gap `≤ ε`.
pub struct DuelOracle<'a> {
    state: &'a mut AdversaryState,
    eps: f64,
    budget: usize,
    stop_on_success: bool,
    first_success: Option<usize>,
}

impl<'a> DuelOracle<'a> {
    pub fn new(state: &'a mut AdversaryState, eps: f64, budget: usize, stop_on_success: bool) -> Self {
        DuelOracle {
            state,
            eps,
            budget,
            stop_on_success,
            first_success: None,
        }
    }

    pub fn first_success(&self) -> Option<usize> {
        self.first_success
    }
}

impl Oracle for DuelOracle<'_> {
    fn dim(&self) -> usize {
        self.state.dim()
    }

    fn order(&self) -> usize {
        self.state.params.k
    }

    fn query(&mut self, x: &[f64], order: usize) -> Result<DerivativeBundle> {
        if self.stop_on_success && self.first_success.is_some() {
            return Err(Error::Halted("target accuracy reached".into()));
        }
        if self.state.answered() >= self.budget {
            return Err(Error::BudgetExhausted(self.budget));
        }
        let b = self.state.answer_query(x, order)?;
        let t = self.state.answered();
        if self.first_success.is_none() && self.state.true_gap(t) <= self.eps {
            self.first_success = Some(t);
        }
        Ok(b)
    }

    fn last_gap(&self) -> Option<f64> {
        match self.state.answered() {
            0 => None,
            t => Some(self.state.true_gap(t)),
        }
    }
}

/// Runs `algorithm` (started from the origin) against the adversary for at
/// most `max_iters` queries and records gaps against the finalized instance.
pub fn run_duel<F>(
    state: &mut AdversaryState,
    algorithm: F,
    eps: f64,
    max_iters: usize,
    stop_on_success: bool,
) -> Result<DuelTrace>
where
    F: FnOnce(&mut dyn Oracle, &[f64]) -> Result<()>,
{
    let x0 = vec![0.0; state.dim()];
    let (outcome, first) = {
        let mut oracle = DuelOracle::new(state, eps, max_iters, stop_on_success);
        let r = algorithm(&mut oracle, &x0);
        (r, oracle.first_success())
    };
    let halted_by = match outcome {
        Ok(()) => "algorithm finished".to_string(),
        Err(Error::BudgetExhausted(n)) => format!("budget of {n} queries"),
        Err(Error::Halted(_)) => "target accuracy reached".to_string(),
        Err(e) => return Err(e),
    };
    let n = state.answered();
    let series = (1..=n)
        .map(|t| DuelPoint {
            t,
            gap: state.true_gap(t),
            dist: state.distance(t),
            certificate: state.gap_certificate(t),
        })
        .collect();
    Ok(DuelTrace {
        series,
        first_success_t: first,
        queries: n,
        halted_by,
    })
}

/// One line of the duel transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub t: usize,
    pub query: Vec<f64>,
    pub gap_certificate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_gap: Option<f64>,
}

/// Transcript lines for every logged query; `true_gap` is filled once finalized.
pub fn transcript(state: &AdversaryState) -> Vec<TranscriptLine> {
    (1..=state.answered())
        .map(|t| TranscriptLine {
            t,
            query: state.queries.get(t - 1).cloned().unwrap_or_default(),
            gap_certificate: state.gap_certificate(t),
            true_gap: state.finalized.then(|| state.true_gap(t)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::chain_constant;
    use crate::model::Instance;

    fn params() -> InstanceParams {
        InstanceParams::from_lambda_tilde(2, 1.0, chain_constant(2), 4.0, 12, 13, Regime::High).unwrap()
    }

    #[test]
    fn first_response_at_origin() {
        let mut st = AdversaryState::new(&params(), 10, 1).unwrap();
        let d = st.dim();
        let b = st.answer_query(&vec![0.0; d], 2).unwrap();
        assert_eq!(b.value, 0.0);
        let v1 = st.basis().vectors()[0].clone();
        let s = st.params().scale() * st.params().gamma;
        for (g, v) in b.gradient.iter().zip(v1.iter()) {
            assert!((g + s * v).abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_query_is_bitwise_identical() {
        let mut st = AdversaryState::new(&params(), 10, 2).unwrap();
        let d = st.dim();
        let b0 = st.answer_query(&vec![0.0; d], 2).unwrap();
        let x: Vec<f64> = b0.gradient.iter().map(|g| -0.1 * g).collect();
        let b1 = st.answer_query(&x, 2).unwrap();
        let b2 = st.answer_query(&x, 2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn finalized_instance_reproduces_responses() {
        let p = params();
        let mut st = AdversaryState::new(&p, 8, 3).unwrap();
        let d = st.dim();
        let mut x = vec![0.0; d];
        let mut responses = Vec::new();
        for _ in 0..8 {
            let b = st.answer_query(&x, 2).unwrap();
            for (xi, gi) in x.iter_mut().zip(&b.gradient) {
                *xi -= 0.05 * gi;
            }
            responses.push(b);
        }
        let (basis, xstar) = st.finalize().unwrap();
        let inst = Instance::new(st.params().clone(), basis).unwrap();
        for (q, r) in st.queries().iter().zip(&responses) {
            let full = inst.eval(q, 2).unwrap();
            assert!((full.value - r.value).abs() <= 1e-10);
            for (a, b) in full.gradient.iter().zip(&r.gradient) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
        let at_star = inst.eval(&xstar, 1).unwrap();
        assert!(crate::numeric::norm(&at_star.gradient) < 1e-9);
        for t in 1..=8 {
            let direct = inst.eval(&st.queries()[t - 1], 1).unwrap().value - inst.eval(&xstar, 1).unwrap().value;
            let g = st.true_gap(t);
            assert!((g - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            assert!(st.gap_certificate(t) <= g);
        }
        assert!(matches!(st.answer_query(&x, 1), Err(Error::AlreadyFinalized)));
    }

    #[test]
    fn zero_query_algorithm_never_succeeds() {
        let mut st = AdversaryState::new(&params(), 20, 4).unwrap();
        let trace = run_duel(
            &mut st,
            |o, x0| loop {
                o.query(x0, 1)?;
            },
            1e-6,
            20,
            true,
        )
        .unwrap();
        assert_eq!(trace.first_success_t, None);
        assert_eq!(trace.queries, 20);
        assert!(trace.series.iter().all(|p| p.gap > 0.0 && p.gap >= p.certificate));
    }

    #[test]
    fn boundary_eps_is_not_admissible() {
        let p = params();
        let r = |e| lower_bound(&p, e, Regime::High);
        let second = p.lambda * p.gamma / 8.0;
        assert!(!r(second).eps_admissible);
        assert!(r(second * 0.999).eps_admissible);
        // log-log term is defined and positive for eps well inside the region
        assert!(r(1e-12).t_lower_loglog > 0.0);
    }
}
