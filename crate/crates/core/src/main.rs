use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hosc::harness::{fit_exponent, read_records, run_sweep, ExperimentConfig, Vary};
use hosc::minimizer::{pull_back, solve_chain_minimizer};
use hosc::model::io::InstanceFile;
use hosc::model::{validate_params, Instance, InstanceParams, Regime};
use hosc::oracle::KnownOptimum;
use hosc::precision::Precision;
use hosc::solvers::{combined_solver, crn_run, gradient_descent, restarted_atd, SolverConfig};
use hosc::verify::{self, CheckReport};

#[derive(Parser)]
#[command(name = "hosc", version, about = "Worst-case chain instances, a resisting oracle and tensor methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,
    /// Output directory (duel) or file (other subcommands); stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the chain minimizer of an instance and run the bound checks.
    Minimize { instance: PathBuf },
    /// Run a sweep of algorithms against the adversary.
    Duel { config: PathBuf },
    /// Fit the log-log slope of first-success counts.
    Fit {
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = VaryArg::D)]
        vary: VaryArg,
    },
    /// Derivative, convexity, Lipschitz and bound checks on an instance.
    Verify { instance: PathBuf },
    /// Run an upper-bound solver on an instance with known optimum.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgoArg::Combined)]
        algo: AlgoArg,
        #[arg(long, default_value_t = 1e-10)]
        eps: f64,
        /// Distance bound; defaults to ‖x*‖ (the start is the origin).
        #[arg(long = "distance")]
        distance: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F64,
    Extended,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    High,
    Low,
}

#[derive(Clone, Copy, ValueEnum)]
enum VaryArg {
    #[value(name = "D")]
    D,
    MuOverLambda,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Gd,
    Atd,
    Combined,
    Crn,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F64 => Precision::F64,
            PrecisionArg::Extended => Precision::Extended,
        }
    }
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::High => Regime::High,
            RegimeArg::Low => Regime::Low,
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_params(path: &Path, regime: Option<RegimeArg>) -> Result<(InstanceParams, InstanceFile)> {
    let mut file = InstanceFile::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(r) = regime {
        file.regime = r.into();
    }
    Ok((file.params()?, file))
}

fn structure_reports(params: &InstanceParams, file: &InstanceFile) -> Result<(Vec<CheckReport>, Vec<f64>)> {
    let sol = solve_chain_minimizer(params)?;
    let basis = file.rotation_basis()?;
    let reports = verify::structure_suite(params, &sol, &basis)?;
    Ok((reports, sol.x_star))
}

/// Every report except the assumption check must pass.
fn clauses_pass(reports: &[CheckReport]) -> bool {
    reports.iter().filter(|r| r.check_name != "preconditions").all(|r| r.passed)
}

fn cmd_minimize(cli: &Cli, path: &Path) -> Result<bool> {
    let (params, file) = load_params(path, cli.regime)?;
    let (reports, x) = structure_reports(&params, &file)?;
    let out = serde_json::json!({ "x_star": x, "reports": reports });
    emit(cli.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    Ok(clauses_pass(&reports))
}

fn cmd_duel(cli: &Cli, path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing sweep config")?;
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(m) = cli.max_iters {
        cfg.caps.max_iters = m;
    }
    if let Some(r) = cli.regime {
        cfg.regime = r.into();
    }
    let records = run_sweep(&cfg)?;
    if cfg.output_dir.is_none() {
        for r in &records {
            println!("{}", serde_json::to_string(r)?);
        }
    }
    let mut ok = true;
    for r in &records {
        if let Some(e) = &r.error {
            eprintln!("{} {} seed {}: {e}", r.instance_id, r.algorithm.name(), r.seed);
            ok = false;
        } else if !r.respects_lower_bound() {
            eprintln!("{} {}: first success {:?} below lower bound {}", r.instance_id, r.algorithm.name(), r.first_success_t, r.lower_bound.t_lower);
            ok = false;
        }
    }
    Ok(ok)
}

fn cmd_fit(cli: &Cli, path: &Path, vary: VaryArg) -> Result<bool> {
    let records = read_records(path).with_context(|| format!("reading {}", path.display()))?;
    let vary = match vary {
        VaryArg::D => Vary::D,
        VaryArg::MuOverLambda => Vary::MuOverLambda,
    };
    let fit = fit_exponent(&records, vary)?;
    emit(cli.out.as_deref(), &serde_json::to_string_pretty(&fit)?)?;
    Ok(true)
}

fn cmd_verify(cli: &Cli, path: &Path) -> Result<bool> {
    let (params, file) = load_params(path, cli.regime)?;
    let (mut reports, x_chain) = structure_reports(&params, &file)?;
    let inst = Instance::new(params.clone(), file.rotation_basis()?)?;
    let sol = solve_chain_minimizer(&params)?;
    let xs = pull_back(&sol, &inst.basis)?;
    let k = params.k;
    let radius = 1.0_f64.max(hosc::numeric::norm(&xs));

    // assumptions with D = ‖x*‖ (distance from the origin start) and ε → 0
    let viol = validate_params(&params, params.regime, hosc::numeric::norm(&xs), 0.0, cli.precision.into())?;
    eprintln!("{} assumption(s) violated at D = |x*|", viol.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut oracle = inst.clone();
    let probe: Vec<f64> = xs
        .iter()
        .zip(hosc::numeric::random_gaussian(&mut rng, xs.len()))
        .map(|(a, b)| a + b)
        .collect();
    for m in 1..=k {
        reports.push(verify::fd_derivative_check(&mut oracle, &probe, m, 1e-6, cli.seed)?);
    }
    reports.push(verify::strong_convexity_check(&mut oracle, params.lambda, &xs, radius, 1000, cli.seed)?);
    reports.push(verify::lipschitz_estimate(&mut oracle, k, &xs, radius, 200, params.mu_k * (1.0 + 1e-6), cli.seed)?);
    if k >= 3 {
        let big_m = verify::estimate_m(&params, &x_chain, 20, cli.seed)?;
        let r = 0.9 * (big_m / params.mu_k).powf(1.0 / (k as f64 - 2.0)).min(1.0);
        let bound = hosc::solvers::mu2_proxy_bound(k, big_m, params.mu_k, r);
        reports.push(verify::lipschitz_estimate(&mut oracle, 2, &xs, r, 200, bound, cli.seed)?);
    }
    emit(cli.out.as_deref(), &serde_json::to_string_pretty(&reports)?)?;
    Ok(clauses_pass(&reports))
}

fn cmd_solve(cli: &Cli, path: &Path, algo: AlgoArg, eps: f64, distance: Option<f64>) -> Result<bool> {
    let (params, file) = load_params(path, cli.regime)?;
    let inst = Instance::new(params.clone(), file.rotation_basis()?)?;
    let sol = solve_chain_minimizer(&params)?;
    let xs = pull_back(&sol, &inst.basis)?;
    let f_star = inst.eval(&xs, 1)?.value;
    let big_m = verify::estimate_m(&params, &sol.x_star, 20, cli.seed)?;
    let d = distance.unwrap_or_else(|| hosc::numeric::norm(&xs));
    let mut cfg = SolverConfig::new(params.k, params.mu_k, params.lambda, d, big_m, eps);
    cfg.certificate_mode = true;
    if let Some(m) = cli.max_iters {
        cfg.max_iters = m;
    }
    let x0 = vec![0.0; params.dim];
    let mut oracle = KnownOptimum::new(inst, f_star);
    let run = match algo {
        AlgoArg::Gd => gradient_descent(&mut oracle, &x0, eps, cfg.max_iters)?,
        AlgoArg::Atd => restarted_atd(&mut oracle, &x0, &cfg)?,
        AlgoArg::Combined => {
            let (run, plan) = combined_solver(&mut oracle, &x0, &cfg)?;
            eprintln!("{}", serde_json::to_string(&plan)?);
            run
        }
        AlgoArg::Crn => {
            let m2 = if params.k == 2 { params.mu_k } else { 2.0 * big_m };
            crn_run(&mut oracle, &x0, m2, eps, cfg.max_iters, true)?
        }
    };
    emit(cli.out.as_deref(), run.to_jsonl()?.trim_end())?;
    eprintln!(
        "{} outer iterations, {} queries, final gap {:?}",
        run.outer_iterations(),
        run.queries,
        run.final_gap
    );
    Ok(run.final_gap.map_or(false, |g| g <= eps))
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Minimize { instance } => cmd_minimize(cli, instance),
        Command::Duel { config } => cmd_duel(cli, config),
        Command::Fit { records, vary } => cmd_fit(cli, records, *vary),
        Command::Verify { instance } => cmd_verify(cli, instance),
        Command::Solve { instance, algo, eps, distance } => {
            if !(*eps > 0.0) {
                bail!("--eps must be positive");
            }
            cmd_solve(cli, instance, *algo, *eps, *distance)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
