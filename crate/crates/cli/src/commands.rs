use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lowrank_sdp::baselines::{fw_init, pgd_maxcut, rank_r_truncate, FwConfig};
use lowrank_sdp::diagnostics::{
    check_factor_bound, check_overspec_bound, estimate_growth, kkt_residual, regularity_ratios,
    GrowthConfig, RegularityConfig,
};
use lowrank_sdp::generate::{generate, Family, GenSpec};
use lowrank_sdp::linalg::{padded_procrustes_distance, Factor};
use lowrank_sdp::problem::{phi_f_grad, phi_value_lambda};
use lowrank_sdp::prox_linear::random_init;
use lowrank_sdp::{prox_linear_solve, Instance, Objective, SolveConfig, SolveStatus, TraceRecord};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io::{load_factor, load_instance, save_factor, save_instance, write_text};
use crate::manifest::{manifest_path, RunManifest};
use crate::trace::{trace_to_csv, trace_to_csv_with_method};

/// Environment variable capping the `compare` worker pool.
pub const THREADS_ENV: &str = "LOWRANK_SDP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lowrank-sdp", version, about = "Low-rank SDP solver via factorization and an exact penalty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted instance.
    Gen(GenArgs),
    /// Run the prox-linear solver and write its trace.
    Solve(SolveArgs),
    /// Run a baseline method.
    Baseline(BaselineArgs),
    /// Check geometric properties around the certificate.
    Verify(VerifyArgs),
    /// Solve at several ranks in parallel.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Maxcut,
    Z2sync,
    Quadratics,
    Sensing,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Signal strength for z2sync.
    #[arg(long, default_value_t = 1.0)]
    pub snr: f64,
    /// Number of constraints for quadratics.
    #[arg(long)]
    pub k: Option<usize>,
    /// Eigenvalue of the planted dual slack for quadratics.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_z: f64,
    /// Number of measurements for sensing.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Fw,
}

#[derive(Debug, Args, Clone)]
pub struct SolverOpts {
    /// Penalty weight; defaults to 2 ||y*|| + 1 when the instance has a certificate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Stepsize; defaults to 1 / lambda.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub grad_map_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Trace bound for the Frank-Wolfe initializer; defaults to n.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub rank: usize,
    #[command(flatten)]
    pub opts: SolverOpts,
    /// Also write the final factor as JSON.
    #[arg(long)]
    pub factor_out: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pgd,
    FwInit,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    /// Stepsize for pgd.
    #[arg(long, default_value_t = 0.05)]
    pub t: f64,
    /// Iterations for pgd.
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Augmented Lagrangian parameter for fw-init; defaults to the solver penalty.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub fw_iters: Option<usize>,
    /// Also write the final (or truncated) factor as JSON.
    #[arg(long)]
    pub factor_out: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Comma-separated subset of growth, regularity, bounds, kkt.
    #[arg(long, value_delimiter = ',', default_value = "growth,regularity,bounds,kkt")]
    pub checks: Vec<String>,
    /// Sampling rank; defaults to the certificate rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Factor at which to evaluate the KKT residuals (defaults to R*).
    #[arg(long)]
    pub factor: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub ranks: Vec<usize>,
    #[command(flatten)]
    pub opts: SolverOpts,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn cmd_gen(a: &GenArgs) -> CliResult<()> {
    let family = match a.family {
        FamilyArg::Maxcut => Family::MaxCutPlanted,
        FamilyArg::Z2sync => Family::Z2Sync { snr: a.snr },
        FamilyArg::Quadratics => Family::RandomQuadratics {
            k: a.k.ok_or_else(|| CliError::Input("--k is required for quadratics".into()))?,
            lambda_z: a.lambda_z,
        },
        FamilyArg::Sensing => Family::MatrixSensing {
            samples: a
                .samples
                .ok_or_else(|| CliError::Input("--samples is required for sensing".into()))?,
        },
    };
    let spec = GenSpec {
        family: family.clone(),
        n: a.n,
        r_star: a.rank,
        seed: a.seed,
    };
    let generated = generate(&spec)?;
    save_instance(&generated.instance, &a.output)?;
    let mut manifest = RunManifest::new("gen")
        .param("family", family.name())
        .param("n", a.n)
        .param("rank", a.rank)
        .output(&a.output);
    match family {
        Family::Z2Sync { snr } => manifest = manifest.param("snr", snr),
        Family::RandomQuadratics { k, lambda_z } => manifest = manifest.param("k", k).param("lambda_z", lambda_z),
        Family::MatrixSensing { samples } => manifest = manifest.param("samples", samples),
        Family::MaxCutPlanted => {}
    }
    if let Some(signs) = generated.planted_signs {
        let path = a.output.with_extension("signs.json");
        write_text(&path, &format!("{}\n", json!(signs)))?;
        manifest = manifest.output(&path);
    }
    manifest.seed = Some(a.seed);
    manifest.save(&manifest_path(&a.output))
}

fn resolve_lambda(inst: &Instance, lambda: Option<f64>) -> CliResult<f64> {
    match (lambda, &inst.certificate) {
        (Some(l), _) => Ok(l),
        (None, Some(c)) => Ok(2.0 * c.y_star.norm() + 1.0),
        (None, None) => Err(CliError::Input(
            "--lambda is required for instances without a certificate".into(),
        )),
    }
}

fn solver_config(inst: &Instance, opts: &SolverOpts) -> CliResult<SolveConfig> {
    let lambda = resolve_lambda(inst, opts.lambda)?;
    let mut cfg = SolveConfig::new(lambda);
    if let Some(t) = opts.t {
        cfg.t = t;
    }
    cfg.max_outer = opts.max_outer;
    cfg.grad_map_tol = opts.grad_map_tol;
    cfg.validate()?;
    Ok(cfg)
}

fn initial_factor(inst: &Instance, rank: usize, opts: &SolverOpts, lambda: f64) -> CliResult<Factor> {
    if rank == 0 || rank > inst.n {
        return Err(CliError::Input(format!("--rank must lie in 1..={}", inst.n)));
    }
    match opts.init {
        InitArg::Random => Ok(random_init(inst.n, rank, opts.seed)?),
        InitArg::Fw => {
            let alpha = opts.alpha.unwrap_or(inst.n as f64);
            let out = fw_init(inst, &FwConfig::new(alpha, lambda))?;
            Ok(rank_r_truncate(&out.x, rank)?)
        }
    }
}

fn solver_manifest(cmd: &str, cfg: &SolveConfig, opts: &SolverOpts) -> RunManifest {
    let mut m = RunManifest::new(cmd)
        .param("lambda", cfg.lambda)
        .param("t", cfg.t)
        .param("max_outer", cfg.max_outer)
        .param("grad_map_tol", cfg.grad_map_tol)
        .param("init", format!("{:?}", opts.init).to_lowercase());
    if let Some(a) = opts.alpha {
        m = m.param("alpha", a);
    }
    m.seed = Some(opts.seed);
    m
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Stalled => "stalled",
    }
}

fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let cfg = solver_config(&inst, &a.opts)?;
    let r0 = initial_factor(&inst, a.rank, &a.opts, cfg.lambda)?;
    let out = prox_linear_solve(&inst, &r0, &cfg)?;
    trace_to_csv(&out.trace, &a.output)?;
    let mut manifest = solver_manifest("solve", &cfg, &a.opts)
        .param("rank", a.rank)
        .param("status", status_name(out.status))
        .input(&a.instance)
        .output(&a.output);
    if let Some(p) = &a.factor_out {
        save_factor(&out.r, p)?;
        manifest = manifest.output(p);
    }
    manifest.save(&manifest_path(&a.output))?;
    if out.status == SolveStatus::Stalled {
        return Err(CliError::Stalled(format!(
            "no descent after {} stepsize halvings (t = {:e})",
            out.halvings, out.t_final
        )));
    }
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let start = Instant::now();
    let star = inst.certificate.as_ref().map(|c| c.r_star.clone());
    let manifest;
    let (trace, factor, method) = match a.method {
        MethodArg::Pgd => {
            let r0 = random_init(inst.n, a.rank, a.seed)?;
            let out = pgd_maxcut(&inst, &r0, a.t, a.iters)?;
            let trace: Vec<TraceRecord> = out
                .trace
                .iter()
                .map(|rec| TraceRecord {
                    iter: rec.iter,
                    phi: rec.objective,
                    f_val: rec.objective,
                    feas: rec.feas,
                    grad_map_norm: f64::NAN,
                    dist_to_solution: None,
                    inner_iters: 0,
                    wall_time: f64::NAN,
                })
                .collect();
            let mut trace = trace;
            if let (Some(s), Some(last)) = (&star, trace.last_mut()) {
                last.dist_to_solution = Some(padded_procrustes_distance(&out.r, s)?);
            }
            if let Some(last) = trace.last_mut() {
                last.wall_time = start.elapsed().as_secs_f64();
            }
            let mut m = RunManifest::new("baseline")
                .param("method", "pgd")
                .param("rank", a.rank)
                .param("t", a.t)
                .param("iters", a.iters);
            m.seed = Some(a.seed);
            manifest = m;
            (trace, out.r, "pgd")
        }
        MethodArg::FwInit => {
            let lambda = resolve_lambda(&inst, a.rho)?;
            let alpha = a.alpha.unwrap_or(inst.n as f64);
            let mut cfg = FwConfig::new(alpha, lambda);
            if let Some(r) = a.rounds {
                cfg.outer_rounds = r;
            }
            if let Some(i) = a.fw_iters {
                cfg.inner_fw_iters = i;
            }
            let out = fw_init(&inst, &cfg)?;
            let trace = out
                .rounds
                .iter()
                .map(|rd| TraceRecord {
                    iter: rd.round,
                    phi: rd.objective + lambda * rd.feas,
                    f_val: rd.objective,
                    feas: rd.feas,
                    grad_map_norm: f64::NAN,
                    dist_to_solution: None,
                    inner_iters: cfg.inner_fw_iters,
                    wall_time: f64::NAN,
                })
                .collect();
            let r = rank_r_truncate(&out.x, a.rank)?;
            manifest = RunManifest::new("baseline")
                .param("method", "fw-init")
                .param("rank", a.rank)
                .param("rho", cfg.rho)
                .param("alpha", cfg.alpha_trace)
                .param("rounds", cfg.outer_rounds)
                .param("fw_iters", cfg.inner_fw_iters);
            (trace, r, "fw-init")
        }
    };
    trace_to_csv_with_method(&trace, method, &a.output)?;
    let mut manifest = manifest.input(&a.instance).output(&a.output);
    if let Some(p) = &a.factor_out {
        save_factor(&factor, p)?;
        manifest = manifest.output(p);
    }
    manifest.save(&manifest_path(&a.output))
}

/// Relative tolerance on KKT residuals for `verify`.
const KKT_TOL: f64 = 1e-6;
/// Bound on the norm-convexity ratio asserted by `verify`.
const NORM_CONVEXITY_LIMIT: f64 = 10.0;

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let known = ["growth", "regularity", "bounds", "kkt"];
    if let Some(bad) = a.checks.iter().find(|c| !known.contains(&c.as_str())) {
        return Err(CliError::Input(format!("unknown check `{bad}`")));
    }
    let needs_cert = a.checks.iter().any(|c| c != "kkt") || a.factor.is_none();
    let cert = match (&inst.certificate, needs_cert) {
        (Some(c), _) => Some(c.clone()),
        (None, false) => None,
        (None, true) => return Err(CliError::Input("verify needs an instance with a certificate".into())),
    };
    let rank = a.rank.or(cert.as_ref().map(|c| c.rank)).unwrap_or(1);
    let linear = matches!(inst.objective, Objective::Linear(_));
    let exact_rank = cert.as_ref().is_some_and(|c| c.rank == rank);
    let mut report = serde_json::Map::new();
    let mut failures = Vec::new();

    for check in &a.checks {
        let entry = match check.as_str() {
            "growth" => {
                let c = cert.as_ref().expect("certificate checked above");
                let g = estimate_growth(&inst, c, &GrowthConfig::new(rank, a.samples, a.seed))?;
                let asserted = exact_rank || linear;
                let passed = !asserted || (1.8..=2.2).contains(&g.fitted_order);
                json!({
                    "fitted_order": g.fitted_order,
                    "fitted_constant": g.fitted_constant,
                    "sample_count": g.sample_count,
                    "dropped": g.dropped,
                    "radius_range": [g.radius_range.0, g.radius_range.1],
                    "asserted": asserted,
                    "passed": passed,
                })
            }
            "regularity" => {
                let c = cert.as_ref().expect("certificate checked above");
                let mut cfg = RegularityConfig::for_certificate(c, a.samples, a.seed);
                cfg.rank = rank;
                let r = regularity_ratios(&inst, c, &cfg)?;
                let asserted = exact_rank || linear;
                let passed = !asserted || r.max_norm_convexity_ratio <= NORM_CONVEXITY_LIMIT;
                json!({
                    "max_norm_convexity_ratio": r.max_norm_convexity_ratio,
                    "max_subreg_ratio": r.max_subreg_ratio,
                    "feasible_samples": r.feasible_samples,
                    "infeasible_samples": r.infeasible_samples,
                    "skipped": r.skipped,
                    "lambda": cfg.lambda,
                    "asserted": asserted,
                    "passed": passed,
                })
            }
            "bounds" => {
                let c = cert.as_ref().expect("certificate checked above");
                bounds_report(&c.r_star, a.samples, a.seed)?
            }
            "kkt" => {
                let r = match &a.factor {
                    Some(p) => load_factor(p)?,
                    None => cert.as_ref().expect("certificate checked above").r_star.clone(),
                };
                let k = kkt_residual(&inst, &r)?;
                let b_scale = 1.0 + inst.constraints.b().norm();
                let g_scale = 1.0 + phi_f_grad(&inst, &r)?.frobenius_norm();
                let passed = k.primal_res <= KKT_TOL * b_scale && k.stat_res <= KKT_TOL * g_scale;
                json!({
                    "primal_res": k.primal_res,
                    "stat_res": k.stat_res,
                    "y_fit": k.y_fit.as_slice(),
                    "phi": phi_value_lambda(&inst, &r, resolve_lambda(&inst, None).unwrap_or(0.0))?.phi,
                    "passed": passed,
                })
            }
            _ => unreachable!("validated above"),
        };
        if entry["passed"] == Value::Bool(false) {
            failures.push(check.clone());
        }
        report.insert(check.clone(), entry);
    }
    let passed = failures.is_empty();
    let root = json!({
        "instance": inst.name,
        "rank": rank,
        "checks": Value::Object(report),
        "passed": passed,
    });
    write_text(&a.output, &format!("{}\n", serde_json::to_string_pretty(&root).expect("json")))?;
    let mut manifest = RunManifest::new("verify")
        .param("checks", a.checks.join(","))
        .param("rank", rank)
        .param("samples", a.samples)
        .input(&a.instance)
        .output(&a.output);
    if let Some(p) = &a.factor {
        manifest = manifest.input(p);
    }
    manifest.seed = Some(a.seed);
    manifest.save(&manifest_path(&a.output))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Diagnostics(format!("failed checks: {}", failures.join(", "))))
    }
}

/// Factorization bounds on random perturbations of `R*` and of `[R*, 0]`.
fn bounds_report(r_star: &Factor, samples: usize, seed: u64) -> CliResult<Value> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (n, r) = r_star.shape();
    let scale = r_star.frobenius_norm();
    let mut factor_viol = 0;
    let mut overspec_viol = 0;
    let padded = r_star.pad_columns(r + 1);
    for i in 0..samples {
        let mag = scale * 10f64.powf(-3.0 + 3.0 * i as f64 / samples.max(1) as f64);
        let d = DMatrix::from_fn(n, r, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let d: DMatrix<f64> = &d / d.norm() * mag;
        let u = Factor::new(r_star.as_matrix() + d)?;
        if !check_factor_bound(&u, r_star)?.holds {
            factor_viol += 1;
        }
        let e = DMatrix::from_fn(n, r + 1, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let e: DMatrix<f64> = &e / e.norm() * mag;
        let v = Factor::new(padded.as_matrix() + e)?;
        if !check_overspec_bound(&v, &padded)?.holds {
            overspec_viol += 1;
        }
    }
    Ok(json!({
        "samples": samples,
        "factor_bound_violations": factor_viol,
        "overspec_bound_violations": overspec_viol,
        "passed": factor_viol == 0 && overspec_viol == 0,
    }))
}

/// Worker count: `LOWRANK_SDP_THREADS` if set, else the available parallelism,
/// never more than `jobs`.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&x| x > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|x| x.get()).unwrap_or(1));
    cap.min(jobs).max(1)
}

fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let cfg = solver_config(&inst, &a.opts)?;
    if a.ranks.is_empty() {
        return Err(CliError::Input("--ranks is empty".into()));
    }
    let inits = a
        .ranks
        .iter()
        .map(|&r| initial_factor(&inst, r, &a.opts, cfg.lambda))
        .collect::<CliResult<Vec<_>>>()?;
    std::fs::create_dir_all(&a.output).map_err(|e| CliError::io(&a.output, e))?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<Value>>>> = Mutex::new((0..a.ranks.len()).map(|_| None).collect());
    let workers = worker_count(a.ranks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= a.ranks.len() {
                    break;
                }
                let res = compare_one(&inst, &inits[i], a.ranks[i], &cfg, &a.output);
                results.lock().expect("no poisoned workers")[i] = Some(res);
            });
        }
    });

    let mut summary = Vec::new();
    let mut stalled = Vec::new();
    for (i, res) in results.into_inner().expect("no poisoned workers").into_iter().enumerate() {
        let v = res.expect("every job ran")?;
        if v["status"] == "stalled" {
            stalled.push(a.ranks[i]);
        }
        summary.push(v);
    }
    let summary_path = a.output.join("summary.json");
    write_text(&summary_path, &format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")))?;
    let mut manifest = solver_manifest("compare", &cfg, &a.opts)
        .param("ranks", a.ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","))
        .param("workers", workers)
        .input(&a.instance)
        .output(&summary_path);
    for &r in &a.ranks {
        manifest = manifest.output(&trace_path(&a.output, r));
    }
    manifest.save(&a.output.join("manifest.json"))?;
    if !stalled.is_empty() {
        return Err(CliError::Stalled(format!("ranks {stalled:?}")));
    }
    Ok(())
}

fn trace_path(dir: &Path, rank: usize) -> PathBuf {
    dir.join(format!("trace_r{rank}.csv"))
}

fn compare_one(inst: &Instance, r0: &Factor, rank: usize, cfg: &SolveConfig, dir: &Path) -> CliResult<Value> {
    let out = prox_linear_solve(inst, r0, cfg)?;
    trace_to_csv(&out.trace, &trace_path(dir, rank))?;
    save_factor(&out.r, &dir.join(format!("factor_r{rank}.json")))?;
    let last = out.trace.last().expect("trace has the initial record");
    let gap = inst.optimal_value().map(|v| last.phi - v);
    Ok(json!({
        "rank": rank,
        "status": status_name(out.status),
        "iterations": last.iter,
        "phi": last.phi,
        "feas": last.feas,
        "grad_map_norm": last.grad_map_norm,
        "gap": gap,
        "dist_to_solution": last.dist_to_solution,
    }))
}
