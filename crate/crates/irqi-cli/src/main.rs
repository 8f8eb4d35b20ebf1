//! Command-line front end: run solves and experiment sweeps, verify
//! theorem reports against cached spectral references, and reproduce
//! the experiment tables and figure data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use irqi_core::diagnostics::{self, ConvergenceTrace, TheoremEntry};
use irqi_core::oracle::{self, SpectralReference};
use irqi_core::precond::{self, BasePreconditioner, FillPolicy};
use irqi_core::rqi::{self, InitialVector, InnerSolver, RunConfig, Termination, ToleranceStrategy};
use irqi_core::sparse::{load_matrix_market, SymmetricSparseMatrix};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "irqi",
    version,
    about = "Inexact Rayleigh quotient iteration with Lanczos inner solvers",
    long_about = "Sparse symmetric eigensolver driven by inexact Rayleigh quotient iteration, \
with unpreconditioned and tuned-preconditioned Lanczos inner solvers plus a diagnostics \
harness for the convergence bounds.\n\nMatrices are read in Matrix Market coordinate \
format only; convert Harwell-Boeing originals externally (e.g. with standard mtx tools)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and cache the spectral reference (target eigenpair, gap,
    /// spread, beta) for a matrix.
    Spectrum(SpectrumArgs),
    /// Run one solve and write its table, trace and theorem report.
    Solve(SolveArgs),
    /// Run a sweep of strategies sharing one starting vector; writes
    /// per-strategy tables, figure data and an aggregated report.
    Experiment(ExperimentArgs),
    /// Re-check the convergence theorems on saved trace files.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Matrix Market file
    #[arg(long)]
    matrix: PathBuf,
    /// Target shift; omit to target the smallest eigenpair
    #[arg(long)]
    sigma: Option<f64>,
    /// Reference cache directory (also IRQI_CACHE_DIR)
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Matrix Market file
    #[arg(long)]
    matrix: PathBuf,
    /// Target shift; omit to target the smallest eigenpair
    #[arg(long)]
    sigma: Option<f64>,
    /// Outer stopping tolerance: stop when ||r|| <= ||A||_1 * tol
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    /// Maximum outer iterations
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    /// RNG seed for the starting vector
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting vector: 'perturbed' (reference eigenvector plus random
    /// perturbation of angle sine --sin-phi0) or 'random'
    #[arg(long, default_value = "perturbed")]
    start: String,
    /// Angle sine of the starting perturbation
    #[arg(long, default_value_t = 0.1)]
    sin_phi0: f64,
    /// Inner step cap for tolerance-driven strategies (default 1.5n)
    #[arg(long)]
    inner_cap: Option<usize>,
    /// Preconditioner: 'none' or 'tuned'
    #[arg(long, default_value = "none")]
    precond: String,
    /// Base factorization sparsity for --precond tuned: 'ic0' or 'full'
    #[arg(long, default_value = "ic0")]
    fill: String,
    /// Output directory
    #[arg(long, default_value = "irqi-out")]
    out: PathBuf,
    /// Reference cache directory (also IRQI_CACHE_DIR)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Hypothesis constant for the solution-norm bound check
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Strategy: exact | fixed-xi:<v> | decreasing | steps:<m>
    #[arg(long)]
    strategy: String,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated strategies, e.g. 'exact,fixed-xi:1,steps:30'
    #[arg(long)]
    strategies: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Spectral reference JSON (from `irqi spectrum`)
    #[arg(long)]
    reference: PathBuf,
    /// Trace JSON files (from `irqi solve` / `irqi experiment`)
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Hypothesis constant for the solution-norm bound check
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("irqi: error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// FNV-1a hash of the canonical parameter string; stamped into every
/// output file so artifacts can be traced back to their invocation.
fn spec_hash(parts: &[String]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

fn file_header(hash: &str) -> String {
    format!("# irqi {VERSION}\n# spec-hash {hash}\n")
}

fn cache_dir(explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .or_else(|| std::env::var_os("IRQI_CACHE_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("irqi-cache"))
}

fn matrix_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn reference_cache_path(dir: &Path, matrix: &Path, sigma_mode: &Option<f64>) -> PathBuf {
    let sigma_tag = match sigma_mode {
        Some(s) => format!("sigma-{:x}", s.to_bits()),
        None => "smallest".into(),
    };
    dir.join(format!("{}-{}.ref.json", matrix_id(matrix), sigma_tag))
}

/// Loads the cached reference when it matches the matrix; recomputes
/// and rewrites the cache otherwise. Returns None when the matrix
/// exceeds the densification cap and no valid cache exists.
fn obtain_reference(
    a: &SymmetricSparseMatrix,
    matrix: &Path,
    sigma_mode: &Option<f64>,
    cache: &Path,
) -> Result<Option<SpectralReference>> {
    let path = reference_cache_path(cache, matrix, sigma_mode);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(reference) = serde_json::from_str::<SpectralReference>(&text) {
            let scale = reference.a_one_norm.max(a.one_norm());
            if reference.n == a.n() && (reference.a_one_norm - a.one_norm()).abs() <= 1e-10 * scale
            {
                return Ok(Some(reference));
            }
            eprintln!(
                "irqi: cached reference {} does not match the matrix; recomputing",
                path.display()
            );
        }
    }
    let sigma = sigma_mode.unwrap_or_else(|| oracle::default_smallest_sigma(a));
    match oracle::spectral_reference(a, sigma) {
        Ok(reference) => {
            fs::create_dir_all(cache)?;
            fs::write(&path, serde_json::to_string(&reference)?)
                .with_context(|| format!("writing {}", path.display()))?;
            Ok(Some(reference))
        }
        Err(irqi_core::error::OracleError::CapExceeded { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<ExitCode> {
    let a = load_matrix_market(&args.matrix)
        .with_context(|| format!("loading {}", args.matrix.display()))?;
    let cache = cache_dir(&args.cache);
    let reference = obtain_reference(&a, &args.matrix, &args.sigma, &cache)?.ok_or_else(|| {
        anyhow!(
            "order {} exceeds the densification cap; supply a reference externally",
            a.n()
        )
    })?;
    println!("matrix     : {} (n = {})", matrix_id(&args.matrix), a.n());
    println!("sigma      : {:e}", reference.sigma);
    println!("lambda     : {:e}", reference.lambda);
    println!("lambda2    : {:e}", reference.lambda2);
    println!("lambda_min : {:e}", reference.lambda_min);
    println!("lambda_max : {:e}", reference.lambda_max);
    println!("gap        : {:e}", reference.gap());
    println!("spread     : {:e}", reference.spread());
    println!("beta       : {:.4}", reference.beta);
    println!(
        "cached     : {}",
        reference_cache_path(&cache, &args.matrix, &args.sigma).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_strategy(text: &str, inner_cap: usize) -> Result<ToleranceStrategy> {
    let strategy = if text == "exact" {
        ToleranceStrategy::Exact
    } else if text == "decreasing" {
        ToleranceStrategy::Decreasing { m_max: inner_cap }
    } else if let Some(v) = text.strip_prefix("fixed-xi:") {
        ToleranceStrategy::FixedXi {
            xi: v.parse().with_context(|| format!("bad xi in '{text}'"))?,
            m_max: inner_cap,
        }
    } else if let Some(m) = text.strip_prefix("steps:") {
        ToleranceStrategy::FixedSteps(
            m.parse()
                .with_context(|| format!("bad step count in '{text}'"))?,
        )
    } else {
        bail!("unknown strategy '{text}' (use exact | fixed-xi:<v> | decreasing | steps:<m>)");
    };
    strategy.validate()?;
    Ok(strategy)
}

struct Prepared {
    a: SymmetricSparseMatrix,
    reference: Option<SpectralReference>,
    base: Option<BasePreconditioner>,
    config: RunConfig,
    hash: String,
}

fn prepare(args: &RunArgs, strategies_label: &str) -> Result<Prepared> {
    let a = load_matrix_market(&args.matrix)
        .with_context(|| format!("loading {}", args.matrix.display()))?;
    let cache = cache_dir(&args.cache);
    let reference = obtain_reference(&a, &args.matrix, &args.sigma, &cache)?;

    let initial = match args.start.as_str() {
        "perturbed" => {
            if reference.is_none() {
                bail!(
                    "a spectral reference is required for --start perturbed; \
                     use --start random or supply a cache for large matrices"
                );
            }
            InitialVector::PerturbedReference {
                sin_phi0: args.sin_phi0,
            }
        }
        "random" => InitialVector::Random,
        other => bail!("unknown start mode '{other}' (use perturbed | random)"),
    };
    let base = match args.precond.as_str() {
        "none" => None,
        "tuned" => {
            let fill = match args.fill.as_str() {
                "ic0" => FillPolicy::Ic0,
                "full" => FillPolicy::Full,
                other => bail!("unknown fill policy '{other}' (use ic0 | full)"),
            };
            let sigma = args
                .sigma
                .unwrap_or_else(|| oracle::default_smallest_sigma(&a));
            Some(precond::build_base(&a, sigma, fill)?)
        }
        other => bail!("unknown preconditioner '{other}' (use none | tuned)"),
    };
    let config = RunConfig {
        tol: args.tol,
        max_outer: args.max_outer,
        seed: args.seed,
        initial,
    };
    let hash = spec_hash(&[
        args.matrix.display().to_string(),
        format!("{:?}", args.sigma.map(f64::to_bits)),
        format!("{:e}", args.tol),
        args.max_outer.to_string(),
        args.seed.to_string(),
        args.start.clone(),
        format!("{:e}", args.sin_phi0),
        format!("{:?}", args.inner_cap),
        args.precond.clone(),
        args.fill.clone(),
        strategies_label.to_string(),
    ]);
    Ok(Prepared {
        a,
        reference,
        base,
        config,
        hash,
    })
}

struct RunOutputs {
    label: String,
    trace: ConvergenceTrace,
    termination: Termination,
    table_path: PathBuf,
    trace_path: PathBuf,
}

fn execute_run(
    prep: &Prepared,
    strategy: &ToleranceStrategy,
    args: &RunArgs,
    alpha: f64,
) -> Result<RunOutputs> {
    let solver = match &prep.base {
        Some(base) => InnerSolver::Tuned(base),
        None => InnerSolver::Plain,
    };
    let mut raw = rqi::run(
        &prep.a,
        &prep.config,
        strategy,
        &solver,
        prep.reference.as_ref(),
    )?;
    raw.meta.matrix_id = matrix_id(&args.matrix);
    let mut trace = match &prep.reference {
        Some(reference) => diagnostics::measure(&raw, reference)?,
        None => diagnostics::scalarize_without_reference(&raw),
    };
    if let Some(reference) = &prep.reference {
        let entries = diagnostics::verify_trace(&trace, reference, alpha);
        trace.theorems.extend(entries);
    }

    let label = format!(
        "{}-{}{}",
        trace.meta.matrix_id,
        strategy.label().replace(':', "_"),
        if prep.base.is_some() { "-tuned" } else { "" }
    );
    fs::create_dir_all(&args.out)?;
    let table_path = args.out.join(format!("{label}-table.csv"));
    let table = diagnostics::emit_table(&trace);
    fs::write(
        &table_path,
        format!("{}{}", file_header(&prep.hash), table.to_csv()),
    )?;
    let trace_path = args.out.join(format!("{label}-trace.json"));
    let mut doc = serde_json::to_value(&trace)?;
    doc.as_object_mut().unwrap().insert(
        "artifact".into(),
        serde_json::json!({ "version": VERSION, "spec_hash": prep.hash }),
    );
    fs::write(&trace_path, serde_json::to_string_pretty(&doc)?)?;
    Ok(RunOutputs {
        label,
        termination: trace.meta.termination,
        trace,
        table_path,
        trace_path,
    })
}

fn render_report(traces: &[&ConvergenceTrace]) -> String {
    let mut out = String::new();
    for trace in traces {
        out.push_str(&format!(
            "run {} [{}{}] seed {} tol {:e}: {:?}, {} outer steps, {} inner steps\n",
            trace.meta.matrix_id,
            trace.meta.strategy,
            if trace.meta.precond == "tuned" {
                "+tuned"
            } else {
                ""
            },
            trace.meta.seed,
            trace.meta.tol,
            trace.meta.termination,
            trace.steps.len().saturating_sub(1),
            trace.meta.cumulative_inner,
        ));
        for entry in &trace.theorems {
            out.push_str(&format!("  {}\n", render_entry(entry)));
        }
    }
    out
}

fn render_entry(entry: &TheoremEntry) -> String {
    let status = if entry.checked_steps == 0 {
        "SKIP".to_string()
    } else if entry.passed {
        "pass".to_string()
    } else {
        "FAIL".to_string()
    };
    let kind = if entry.exact_arithmetic {
        "exact"
    } else {
        "asymptotic"
    };
    let worst = match (entry.worst_margin, entry.worst_step) {
        (Some(m), Some(k)) => format!("worst margin {m:.3e} at k={k}"),
        _ => "no steps checked".to_string(),
    };
    format!(
        "{status:4} {:34} [{kind}] checked {} skipped {} — {worst}",
        entry.name, entry.checked_steps, entry.skipped_steps
    )
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let inner_cap = |n: usize| args.run.inner_cap.unwrap_or(3 * n / 2);
    let prep = prepare(&args.run, &args.strategy)?;
    let strategy = parse_strategy(&args.strategy, inner_cap(prep.a.n()))?;
    let outputs = execute_run(&prep, &strategy, &args.run, args.run.alpha)?;
    println!("{}", render_report(&[&outputs.trace]));
    println!("table : {}", outputs.table_path.display());
    println!("trace : {}", outputs.trace_path.display());
    Ok(match outputs.termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::MaxOuterReached => ExitCode::from(2),
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let labels: Vec<String> = args
        .strategies
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if labels.is_empty() {
        bail!("no strategies given; pass e.g. --strategies exact,fixed-xi:1,steps:30");
    }
    let prep = prepare(&args.run, &args.strategies)?;
    let n = prep.a.n();
    let inner_cap = args.run.inner_cap.unwrap_or(3 * n / 2);
    let strategies: Vec<ToleranceStrategy> = labels
        .iter()
        .map(|label| parse_strategy(label, inner_cap))
        .collect::<Result<_>>()?;

    // Sub-runs share the matrix, reference and starting vector; each
    // writes its own uniquely named files, so they can run concurrently.
    let results: Vec<(String, Result<RunOutputs>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter()
            .zip(&labels)
            .map(|(strategy, label)| {
                let prep = &prep;
                let run_args = &args.run;
                let handle =
                    scope.spawn(move || execute_run(prep, strategy, run_args, run_args.alpha));
                (label.clone(), handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(label, handle)| {
                let result = handle
                    .join()
                    .unwrap_or_else(|_| Err(anyhow!("sub-run panicked")));
                (label, result)
            })
            .collect()
    });

    let mut completed = Vec::new();
    let mut failed = Vec::new();
    for (label, result) in results {
        match result {
            Ok(outputs) => completed.push(outputs),
            Err(err) => failed.push((label, format!("{err:#}"))),
        }
    }

    let traces: Vec<&ConvergenceTrace> = completed.iter().map(|o| &o.trace).collect();
    let figure = diagnostics::emit_figure_data(&traces);
    let header = file_header(&prep.hash);
    fs::create_dir_all(&args.run.out)?;
    let fig_xi = args.run.out.join("figure-xi.csv");
    fs::write(&fig_xi, format!("{header}{}", figure.xi_csv()))?;
    let fig_angle = args.run.out.join("figure-angles.csv");
    fs::write(&fig_angle, format!("{header}{}", figure.angle_csv()))?;
    let report_path = args.run.out.join("theorem-report.txt");
    fs::write(&report_path, format!("{header}{}", render_report(&traces)))?;

    // The manifest is the single serialized step.
    let manifest = serde_json::json!({
        "artifact": { "version": VERSION, "spec_hash": prep.hash },
        "matrix": matrix_id(&args.run.matrix),
        "completed": completed.iter().map(|o| serde_json::json!({
            "label": o.label,
            "termination": format!("{:?}", o.termination),
            "table": o.table_path.display().to_string(),
            "trace": o.trace_path.display().to_string(),
        })).collect::<Vec<_>>(),
        "failed": failed.iter().map(|(label, err)| serde_json::json!({
            "label": label, "error": err,
        })).collect::<Vec<_>>(),
        "figures": [fig_xi.display().to_string(), fig_angle.display().to_string()],
        "report": report_path.display().to_string(),
    });
    fs::write(
        args.run.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    println!("{}", render_report(&traces));
    println!("outputs under {}", args.run.out.display());
    if !failed.is_empty() {
        for (label, err) in &failed {
            eprintln!("irqi: sub-run '{label}' failed: {err}");
        }
        bail!(
            "{} of {} sub-runs failed; partial results preserved",
            failed.len(),
            labels.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let reference: SpectralReference = serde_json::from_str(
        &fs::read_to_string(&args.reference)
            .with_context(|| format!("reading {}", args.reference.display()))?,
    )
    .context("parsing spectral reference")?;

    let mut all_exact_passed = true;
    let mut failures = Vec::new();
    for path in &args.traces {
        let trace: ConvergenceTrace = serde_json::from_str(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing trace {}", path.display()))?;
        if trace.meta.n != reference.n
            || (trace.meta.a_one_norm - reference.a_one_norm).abs()
                > 1e-10 * reference.a_one_norm.max(trace.meta.a_one_norm)
        {
            bail!(
                "reference does not match trace {} (n {} vs {})",
                path.display(),
                reference.n,
                trace.meta.n
            );
        }
        let entries = diagnostics::verify_trace(&trace, &reference, args.alpha);
        println!("{}:", path.display());
        for entry in &entries {
            println!("  {}", render_entry(entry));
            if entry.exact_arithmetic && !entry.passed {
                all_exact_passed = false;
                failures.push(format!("{} in {}", entry.name, path.display()));
            }
        }
    }
    if all_exact_passed {
        println!("verify: all exact-arithmetic checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "verify: FAILED exact-arithmetic checks: {}",
            failures.join(", ")
        );
        Ok(ExitCode::from(2))
    }
}
