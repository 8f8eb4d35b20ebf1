#![allow(clippy::needless_range_loop)]

//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its headline numbers. The corpus is (a) 1D Laplacians
//! tridiag(-1,2,-1) at n = 100, 500, 1000 and (b) ten seeded random
//! sparse symmetric matrices of order 200, plus the four public test
//! matrices when their Matrix Market files are present (criterion 5 is
//! skipped with a warning otherwise).
//!
//! Run tolerances for the direction/orthogonality criteria are chosen
//! per matrix so the runs stop before the Rayleigh quotient reaches its
//! floating-point floor; past that point the explicit inner residual
//! direction is unmeasurable in f64 and the checks would test roundoff,
//! not the solver.

use std::time::Instant;

use irqi_core::dense;
use irqi_core::diagnostics::{self, ConvergenceTrace};
use irqi_core::lanczos::{self, InnerStop};
use irqi_core::oracle::{self, SpectralReference};
use irqi_core::precond::{self, FillPolicy};
use irqi_core::rqi::{
    self, InitialVector, InnerSolver, RunConfig, RunTrace, Termination, ToleranceStrategy,
};
use irqi_core::sparse::{load_matrix_market, SymmetricSparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laplacian(n: usize) -> SymmetricSparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    SymmetricSparseMatrix::from_triplets(n, &t).unwrap()
}

/// Seeded random sparse symmetric matrix: unit-range diagonal plus
/// roughly four off-diagonal couplings per row.
fn random_sparse_sym(n: usize, seed: u64) -> SymmetricSparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut upper: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for i in 0..n {
        upper.insert((i, i), rng.gen_range(-1.0..1.0));
        for _ in 0..2 {
            let j = rng.gen_range(0..n);
            if j != i {
                let key = (i.min(j), i.max(j));
                let v = rng.gen_range(-1.0..1.0);
                upper.entry(key).or_insert(v);
            }
        }
    }
    let mut triplets = Vec::new();
    for (&(i, j), &v) in &upper {
        triplets.push((i, j, v));
        if i != j {
            triplets.push((j, i, v));
        }
    }
    SymmetricSparseMatrix::from_triplets(n, &triplets).unwrap()
}

fn smallest_reference(a: &SymmetricSparseMatrix) -> SpectralReference {
    oracle::spectral_reference(a, oracle::default_smallest_sigma(a)).unwrap()
}

struct CorpusEntry {
    name: String,
    a: SymmetricSparseMatrix,
    reference: SpectralReference,
    /// Stopping tolerance keeping the run clear of the theta floor.
    direction_tol: f64,
}

/// Corpus (a) + (b) with per-matrix tolerances for the direction checks.
fn direction_corpus() -> Vec<CorpusEntry> {
    let mut corpus = Vec::new();
    for (n, tol) in [(100usize, 1e-7), (500, 1e-6), (1000, 1e-5)] {
        let a = laplacian(n);
        let reference = smallest_reference(&a);
        corpus.push(CorpusEntry {
            name: format!("laplacian-{n}"),
            a,
            reference,
            direction_tol: tol,
        });
    }
    for seed in 0..10u64 {
        let a = random_sparse_sym(200, 100 + seed);
        let reference = smallest_reference(&a);
        assert!(
            reference.gap() > 1e-9 * reference.a_one_norm,
            "corpus matrix rnd-{seed} has a pathological gap"
        );
        corpus.push(CorpusEntry {
            name: format!("rnd200-{seed}"),
            a,
            reference,
            // These spectra have small beta, so the iteration deepens
            // fast; stop before the third solve outgrows f64.
            direction_tol: 1e-4,
        });
    }
    corpus
}

fn run_on(
    entry: &CorpusEntry,
    strategy: &ToleranceStrategy,
    seed: u64,
    tol: f64,
    max_outer: usize,
    initial: InitialVector,
) -> RunTrace {
    let config = RunConfig {
        tol,
        max_outer,
        seed,
        initial,
    };
    let mut raw = rqi::run(
        &entry.a,
        &config,
        strategy,
        &InnerSolver::Plain,
        Some(&entry.reference),
    )
    .unwrap();
    raw.meta.matrix_id = entry.name.clone();
    raw
}

/// Criterion 1: residual-direction theorem. Every unpreconditioned
/// Lanczos outer step over the corpus satisfies |cos psi| <= tan phi
/// and the Galerkin orthogonality dot(d, u) <= 1e-10. 100% required.
#[test]
fn criterion_1_residual_direction_theorem() {
    let t0 = Instant::now();
    let corpus = direction_corpus();
    let mut checked = 0usize;
    for entry in &corpus {
        let m_max = 2 * entry.a.n();
        let strategies = [
            ToleranceStrategy::FixedXi { xi: 1.0, m_max },
            ToleranceStrategy::FixedSteps(10),
        ];
        for strategy in &strategies {
            let raw = run_on(
                entry,
                strategy,
                7,
                entry.direction_tol,
                40,
                InitialVector::PerturbedReference { sin_phi0: 0.1 },
            );
            let trace = diagnostics::measure(&raw, &entry.reference).unwrap();
            for (step, rec) in raw.steps.iter().zip(&trace.steps) {
                let inner = match &step.inner {
                    Some(inner) if inner.xi > 0.0 => inner,
                    _ => continue,
                };
                let d = inner.d.as_ref().expect("xi > 0 has a direction");
                let galerkin = dense::dot(d, &step.iterate.u).abs();
                assert!(
                    galerkin <= 1e-10,
                    "{} {} k={}: dot(d,u) = {galerkin:e}",
                    entry.name,
                    strategy.label(),
                    rec.k
                );
                let cos_psi = rec.cos_psi.unwrap().abs();
                let tan_phi = rec.tan_phi.unwrap();
                assert!(
                    cos_psi <= tan_phi * (1.0 + 1e-8) + 1e-12,
                    "{} {} k={}: |cos psi| = {cos_psi:e} > tan phi = {tan_phi:e}",
                    entry.name,
                    strategy.label(),
                    rec.k
                );
                checked += 1;
            }
            let entries = diagnostics::check_residual_direction(&trace);
            assert!(entries[0].passed, "{:?}", entries[0]);
        }
    }
    let elapsed = t0.elapsed();
    assert!(checked > 50, "only {checked} steps exercised");
    assert!(
        elapsed.as_secs() < 120,
        "criterion 1 overran its runtime budget: {elapsed:?}"
    );
    println!(
        "criterion 1 (residual direction + Galerkin orthogonality): PASS — {checked} steps across {} runs in {elapsed:?}",
        2 * corpus.len()
    );
}

/// Criterion 2: global residual bound for pure-random starting vectors,
/// 20 runs across corpus (a)-(b).
#[test]
fn criterion_2_global_residual_bound() {
    let mut runs = Vec::new();
    for (n, seeds) in [
        (100usize, vec![0u64, 1]),
        (500, vec![0, 1, 2]),
        (1000, vec![0, 1, 2]),
    ] {
        let a = laplacian(n);
        for seed in seeds {
            runs.push((format!("laplacian-{n}"), a.clone(), seed));
        }
    }
    for seed in 0..10u64 {
        runs.push((
            format!("rnd200-{seed}"),
            random_sparse_sym(200, 100 + seed),
            seed,
        ));
    }
    // Two more to make exactly 20.
    runs.push(("laplacian-100".into(), laplacian(100), 5));
    runs.push(("laplacian-500".into(), laplacian(500), 4));
    assert_eq!(runs.len(), 20);

    let mut worst = f64::INFINITY;
    let mut pairs = 0usize;
    for (name, a, seed) in &runs {
        let config = RunConfig {
            tol: 1e-12,
            max_outer: 50,
            seed: *seed,
            initial: InitialVector::Random,
        };
        let raw = rqi::run(
            a,
            &config,
            &ToleranceStrategy::FixedSteps(8),
            &InnerSolver::Plain,
            None,
        )
        .unwrap();
        for w in raw.steps.windows(2) {
            let inner = w[0].inner.as_ref().unwrap();
            let bound = (1.0 + inner.xi * inner.xi).sqrt() * w[0].iterate.r_norm * (1.0 + 1e-10);
            let margin = bound - w[1].iterate.r_norm;
            assert!(
                margin >= 0.0,
                "{name} seed {seed} k={}: ||r'|| = {:e} exceeds bound {:e}",
                w[0].iterate.k,
                w[1].iterate.r_norm,
                bound
            );
            worst = worst.min(margin / bound.max(f64::MIN_POSITIVE));
            pairs += 1;
        }
    }
    println!(
        "criterion 2 (global residual bound): PASS — {pairs} steps over 20 random-start runs, worst relative margin {worst:.3e}"
    );
}

/// Criterion 3: norm identity ||(A - theta I) w||^2 = 1 + xi^2 on every
/// inner solve produced by the corpus runs.
#[test]
fn criterion_3_norm_identity() {
    let corpus = direction_corpus();
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for entry in &corpus {
        let m_max = 2 * entry.a.n();
        for strategy in [
            ToleranceStrategy::FixedXi { xi: 1.0, m_max },
            ToleranceStrategy::FixedSteps(10),
        ] {
            let raw = run_on(
                entry,
                &strategy,
                7,
                entry.direction_tol,
                40,
                InitialVector::PerturbedReference { sin_phi0: 0.1 },
            );
            let n = entry.a.n();
            for step in &raw.steps {
                let inner = match &step.inner {
                    Some(inner) if inner.xi > 0.0 => inner,
                    _ => continue,
                };
                let mut opw = vec![0.0; n];
                entry.a.mul_into(&inner.w, &mut opw);
                for i in 0..n {
                    opw[i] -= step.iterate.theta * inner.w[i];
                }
                // Recompute the residual from the same evaluation so the
                // identity tests the Galerkin property, not rounding of
                // the operator application itself.
                let res = dense::sub(&step.iterate.u, &opw);
                let xi = dense::norm2(&res);
                let lhs = dense::dot(&opw, &opw);
                let rhs = 1.0 + xi * xi;
                let rel = (lhs - rhs).abs() / rhs;
                assert!(
                    rel <= 1e-10,
                    "{} {} k={}: |(A-thetaI)w|^2 = {lhs:e} vs 1+xi^2 = {rhs:e} (rel {rel:e})",
                    entry.name,
                    strategy.label(),
                    step.iterate.k
                );
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    println!(
        "criterion 3 (norm identity): PASS — {checked} inner solves, worst relative deviation {worst:.3e}"
    );
}

/// Criterion 4: convergence orders on the n = 1000 Laplacian at
/// tol = 1e-14 from sin(phi0) = 0.1, estimated over the window
/// [1e-12, 1e-2] with regression pairs pooled across eight seeds.
#[test]
fn criterion_4_convergence_orders() {
    let t0 = Instant::now();
    let n = 1000;
    let a = laplacian(n);
    let reference = smallest_reference(&a);
    let m_max = 3 * n / 2;
    let cases = [
        (ToleranceStrategy::Exact, 2.7),
        (ToleranceStrategy::Decreasing { m_max }, 2.7),
        (ToleranceStrategy::FixedXi { xi: 1.0, m_max }, 1.8),
        (ToleranceStrategy::FixedXi { xi: 5.0, m_max }, 1.8),
    ];
    let mut summary = Vec::new();
    for (strategy, min_order) in &cases {
        let mut traces: Vec<ConvergenceTrace> = Vec::new();
        for seed in 0..8u64 {
            let config = RunConfig {
                tol: 1e-14,
                max_outer: 50,
                seed,
                initial: InitialVector::PerturbedReference { sin_phi0: 0.1 },
            };
            let raw =
                rqi::run(&a, &config, strategy, &InnerSolver::Plain, Some(&reference)).unwrap();
            if matches!(
                strategy,
                ToleranceStrategy::FixedXi { .. } | ToleranceStrategy::Exact
            ) {
                assert_eq!(
                    raw.meta.termination,
                    Termination::Converged,
                    "{} seed {seed} did not converge",
                    strategy.label()
                );
            }
            traces.push(diagnostics::measure(&raw, &reference).unwrap());
        }
        let refs: Vec<&ConvergenceTrace> = traces.iter().collect();
        let order = diagnostics::estimate_order_pooled(&refs, 1e-12, 1e-2).unwrap();
        assert!(
            order >= *min_order,
            "{}: estimated order {order:.3} below {min_order}",
            strategy.label()
        );
        summary.push(format!("{} -> {order:.2}", strategy.label()));
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "criterion 4 overran its runtime budget: {elapsed:?}"
    );
    println!(
        "criterion 4 (convergence orders): PASS — {} in {elapsed:?}",
        summary.join(", ")
    );
}

fn paper_matrix_dir() -> Option<std::path::PathBuf> {
    if let Ok(dir) = std::env::var("IRQI_PAPER_MATRIX_DIR") {
        return Some(dir.into());
    }
    let local = std::path::Path::new("data");
    if local.is_dir() {
        return Some(local.to_path_buf());
    }
    let workspace = std::path::Path::new("../../data");
    if workspace.is_dir() {
        return Some(workspace.to_path_buf());
    }
    None
}

/// Criterion 5: reproduction of reference run characteristics on
/// the four public matrices, when their Matrix Market conversions are
/// available; skipped with a warning otherwise.
#[test]
fn criterion_5_paper_number_reproduction() {
    let dir = match paper_matrix_dir() {
        Some(d) => d,
        None => {
            println!(
                "criterion 5 (reference numbers): SKIPPED — no matrix directory; \
                 set IRQI_PAPER_MATRIX_DIR or place bcspwr08/can1054/dwt2680/lshp3466 \
                 .mtx files under ./data"
            );
            return;
        }
    };
    let expected_beta = [
        ("bcspwr08", 40.19),
        ("can1054", 88.28),
        ("dwt2680", 2295.6),
        ("lshp3466", 2613.1),
    ];
    let mut missing = Vec::new();
    for (name, beta) in expected_beta {
        let path = dir.join(format!("{name}.mtx"));
        if !path.is_file() {
            missing.push(name);
            continue;
        }
        let a = load_matrix_market(&path).unwrap();
        let reference = smallest_reference(&a);
        let rel = (reference.beta - beta).abs() / beta;
        assert!(
            rel <= 0.01,
            "{name}: beta = {} vs reference {beta} (rel {rel:.3})",
            reference.beta
        );
        println!(
            "criterion 5: {name} beta = {:.2} (reference {beta})",
            reference.beta
        );
    }
    if !missing.is_empty() {
        println!("criterion 5 (reference numbers): PARTIAL SKIP — missing {missing:?}");
    }
    let bcs = dir.join("bcspwr08.mtx");
    if bcs.is_file() {
        let a = load_matrix_market(&bcs).unwrap();
        let reference = smallest_reference(&a);
        let config = RunConfig {
            tol: 1e-14,
            max_outer: 30,
            seed: 1,
            initial: InitialVector::PerturbedReference { sin_phi0: 0.102 },
        };
        let raw = rqi::run(
            &a,
            &config,
            &ToleranceStrategy::FixedXi {
                xi: 1.0,
                m_max: 2 * a.n(),
            },
            &InnerSolver::Plain,
            Some(&reference),
        )
        .unwrap();
        assert_eq!(raw.meta.termination, Termination::Converged);
        let outers = raw.steps.len() - 1;
        assert!(
            (2..=6).contains(&outers),
            "bcspwr08 xi=1: {outers} outer iterations, reference 4 +- 2"
        );
        assert!(
            raw.meta.cumulative_inner <= 2 * 87,
            "bcspwr08 xi=1: {} total inner steps, reference 87 (x2 allowed)",
            raw.meta.cumulative_inner
        );
        let raw30 = rqi::run(
            &a,
            &RunConfig {
                tol: 1e-14,
                max_outer: 30,
                seed: 1,
                initial: InitialVector::PerturbedReference { sin_phi0: 0.102 },
            },
            &ToleranceStrategy::FixedSteps(30),
            &InnerSolver::Plain,
            Some(&reference),
        )
        .unwrap();
        let outers30 = raw30.steps.len() - 1;
        assert!(
            (3..=7).contains(&outers30),
            "bcspwr08 m=30: {outers30} outer iterations, reference 5 +- 2"
        );
        println!(
            "criterion 5 (reference numbers): PASS — bcspwr08 xi=1: {outers} outers / {} inner; m=30: {outers30} outers",
            raw.meta.cumulative_inner
        );
    }
}

/// Criterion 6: fixed-m robustness. Ten-step inner solves converge on
/// corpus (a) within 60 outer iterations even with inner residual norms
/// far above one; the observed maximum is recorded.
#[test]
fn criterion_6_large_xi_robustness() {
    // The m = 10 regime converges linearly with xi_k ~ 1/||r_k||, so
    // the reachable tolerance within 60 outer steps shrinks with beta.
    for (n, tol) in [(100usize, 1e-7), (500, 3e-6), (1000, 3e-6)] {
        let a = laplacian(n);
        let reference = smallest_reference(&a);
        let config = RunConfig {
            tol,
            max_outer: 60,
            seed: 2,
            initial: InitialVector::PerturbedReference { sin_phi0: 0.1 },
        };
        let raw = rqi::run(
            &a,
            &config,
            &ToleranceStrategy::FixedSteps(10),
            &InnerSolver::Plain,
            Some(&reference),
        )
        .unwrap();
        let max_xi = raw
            .steps
            .iter()
            .filter_map(|s| s.inner.as_ref().map(|i| i.xi))
            .fold(0.0f64, f64::max);
        assert_eq!(
            raw.meta.termination,
            Termination::Converged,
            "laplacian-{n}: FixedSteps(10) did not reach tol {tol:e} within 60 outers"
        );
        assert!(
            max_xi >= 10.0,
            "laplacian-{n}: max xi = {max_xi:e}, the large-xi regime was not exercised"
        );
        println!(
            "criterion 6 (large-xi robustness): laplacian-{n} converged in {} outers at tol {tol:e}, max xi = {max_xi:.3e}",
            raw.steps.len() - 1
        );
    }
    println!("criterion 6 (large-xi robustness): PASS");
}

/// Criterion 7: tuned preconditioner on the n = 500 Laplacian —
/// tuning identity and preconditioned Galerkin orthogonality at every
/// outer step, and cumulative inner cost at tol 1e-12 no worse than the
/// unpreconditioned run with the same seed and start.
#[test]
fn criterion_7_tuned_preconditioner() {
    let n = 500;
    let a = laplacian(n);
    let reference = smallest_reference(&a);
    let sigma = oracle::default_smallest_sigma(&a);
    let base = precond::build_base(&a, sigma, FillPolicy::Ic0).unwrap();
    let anorm = a.one_norm();
    let strategy = ToleranceStrategy::FixedXi {
        xi: 1.0,
        m_max: 3 * n / 2,
    };

    // Identity and orthogonality clauses, away from the theta floor.
    let config = RunConfig {
        tol: 1e-6,
        max_outer: 40,
        seed: 3,
        initial: InitialVector::PerturbedReference { sin_phi0: 0.1 },
    };
    let raw = rqi::run(
        &a,
        &config,
        &strategy,
        &InnerSolver::Tuned(&base),
        Some(&reference),
    )
    .unwrap();
    assert_eq!(raw.meta.termination, Termination::Converged);
    let mut steps_checked = 0;
    for step in &raw.steps {
        let inner = match &step.inner {
            Some(inner) => inner,
            None => continue,
        };
        let tp = precond::tune(&base, &a, &step.iterate.u).unwrap();
        let qu = tp.apply(&step.iterate.u);
        let au = a.matvec(&step.iterate.u).unwrap();
        let tune_err = dense::norm2(&dense::sub(&qu, &au));
        assert!(
            tune_err <= 1e-12 * anorm,
            "k={}: ||Q u - A u|| = {tune_err:e}",
            step.iterate.k
        );
        if let Some(d) = &inner.d {
            let qinv_u = tp.apply_inverse(&step.iterate.u).unwrap();
            let orth = dense::dot(d, &qinv_u).abs() / dense::norm2(&qinv_u);
            assert!(
                orth <= 1e-10,
                "k={}: dot(d, Qinv u) = {orth:e}",
                step.iterate.k
            );
        }
        steps_checked += 1;
    }
    assert!(steps_checked >= 2);

    // Paired cost comparison at the pinned tol = 1e-12.
    let config12 = RunConfig {
        tol: 1e-12,
        max_outer: 40,
        seed: 3,
        initial: InitialVector::PerturbedReference { sin_phi0: 0.1 },
    };
    let tuned = rqi::run(
        &a,
        &config12,
        &strategy,
        &InnerSolver::Tuned(&base),
        Some(&reference),
    )
    .unwrap();
    let plain = rqi::run(
        &a,
        &config12,
        &strategy,
        &InnerSolver::Plain,
        Some(&reference),
    )
    .unwrap();
    assert_eq!(tuned.meta.termination, Termination::Converged);
    assert_eq!(plain.meta.termination, Termination::Converged);
    assert!(
        tuned.meta.cumulative_inner <= plain.meta.cumulative_inner,
        "tuned run used {} inner steps, unpreconditioned used {}",
        tuned.meta.cumulative_inner,
        plain.meta.cumulative_inner
    );
    println!(
        "criterion 7 (tuned preconditioner): PASS — identity/orthogonality on {steps_checked} steps; inner steps {} (tuned) vs {} (plain) at tol 1e-12",
        tuned.meta.cumulative_inner, plain.meta.cumulative_inner
    );
}

/// Criterion 8: oracle validity — eigendecomposition reconstruction and
/// the analytic Laplacian spectrum.
#[test]
fn criterion_8_oracle_validity() {
    // Reconstruction on a dense random instance.
    let n = 150;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.gen_range(-1.0..1.0);
            triplets.push((i, j, v));
            if i != j {
                triplets.push((j, i, v));
            }
        }
    }
    let a = SymmetricSparseMatrix::from_triplets(n, &triplets).unwrap();
    let pairs = oracle::dense_eigendecomposition(&a).unwrap();
    let mut frob_a = 0.0f64;
    let mut frob_err = 0.0f64;
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for j in 0..n {
            let aij = cols
                .iter()
                .position(|&c| c == j)
                .map(|p| vals[p])
                .unwrap_or(0.0);
            let mut rec = 0.0;
            for (val, vec) in &pairs {
                rec += val * vec[i] * vec[j];
            }
            frob_a += aij * aij;
            frob_err += (rec - aij) * (rec - aij);
        }
    }
    let rel = frob_err.sqrt() / frob_a.sqrt();
    assert!(rel <= 1e-10, "reconstruction error {rel:e}");

    // Analytic Laplacian eigenvalues at n = 100.
    let m = 100;
    let lap = laplacian(m);
    let lap_pairs = oracle::dense_eigendecomposition(&lap).unwrap();
    let mut worst = 0.0f64;
    for (j, (val, _)) in lap_pairs.iter().enumerate() {
        let analytic =
            2.0 - 2.0 * ((j as f64 + 1.0) * std::f64::consts::PI / (m as f64 + 1.0)).cos();
        worst = worst.max((val - analytic).abs());
    }
    assert!(worst <= 1e-10, "worst eigenvalue deviation {worst:e}");
    println!(
        "criterion 8 (oracle validity): PASS — reconstruction {rel:.3e}, Laplacian eigenvalue deviation {worst:.3e}"
    );
}

/// Criterion 9: inner-solver m-exactness on 20 random order-60 shifted
/// indefinite systems.
#[test]
fn criterion_9_inner_solver_m_exactness() {
    let n = 60;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let a = random_sparse_sym(n, 300 + seed);
        // Shift into the spectrum's interior: random +-1 matrices
        // straddle zero, so a small shift keeps the system indefinite.
        let theta = 0.1 + 0.01 * seed as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = dense::normalize(&u).unwrap();
        let lanczos_result = lanczos::inner_solve(&a, theta, &u, InnerStop::FixedSteps(n)).unwrap();
        let direct = oracle::direct_shifted_solve(&a, theta, &u).unwrap();
        let diff = dense::sub(&lanczos_result.w, &direct);
        let rel = dense::norm2(&diff) / dense::norm2(&direct);
        assert!(
            rel <= 1e-8,
            "seed {seed}: Lanczos solution deviates from LDLT by {rel:e}"
        );
        worst = worst.max(rel);
    }
    println!("criterion 9 (m-exactness): PASS — 20 systems, worst relative deviation {worst:.3e}");
}
