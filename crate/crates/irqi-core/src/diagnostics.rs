//! Measurement and verification of convergence behavior.
//!
//! A run trace is reduced to per-step scalars (angles to the reference
//! eigenvector, residual-direction data, inner tolerances), and the
//! convergence bounds are then evaluated from those scalars plus the
//! oracle constants alone; nothing here re-runs a solver.
//!
//! Angle conventions: phi_k is the acute angle between the iterate and
//! the reference eigenvector, so cos(phi) is taken nonnegative, while
//! cos(psi) = xᵀ d_k keeps its sign. The reference eigenvector's sign
//! is fixed by requiring xᵀ u_0 > 0 so the psi signs are reproducible.

use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::DiagnosticsError;
use crate::lanczos::Breakdown;
use crate::oracle::SpectralReference;
use crate::rqi::{RunMeta, RunTrace};

/// Per-outer-step scalar record. Angle fields are `None` when the run
/// was measured without a spectral reference; inner-solve fields are
/// `None` on the final iterate (no solve was performed from it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub theta: f64,
    pub r_norm: f64,
    pub sin_phi: Option<f64>,
    pub tan_phi: Option<f64>,
    /// Signed xᵀ d_k; `None` when the residual direction is undefined
    /// (exact solves) or no reference is available.
    pub cos_psi: Option<f64>,
    pub sin_psi: Option<f64>,
    pub xi: Option<f64>,
    /// Preconditioned residual norm, recorded for tuned runs.
    pub xi_hat: Option<f64>,
    pub inner_steps: Option<usize>,
    pub w_norm: Option<f64>,
    /// Breakdown flag of the inner solve; near-singular projected
    /// systems sit at the working-precision edge and are excluded from
    /// the residual-direction checks.
    pub breakdown: Option<Breakdown>,
    pub cumulative_inner: usize,
}

/// One evaluated theorem: pass/fail with the worst margin and where it
/// occurred. Margins are `rhs - lhs` in the inequality's own units, so
/// negative means violated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremEntry {
    pub name: String,
    /// Exact-arithmetic results gate the verify exit code; asymptotic
    /// ones only warn.
    pub exact_arithmetic: bool,
    pub passed: bool,
    pub checked_steps: usize,
    pub skipped_steps: usize,
    /// Smallest margin over the checked steps (negative means violated)
    /// and the step attaining it; absent when nothing was checked.
    pub worst_margin: Option<f64>,
    pub worst_step: Option<usize>,
    pub note: String,
}

impl TheoremEntry {
    fn from_margins(
        name: &str,
        exact_arithmetic: bool,
        margins: &[(usize, f64)],
        skipped: usize,
        note: &str,
    ) -> Self {
        let worst = margins
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .copied();
        TheoremEntry {
            name: name.into(),
            exact_arithmetic,
            passed: worst.map(|(_, m)| m >= 0.0).unwrap_or(true),
            checked_steps: margins.len(),
            skipped_steps: skipped,
            worst_margin: worst.map(|(_, m)| m),
            worst_step: worst.map(|(k, _)| k),
            note: note.into(),
        }
    }
}

/// Scalar trace: run metadata, per-step records, theorem results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub meta: RunMeta,
    pub steps: Vec<StepRecord>,
    pub theorems: Vec<TheoremEntry>,
}

fn scalarize(raw: &RunTrace, angles: Option<&SpectralReference>) -> ConvergenceTrace {
    // Fix the reference eigenvector sign by the first iterate.
    let x: Option<Vec<f64>> = angles.map(|r| {
        let u0 = &raw.steps[0].iterate.u;
        let mut x = r.x.clone();
        if dense::dot(&x, u0) < 0.0 {
            dense::scale(-1.0, &mut x);
        }
        x
    });

    let mut steps = Vec::with_capacity(raw.steps.len());
    let mut cumulative = 0usize;
    for step in &raw.steps {
        let u = &step.iterate.u;
        let (sin_phi, tan_phi) = match &x {
            Some(x) => {
                let c = dense::dot(x, u);
                let mut perp = u.clone();
                dense::axpy(-c, x, &mut perp);
                let s = dense::norm2(&perp);
                (Some(s), Some(s / c.abs()))
            }
            None => (None, None),
        };
        let (cos_psi, sin_psi) = match (&x, step.inner.as_ref().and_then(|i| i.d.as_ref())) {
            (Some(x), Some(d)) => {
                let c = dense::dot(x, d);
                let mut perp = d.clone();
                dense::axpy(-c, x, &mut perp);
                (Some(c), Some(dense::norm2(&perp)))
            }
            _ => (None, None),
        };
        if let Some(inner) = &step.inner {
            cumulative += inner.steps_used;
        }
        steps.push(StepRecord {
            k: step.iterate.k,
            theta: step.iterate.theta,
            r_norm: step.iterate.r_norm,
            sin_phi,
            tan_phi,
            cos_psi,
            sin_psi,
            xi: step.inner.as_ref().map(|i| i.xi),
            xi_hat: step.inner.as_ref().and_then(|i| i.xi_hat),
            inner_steps: step.inner.as_ref().map(|i| i.steps_used),
            w_norm: step.inner.as_ref().map(|i| dense::norm2(&i.w)),
            breakdown: step.inner.as_ref().map(|i| i.breakdown),
            cumulative_inner: cumulative,
        });
    }
    ConvergenceTrace {
        meta: raw.meta.clone(),
        steps,
        theorems: Vec::new(),
    }
}

/// Reduces a raw run to scalars without angle data (no reference).
pub fn scalarize_without_reference(raw: &RunTrace) -> ConvergenceTrace {
    scalarize(raw, None)
}

/// Measures angles against the reference and records the residual-norm
/// / angle sandwich `||r||/spread <= sin(phi) <= 2||r||/gap` for every
/// step as the first theorem entry.
pub fn measure(
    raw: &RunTrace,
    reference: &SpectralReference,
) -> Result<ConvergenceTrace, DiagnosticsError> {
    if reference.n != raw.meta.n {
        return Err(DiagnosticsError::ReferenceMismatch(format!(
            "reference is order {}, trace is order {}",
            reference.n, raw.meta.n
        )));
    }
    let scale = reference.a_one_norm.max(raw.meta.a_one_norm);
    if (reference.a_one_norm - raw.meta.a_one_norm).abs() > 1e-10 * scale {
        return Err(DiagnosticsError::ReferenceMismatch(format!(
            "reference ||A||_1 = {} but trace has {}",
            reference.a_one_norm, raw.meta.a_one_norm
        )));
    }
    let mut trace = scalarize(raw, Some(reference));
    trace.theorems.push(check_angle_sandwich(&trace, reference));
    Ok(trace)
}

/// `||r_k|| / (lambda_max - lambda_min) <= sin(phi_k) <= 2 ||r_k|| / gap`.
///
/// The measured angle saturates at the reference eigenvector's own
/// accuracy, about `eps * beta`, so that resolution is added as
/// absolute slack on the upper side.
fn check_angle_sandwich(trace: &ConvergenceTrace, reference: &SpectralReference) -> TheoremEntry {
    let spread = reference.spread();
    let gap = reference.gap();
    let angle_resolution = 64.0 * f64::EPSILON * reference.beta;
    let mut margins = Vec::new();
    let mut skipped = 0;
    for s in &trace.steps {
        match s.sin_phi {
            Some(sin_phi) => {
                let lower = (sin_phi * (1.0 + 1e-8) + 1e-12) - s.r_norm / spread;
                let upper =
                    (2.0 * s.r_norm / gap) * (1.0 + 1e-8) + 1e-12 + angle_resolution - sin_phi;
                margins.push((s.k, lower.min(upper)));
            }
            None => skipped += 1,
        }
    }
    TheoremEntry::from_margins(
        "angle_residual_sandwich",
        true,
        &margins,
        skipped,
        "r/spread <= sin(phi) <= 2r/gap at every step (oracle angle resolution added)",
    )
}

/// Residual-direction results: `|cos psi| <= tan phi` (exact
/// arithmetic) and the asymptotic `sin psi >= 1 - sin^2(phi)/2`.
pub fn check_residual_direction(trace: &ConvergenceTrace) -> Vec<TheoremEntry> {
    let mut m16 = Vec::new();
    let mut m17 = Vec::new();
    let mut skipped16 = 0;
    let mut skipped17 = 0;
    for s in &trace.steps {
        // Residual directions are meaningful only for true Galerkin
        // solves: near-singular projections and invariant-subspace
        // breakdowns leave d at the working-precision noise level.
        let usable = s.xi.map(|x| x > 0.0).unwrap_or(false)
            && matches!(s.breakdown, Some(Breakdown::None) | None);
        match (usable, s.cos_psi, s.sin_psi, s.tan_phi, s.sin_phi) {
            (true, Some(cos_psi), Some(sin_psi), Some(tan_phi), Some(sin_phi)) => {
                m16.push((s.k, tan_phi * (1.0 + 1e-8) + 1e-12 - cos_psi.abs()));
                // Asymptotic: only meaningful inside the small-angle window.
                if sin_phi <= 0.1 {
                    let slack = sin_phi.powi(4) + 1e-12;
                    m17.push((s.k, sin_psi - (1.0 - 0.5 * sin_phi * sin_phi - slack)));
                } else {
                    skipped17 += 1;
                }
            }
            _ => {
                skipped16 += 1;
                skipped17 += 1;
            }
        }
    }
    vec![
        TheoremEntry::from_margins(
            "direction_cos_vs_tan_phi",
            true,
            &m16,
            skipped16,
            "|cos psi| <= tan phi (1+1e-8) + 1e-12 at every Lanczos step (near-singular projected solves excluded)",
        ),
        TheoremEntry::from_margins(
            "direction_sin_psi_floor",
            false,
            &m17,
            skipped17,
            "sin psi >= 1 - sin^2(phi)/2 - (sin^4(phi) + 1e-12), window sin(phi) <= 0.1",
        ),
    ]
}

/// Outer-iteration bounds: the tan-angle recurrence (asymptotic), the
/// global residual bound, the residual/solution-norm bound, the
/// eigenvalue-error sandwich and Rayleigh-quotient interlacing.
pub fn check_outer_bounds(
    trace: &ConvergenceTrace,
    reference: &SpectralReference,
) -> Vec<TheoremEntry> {
    let beta = reference.beta;
    let gap = reference.gap();
    let spread = reference.spread();
    let anorm = reference.a_one_norm;

    // Angle recurrence: tan(phi') <= 2 beta (sin phi + xi sin psi)/|cos phi + xi cos psi| sin^2 phi.
    let mut m13 = Vec::new();
    let mut skipped13 = 0;
    for pair in trace.steps.windows(2) {
        let (s, next) = (&pair[0], &pair[1]);
        let (sin_phi, tan_next) = match (s.sin_phi, next.tan_phi) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                skipped13 += 1;
                continue;
            }
        };
        let xi = match s.xi {
            Some(x) => x,
            None => {
                skipped13 += 1;
                continue;
            }
        };
        // Exact solves contribute xi = 0 terms; otherwise psi data is required.
        let (xi_sin, xi_cos) = if xi == 0.0 {
            (0.0, 0.0)
        } else {
            match (s.sin_psi, s.cos_psi) {
                (Some(sp), Some(cp)) => (xi * sp, xi * cp),
                _ => {
                    skipped13 += 1;
                    continue;
                }
            }
        };
        if sin_phi > 0.1 {
            skipped13 += 1;
            continue;
        }
        let cos_phi = (1.0 - sin_phi * sin_phi).sqrt();
        let denom = (cos_phi + xi_cos).abs();
        let bound = 2.0 * beta * (sin_phi + xi_sin) / denom * sin_phi * sin_phi;
        // Below the measurable angle floor the prediction cannot be
        // resolved in floating point; skip rather than cry wolf.
        if bound < 1e-13 {
            skipped13 += 1;
            continue;
        }
        m13.push((s.k, bound * (1.0 + 1e-8) - tan_next));
    }

    // Global bound: ||r'|| <= sqrt(1 + xi^2) ||r||, any starting vector.
    let mut m33 = Vec::new();
    let mut skipped33 = 0;
    for pair in trace.steps.windows(2) {
        let (s, next) = (&pair[0], &pair[1]);
        match s.xi {
            Some(xi) => {
                let bound = (1.0 + xi * xi).sqrt() * s.r_norm * (1.0 + 1e-10);
                m33.push((s.k, bound - next.r_norm));
            }
            None => skipped33 += 1,
        }
    }

    // Residual vs solution norm: ||r'|| <= sqrt(1 + xi^2) / ||w||, strict.
    let mut m25 = Vec::new();
    let mut skipped25 = 0;
    for pair in trace.steps.windows(2) {
        let (s, next) = (&pair[0], &pair[1]);
        match (s.xi, s.w_norm) {
            (Some(xi), Some(w_norm)) if w_norm > 0.0 => {
                let bound = (1.0 + xi * xi).sqrt() / w_norm * (1.0 + 1e-8);
                m25.push((s.k, bound - next.r_norm));
            }
            _ => skipped25 += 1,
        }
    }

    // Eigenvalue-error sandwich: gap sin^2 <= |lambda - theta| <= spread sin^2.
    let mut m28 = Vec::new();
    let mut skipped28 = 0;
    // theta is only resolved to roundoff in the matrix scale.
    let theta_floor = 64.0 * f64::EPSILON * anorm;
    for s in &trace.steps {
        match s.sin_phi {
            Some(sin_phi) => {
                let err = (reference.lambda - s.theta).abs();
                let s2 = sin_phi * sin_phi;
                let lower = err * (1.0 + 1e-8) + theta_floor - gap * s2;
                let upper = spread * s2 * (1.0 + 1e-8) + theta_floor - err;
                m28.push((s.k, lower.min(upper)));
            }
            None => skipped28 += 1,
        }
    }

    // Rayleigh quotient interlacing.
    let mut mrq = Vec::new();
    for s in &trace.steps {
        let lo = s.theta - (reference.lambda_min - 1e-12 * anorm);
        let hi = (reference.lambda_max + 1e-12 * anorm) - s.theta;
        mrq.push((s.k, lo.min(hi)));
    }

    vec![
        TheoremEntry::from_margins(
            "tan_phi_recurrence",
            false,
            &m13,
            skipped13,
            "tan phi' <= 2 beta (sin phi + xi sin psi)/|cos phi + xi cos psi| sin^2 phi, window sin(phi) <= 0.1",
        ),
        TheoremEntry::from_margins(
            "global_residual_bound",
            true,
            &m33,
            skipped33,
            "||r'|| <= sqrt(1 + xi^2) ||r|| for any starting vector",
        ),
        TheoremEntry::from_margins(
            "residual_vs_solution_norm",
            true,
            &m25,
            skipped25,
            "||r'|| <= sqrt(1 + xi^2)/||w||, strict at every step",
        ),
        TheoremEntry::from_margins(
            "eigenvalue_error_sandwich",
            false,
            &m28,
            skipped28,
            "gap sin^2 <= |lambda - theta| <= spread sin^2, with a roundoff floor on theta",
        ),
        TheoremEntry::from_margins(
            "rayleigh_quotient_interlacing",
            true,
            &mrq,
            0,
            "lambda_min <= theta_k <= lambda_max",
        ),
    ]
}

/// Solution-norm lower bound `||w_{k+1}|| >= (1-alpha) gap / (4 beta ||r_k||^2)`
/// at steps satisfying the hypothesis `xi_k sin(phi_k) <= alpha < 1`,
/// inside the asymptotic window. Also records the band statistic
/// `||w|| * ||r||^2` over the qualifying steps.
pub fn check_w_norm(
    trace: &ConvergenceTrace,
    reference: &SpectralReference,
    alpha: f64,
) -> TheoremEntry {
    let gap = reference.gap();
    let beta = reference.beta;
    let mut margins = Vec::new();
    let mut skipped = 0;
    let mut band: Vec<f64> = Vec::new();
    // Solves cannot produce norms beyond the reciprocal roundoff scale;
    // steps whose bound exceeds it are unmeasurable in f64.
    let w_measurable = 0.01 / (f64::EPSILON * reference.a_one_norm.max(f64::MIN_POSITIVE));
    for s in &trace.steps {
        let (xi, w_norm, sin_phi) = match (s.xi, s.w_norm, s.sin_phi) {
            (Some(x), Some(w), Some(sp)) => (x, w, sp),
            _ => {
                skipped += 1;
                continue;
            }
        };
        if xi * sin_phi > alpha || sin_phi > 0.1 {
            skipped += 1;
            continue;
        }
        let bound = (1.0 - alpha) * gap / (4.0 * beta * s.r_norm * s.r_norm);
        if bound > w_measurable {
            skipped += 1;
            continue;
        }
        band.push(w_norm * s.r_norm * s.r_norm);
        margins.push((s.k, w_norm * (1.0 + 1e-6) - bound));
    }
    let note = if band.is_empty() {
        "no steps satisfied the hypothesis xi sin(phi) <= alpha".to_string()
    } else {
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(0.0f64, f64::max);
        format!("band statistic ||w|| ||r||^2 in [{lo:e}, {hi:e}] over qualifying steps")
    };
    TheoremEntry::from_margins("solution_norm_floor", false, &margins, skipped, &note)
}

/// Runs every check and returns the combined entries (the angle
/// sandwich from `measure` is already inside the trace).
pub fn verify_trace(
    trace: &ConvergenceTrace,
    reference: &SpectralReference,
    alpha: f64,
) -> Vec<TheoremEntry> {
    let mut entries = Vec::new();
    entries.extend(check_residual_direction(trace));
    entries.extend(check_outer_bounds(trace, reference));
    entries.push(check_w_norm(trace, reference, alpha));
    entries
}

/// Extracts the regression pairs `(log sin(phi_k), log sin(phi_{k+1}))`
/// inside the window. The successor must clear the floor, and the final
/// pair of a converged run is dropped: its angle is pinned by the
/// stopping rule and the measurement floor, not by the convergence map.
/// Returns the pairs and how many steps had `sin(phi_k)` in-window.
fn order_pairs(trace: &ConvergenceTrace, floor: f64, cap: f64) -> (Vec<(f64, f64)>, usize) {
    let sines: Vec<Option<f64>> = trace.steps.iter().map(|s| s.sin_phi).collect();
    let converged = trace.meta.termination == crate::rqi::Termination::Converged;
    let last_pair = sines.len().saturating_sub(2);
    let mut points = Vec::new();
    let mut in_window = 0usize;
    for (k, pair) in sines.windows(2).enumerate() {
        if let (Some(a), Some(b)) = (pair[0], pair[1]) {
            if a >= floor && a <= cap {
                in_window += 1;
                if b >= floor && !(converged && k == last_pair) {
                    points.push((a.ln(), b.ln()));
                }
            }
        }
    }
    (points, in_window)
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Least-squares slope of `log sin(phi_{k+1})` against `log sin(phi_k)`
/// over consecutive steps whose angles lie inside `[floor, cap]`.
pub fn estimate_order(
    trace: &ConvergenceTrace,
    floor: f64,
    cap: f64,
) -> Result<f64, DiagnosticsError> {
    let (points, in_window) = order_pairs(trace, floor, cap);
    if in_window < 3 || points.len() < 2 {
        return Err(DiagnosticsError::InsufficientData {
            usable: in_window,
            needed: 3,
        });
    }
    Ok(least_squares_slope(&points))
}

/// Order estimate with regression pairs pooled across several runs of
/// the same strategy (typically differing only in the seed). Fast
/// convergence leaves each single run with one or two usable pairs;
/// pooling restores a meaningful regression.
pub fn estimate_order_pooled(
    traces: &[&ConvergenceTrace],
    floor: f64,
    cap: f64,
) -> Result<f64, DiagnosticsError> {
    let mut points = Vec::new();
    let mut in_window = 0usize;
    for trace in traces {
        let (p, w) = order_pairs(trace, floor, cap);
        points.extend(p);
        in_window += w;
    }
    if in_window < 3 || points.len() < 2 {
        return Err(DiagnosticsError::InsufficientData {
            usable: in_window,
            needed: 3,
        });
    }
    Ok(least_squares_slope(&points))
}

/// Rows in the experiment-table layout: outer index, residual norm,
/// angle sine, the inner relative residual and step count spent to
/// reach this iterate, and the running total of inner steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub k: usize,
    pub r_norm: f64,
    pub sin_phi: Option<f64>,
    pub res_prev: Option<f64>,
    pub iter_prev: Option<usize>,
    pub iters_cumulative: usize,
}

/// Summary row emitted for fixed-step runs: steps per solve, outer
/// iterations and total inner steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedStepsSummary {
    pub m: usize,
    pub outer_iterations: usize,
    pub total_inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableData {
    pub rows: Vec<TableRow>,
    pub fixed_steps_summary: Option<FixedStepsSummary>,
}

/// Builds the tabular records for one measured (or angle-less) trace.
/// Exact solves leave the inner columns empty, matching the layout of
/// runs with a direct solver.
pub fn emit_table(trace: &ConvergenceTrace) -> TableData {
    let mut rows = Vec::new();
    for pair in trace.steps.windows(2) {
        let (prev, s) = (&pair[0], &pair[1]);
        let exact = prev.inner_steps == Some(0);
        rows.push(TableRow {
            k: s.k,
            r_norm: s.r_norm,
            sin_phi: s.sin_phi,
            res_prev: if exact { None } else { prev.xi },
            iter_prev: if exact { None } else { prev.inner_steps },
            // Inner steps spent to arrive at iterate k.
            iters_cumulative: prev.cumulative_inner,
        });
    }
    let fixed_steps_summary = trace
        .meta
        .strategy
        .strip_prefix("steps:")
        .and_then(|m| m.parse::<usize>().ok())
        .map(|m| FixedStepsSummary {
            m,
            outer_iterations: trace.steps.len().saturating_sub(1),
            total_inner: trace.meta.cumulative_inner,
        });
    TableData {
        rows,
        fixed_steps_summary,
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TableData {
    /// RFC-4180-style CSV with a header row; the fixed-steps summary
    /// rides along as a comment line so a parse round-trips everything.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.fixed_steps_summary {
            out.push_str(&format!(
                "# fixed-steps m={} outer={} iters={}\n",
                s.m, s.outer_iterations, s.total_inner
            ));
        }
        out.push_str("k,r_norm,sin_phi,res_prev,iter_prev,iters\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{},{},{},{}\n",
                r.k,
                r.r_norm,
                fmt_opt_f64(r.sin_phi),
                fmt_opt_f64(r.res_prev),
                fmt_opt_usize(r.iter_prev),
                r.iters_cumulative
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<TableData, DiagnosticsError> {
        let mut rows = Vec::new();
        let mut summary = None;
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: &str| DiagnosticsError::TableParse {
                line: line_no,
                msg: msg.into(),
            };
            if let Some(rest) = line.strip_prefix("# fixed-steps ") {
                let mut m = None;
                let mut outer = None;
                let mut iters = None;
                for tok in rest.split_whitespace() {
                    let (key, value) = tok.split_once('=').ok_or_else(|| err("bad summary"))?;
                    let value: usize = value.parse().map_err(|_| err("bad summary value"))?;
                    match key {
                        "m" => m = Some(value),
                        "outer" => outer = Some(value),
                        "iters" => iters = Some(value),
                        _ => return Err(err("unknown summary key")),
                    }
                }
                summary = Some(FixedStepsSummary {
                    m: m.ok_or_else(|| err("missing m"))?,
                    outer_iterations: outer.ok_or_else(|| err("missing outer"))?,
                    total_inner: iters.ok_or_else(|| err("missing iters"))?,
                });
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(err("expected 6 fields"));
            }
            let parse_f = |s: &str| -> Result<Option<f64>, DiagnosticsError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| DiagnosticsError::TableParse {
                            line: line_no,
                            msg: format!("bad float '{s}'"),
                        })
                }
            };
            rows.push(TableRow {
                k: fields[0].parse().map_err(|_| err("bad index"))?,
                r_norm: fields[1].parse().map_err(|_| err("bad r_norm"))?,
                sin_phi: parse_f(fields[2])?,
                res_prev: parse_f(fields[3])?,
                iter_prev: if fields[4].is_empty() {
                    None
                } else {
                    Some(fields[4].parse().map_err(|_| err("bad iter"))?)
                },
                iters_cumulative: fields[5].parse().map_err(|_| err("bad iters"))?,
            });
        }
        Ok(TableData {
            rows,
            fixed_steps_summary: summary,
        })
    }
}

/// Figure series across one or more traces: `(k, xi_k, 1/sin phi_k)`
/// for the inner-tolerance figure and `(k, sin phi_k)` for the
/// convergence figure, labeled by strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub xi_rows: Vec<(String, usize, f64, f64)>,
    pub angle_rows: Vec<(String, usize, f64)>,
}

pub fn emit_figure_data(traces: &[&ConvergenceTrace]) -> FigureData {
    let mut xi_rows = Vec::new();
    let mut angle_rows = Vec::new();
    for trace in traces {
        let mut label = trace.meta.strategy.clone();
        if trace.meta.precond == "tuned" {
            label.push_str("+tuned");
        }
        for s in &trace.steps {
            if let Some(sin_phi) = s.sin_phi {
                angle_rows.push((label.clone(), s.k, sin_phi));
                if let Some(xi) = s.xi {
                    xi_rows.push((label.clone(), s.k, xi, 1.0 / sin_phi));
                }
            }
        }
    }
    FigureData {
        xi_rows,
        angle_rows,
    }
}

impl FigureData {
    pub fn xi_csv(&self) -> String {
        let mut out = String::from("label,k,xi,inv_sin_phi\n");
        for (label, k, xi, inv) in &self.xi_rows {
            out.push_str(&format!("{label},{k},{xi:e},{inv:e}\n"));
        }
        out
    }

    pub fn angle_csv(&self) -> String {
        let mut out = String::from("label,k,sin_phi\n");
        for (label, k, sin_phi) in &self.angle_rows {
            out.push_str(&format!("{label},{k},{sin_phi:e}\n"));
        }
        out
    }
}
