//! Weak modes of restricted measures and of disintegrations as minimizers
//! of `-log density (+ log Gram determinant) (- log slice volume)` subject
//! to `h(x) = y`.
//!
//! Two independent routes are provided: [`solve`] runs an
//! augmented-Lagrangian method with quasi-Newton inner solves from several
//! starts, and [`scan_fiber`] enumerates discrete local minima along a
//! traced fiber.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{log_disint_unnorm, AmbientDensity};
use crate::error::{Error, Result};
use crate::fiber::{project_to_fiber, FiberTrace};
use crate::geometry::{decompose, gram_det, ObservationOperator, DEFAULT_RANK_TOL};
use crate::om::lp_slice_volume;

/// Objective family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeVariant {
    /// `-log dmu/dlambda`: restricted modes.
    Restricted,
    /// `-log dmu/dlambda + log |det Jh|_{ker Jh^perp}|`: modes of the disintegration.
    Disintegration,
    /// Disintegration objective minus `log V(x)` for the `l_p` unit ball slice.
    LpOm(f64),
}

impl fmt::Display for ModeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeVariant::Restricted => f.write_str("restricted"),
            ModeVariant::Disintegration => f.write_str("disintegration"),
            ModeVariant::LpOm(p) => write!(f, "lp-om:{}", format_p(*p)),
        }
    }
}

/// `inf` for the max-norm, otherwise the shortest decimal.
pub fn format_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else {
        p.to_string()
    }
}

/// Parses `1`, `2.5`, `inf`.
pub fn parse_p(s: &str) -> Result<f64> {
    let p = match s.trim() {
        "inf" | "Inf" | "infinity" | "∞" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad p value {other:?}")))?,
    };
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p must lie in [1, inf], got {p}")));
    }
    Ok(p)
}

impl FromStr for ModeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restricted" => Ok(ModeVariant::Restricted),
            "disintegration" => Ok(ModeVariant::Disintegration),
            other => match other.strip_prefix("lp-om:") {
                Some(p) => Ok(ModeVariant::LpOm(parse_p(p)?)),
                None => Err(Error::InvalidInput(format!("unknown mode variant {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Constraint residual required of a minimizer.
    pub constraint_tol: f64,
    pub merge_radius: f64,
    pub rank_tol: f64,
    /// Relative objective gap within which minimizers count as co-optimal.
    pub co_optimal_tol: f64,
    /// Probe length of the second-order check along the fiber.
    pub escape_step: f64,
    pub max_escapes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            max_outer: 40,
            max_inner: 1000,
            constraint_tol: 1e-8,
            merge_radius: 1e-4,
            rank_tol: DEFAULT_RANK_TOL,
            co_optimal_tol: 1e-7,
            escape_step: 1e-3,
            max_escapes: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeProblem {
    pub density: AmbientDensity,
    pub operator: ObservationOperator,
    pub y: DVector<f64>,
    pub variant: ModeVariant,
    pub starts: Vec<DVector<f64>>,
    /// Bound on the projected gradient at accepted minimizers.
    pub opt_tol: f64,
    pub options: SolverOptions,
}

impl ModeProblem {
    /// Problem with the default multi-start set (see [`compass_starts`]).
    pub fn new(density: AmbientDensity, operator: ObservationOperator, y: DVector<f64>, variant: ModeVariant) -> Self {
        let starts = compass_starts(operator.dim_ambient(), 2.0);
        Self { density, operator, y, variant, starts, opt_tol: 1e-6, options: SolverOptions::default() }
    }

    pub fn with_extra_starts(mut self, extra: impl IntoIterator<Item = DVector<f64>>) -> Self {
        self.starts.extend(extra);
        self
    }

    pub fn with_starts(mut self, starts: Vec<DVector<f64>>) -> Self {
        self.starts = starts;
        self
    }

    pub fn with_opt_tol(mut self, opt_tol: f64) -> Self {
        self.opt_tol = opt_tol;
        self
    }
}

/// Eight compass directions at `radius` in the plane; `+-radius e_i` otherwise.
pub fn compass_starts(dim: usize, radius: f64) -> Vec<DVector<f64>> {
    if dim == 2 {
        (0..8)
            .map(|k| {
                let angle = k as f64 * std::f64::consts::FRAC_PI_4;
                DVector::from_column_slice(&[radius * angle.cos(), radius * angle.sin()])
            })
            .collect()
    } else {
        (0..dim)
            .flat_map(|i| {
                [1.0, -1.0].map(|sign| {
                    let mut x = DVector::zeros(dim);
                    x[i] = sign * radius;
                    x
                })
            })
            .collect()
    }
}

fn unit_tangent(op: &ObservationOperator, x: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    if op.dim_ambient() - op.dim_obs() != 1 {
        return Err(Error::InvalidInput("l_p slice volumes in closed form need a one-dimensional fiber".into()));
    }
    let dec = decompose(&op.jacobian(x)?, rank_tol)?;
    Ok(dec.kernel_basis.column(0).into_owned())
}

/// Objective value of `problem.variant` at `x` (any regular point, on or off the fiber).
pub fn objective(problem: &ModeProblem, x: &DVector<f64>) -> Result<f64> {
    objective_parts(&problem.density, &problem.operator, problem.variant, problem.options.rank_tol, x)
}

pub(crate) fn objective_parts(
    density: &AmbientDensity,
    op: &ObservationOperator,
    variant: ModeVariant,
    rank_tol: f64,
    x: &DVector<f64>,
) -> Result<f64> {
    match variant {
        ModeVariant::Restricted => Ok(-density.log_density(x)),
        ModeVariant::Disintegration => Ok(-log_disint_unnorm(density, op, x)?),
        ModeVariant::LpOm(p) => {
            let t = unit_tangent(op, x, rank_tol)?;
            Ok(-log_disint_unnorm(density, op, x)? - lp_slice_volume(&t, p).ln())
        }
    }
}

/// The part of the objective that depends on `h`'s geometry (zero for restricted).
fn geometric_term(problem: &ModeProblem, x: &DVector<f64>) -> Result<f64> {
    let op = &problem.operator;
    match problem.variant {
        ModeVariant::Restricted => Ok(0.0),
        ModeVariant::Disintegration => Ok(gram_det(&op.jacobian(x)?)?.ln()),
        ModeVariant::LpOm(p) => {
            let t = unit_tangent(op, x, problem.options.rank_tol)?;
            Ok(gram_det(&op.jacobian(x)?)?.ln() - lp_slice_volume(&t, p).ln())
        }
    }
}

fn central_gradient<F>(f: F, x: &DVector<f64>, rel_step: f64) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        let gi = (plus - minus) / (2.0 * h);
        if !gi.is_finite() {
            return None;
        }
        g[i] = gi;
    }
    Some(g)
}

/// Objective with `+inf` at non-regular points.
fn barrier_objective(problem: &ModeProblem, x: &DVector<f64>) -> f64 {
    objective(problem, x).unwrap_or(f64::INFINITY)
}

/// Gradient of the objective: analytic density gradient plus differences of
/// the geometric term when both analytic pieces exist, otherwise central
/// differences of the full objective.
pub fn objective_gradient(problem: &ModeProblem, x: &DVector<f64>) -> Option<DVector<f64>> {
    let op = &problem.operator;
    if problem.density.has_gradient() && op.has_analytic_jacobian() {
        let grad_log = problem.density.gradient(x)?;
        let geo = central_gradient(|z| geometric_term(problem, z).unwrap_or(f64::NAN), x, 1e-6)?;
        Some(geo - grad_log)
    } else {
        let step = if op.has_analytic_jacobian() { 1e-6 } else { 1e-4 };
        central_gradient(|z| barrier_objective(problem, z), x, step)
    }
}

/// `|(I - J^T (J J^T)^{-1} J) grad|_2`.
fn projected_gradient(jac: &DMatrix<f64>, grad: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let gram = jac * jac.transpose();
    let chol = gram.cholesky()?;
    let coeffs = chol.solve(&(jac * grad));
    let projected = grad - jac.transpose() * &coeffs;
    Some((projected.norm(), -coeffs))
}

struct BfgsOutcome {
    x: DVector<f64>,
}

/// BFGS with Armijo backtracking on a smooth function returning `(value, gradient)`.
fn bfgs<F>(fun: F, x0: DVector<f64>, grad_tol: f64, max_iter: usize) -> Option<BfgsOutcome>
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = fun(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    for _ in 0..max_iter {
        if g.amax() <= grad_tol {
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * alpha;
            if let Some((ft, gt)) = fun(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if !scaled {
                h_inv *= sy / yv.norm_squared();
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let stalled = (f_new - fx).abs() <= 1e-16 * fx.abs().max(1.0) && s.amax() <= 1e-15 * x.amax().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
    Some(BfgsOutcome { x })
}

/// A constrained local minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct Minimizer {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `|h(x) - y|_inf`.
    pub residual: f64,
    /// Least-squares Lagrange multiplier estimate.
    pub multiplier: Vec<f64>,
    pub projected_gradient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeResult {
    pub variant: String,
    pub y: Vec<f64>,
    /// Co-optimal global minimizers among all converged starts: the weak modes.
    pub minimizers: Vec<Minimizer>,
    /// Every distinct constrained local minimizer found, sorted by objective.
    pub local_minimizers: Vec<Minimizer>,
    pub starts_failed: usize,
    pub failures: Vec<String>,
    /// Whether duplicate minimizers from different starts were collapsed.
    pub merged: bool,
}

fn evaluate_minimizer(problem: &ModeProblem, x: &DVector<f64>) -> Result<Minimizer> {
    let op = &problem.operator;
    let objective = objective(problem, x)?;
    let residual = (op.eval(x)? - &problem.y).amax();
    let grad = objective_gradient(problem, x).ok_or_else(|| Error::NonFinite("objective gradient".into()))?;
    let jac = op.jacobian(x)?;
    let (pg, multiplier) =
        projected_gradient(&jac, &grad).ok_or(Error::RankDeficient { sigma_min: 0.0, sigma_max: jac.norm() })?;
    Ok(Minimizer {
        x: x.iter().cloned().collect(),
        objective,
        residual,
        multiplier: multiplier.iter().cloned().collect(),
        projected_gradient: pg,
    })
}

/// Augmented-Lagrangian run from one start, ending on the fiber.
fn augmented_lagrangian(problem: &ModeProblem, start: &DVector<f64>) -> Result<DVector<f64>> {
    let opts = &problem.options;
    let op = &problem.operator;
    let y = &problem.y;
    let mut x = start.clone();
    let mut lambda = DVector::zeros(op.dim_obs());
    let mut rho = opts.initial_penalty;
    let mut residual = f64::INFINITY;

    for _ in 0..opts.max_outer {
        let lagrangian = |z: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
            let f = objective(problem, z).ok()?;
            let c = op.eval(z).ok()? - y;
            let jac = op.jacobian(z).ok()?;
            let grad = objective_gradient(problem, z)?;
            let value = f + lambda.dot(&c) + 0.5 * rho * c.norm_squared();
            let g = grad + jac.transpose() * (&lambda + &c * rho);
            Some((value, g))
        };
        let inner_tol = (1e-3 * problem.opt_tol).max(1e-13);
        let outcome = bfgs(lagrangian, x.clone(), inner_tol, opts.max_inner)
            .ok_or_else(|| Error::NonFinite("augmented Lagrangian left the regular set".into()))?;
        x = outcome.x;
        let c = op.eval(&x)? - y;
        residual = c.amax();
        lambda += &c * rho;
        let grad = objective_gradient(problem, &x).ok_or_else(|| Error::NonFinite("objective gradient".into()))?;
        let jac = op.jacobian(&x)?;
        let pg = projected_gradient(&jac, &grad).map_or(f64::INFINITY, |p| p.0);
        if residual <= 1e-3 * opts.constraint_tol && pg <= 0.1 * problem.opt_tol {
            break;
        }
        rho = (rho * opts.penalty_growth).min(opts.max_penalty);
    }
    if residual > 1e-3 {
        return Err(Error::NoConvergence { iterations: opts.max_outer, residual });
    }
    let (x, _) = project_to_fiber(op, y, &x, 1e-14, 50, opts.rank_tol)?;
    Ok(x)
}

/// Moves along the fiber by `+-escape_step` in every kernel direction and
/// returns a strictly better on-fiber point, if any.
fn descent_along_fiber(problem: &ModeProblem, x: &DVector<f64>, fx: f64) -> Result<Option<DVector<f64>>> {
    let op = &problem.operator;
    let opts = &problem.options;
    let dec = decompose(&op.jacobian(x)?, opts.rank_tol)?;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..dec.kernel_basis.ncols() {
        let t = dec.kernel_basis.column(k).into_owned();
        for sign in [1.0, -1.0] {
            let probe = x + &t * (sign * opts.escape_step);
            let Ok((p, _)) = project_to_fiber(op, &problem.y, &probe, 1e-14, 50, opts.rank_tol) else {
                continue;
            };
            let fp = barrier_objective(problem, &p);
            if fp < fx - 1e-13 * fx.abs().max(1.0) && best.as_ref().is_none_or(|b| fp < b.0) {
                best = Some((fp, p));
            }
        }
    }
    Ok(best.map(|b| b.1))
}

fn solve_from(problem: &ModeProblem, start: &DVector<f64>) -> Result<Minimizer> {
    let mut x = augmented_lagrangian(problem, start)?;
    for _ in 0..problem.options.max_escapes {
        let fx = objective(problem, &x)?;
        match descent_along_fiber(problem, &x, fx)? {
            Some(better) => x = augmented_lagrangian(problem, &better)?,
            None => break,
        }
    }
    let m = evaluate_minimizer(problem, &x)?;
    if m.residual > problem.options.constraint_tol {
        return Err(Error::NoConvergence { iterations: problem.options.max_outer, residual: m.residual });
    }
    if !(m.projected_gradient <= problem.opt_tol) {
        return Err(Error::NoConvergence { iterations: problem.options.max_outer, residual: m.projected_gradient });
    }
    Ok(m)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Multi-start constrained minimization.
///
/// Starts run independently (in parallel); candidates are then sorted by
/// objective and point, deduplicated within the merge radius, and every
/// minimizer within the co-optimality gap of the best is reported as a mode.
pub fn solve(problem: &ModeProblem) -> Result<ModeResult> {
    if problem.y.len() != problem.operator.dim_obs() {
        return Err(Error::DimensionMismatch { expected: problem.operator.dim_obs(), got: problem.y.len() });
    }
    if problem.starts.is_empty() {
        return Err(Error::InvalidInput("no optimizer starts".into()));
    }
    let outcomes: Vec<Result<Minimizer>> = problem.starts.par_iter().map(|s| solve_from(problem, s)).collect();

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(m) => candidates.push(m),
            Err(e) => failures.push(format!("start {k}: {e}")),
        }
    }
    if candidates.is_empty() {
        return Err(Error::AllStartsFailed { starts: problem.starts.len() });
    }
    candidates.sort_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| lexicographic(&a.x, &b.x)));
    let total = candidates.len();
    let mut distinct: Vec<Minimizer> = Vec::new();
    for c in candidates {
        if distinct.iter().all(|d| distance(&d.x, &c.x) > problem.options.merge_radius) {
            distinct.push(c);
        }
    }
    let best = distinct[0].objective;
    let gap = problem.options.co_optimal_tol * best.abs().max(1.0);
    let minimizers = distinct.iter().filter(|m| m.objective <= best + gap).cloned().collect();
    Ok(ModeResult {
        variant: problem.variant.to_string(),
        y: problem.y.iter().cloned().collect(),
        minimizers,
        merged: distinct.len() < total,
        local_minimizers: distinct,
        starts_failed: failures.len(),
        failures,
    })
}

/// A discrete local minimum found by [`scan_fiber`].
#[derive(Debug, Clone, Serialize)]
pub struct ScanMinimum {
    pub index: usize,
    pub s: f64,
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Absolute tolerance under which neighbouring values form a plateau.
pub const PLATEAU_TOL: f64 = 1e-12;

/// Strict discrete local minima of `values`, circular when `closed`.
///
/// Runs of neighbours within `tie_tol` collapse to one plateau whose middle
/// node represents it. A closed sequence that is one plateau yields a single
/// minimum at index 0; plateaus touching the ends of an open sequence are
/// never minima.
pub fn local_minima(values: &[f64], closed: bool, tie_tol: f64) -> Vec<usize> {
    extrema(values, closed, tie_tol, |run, neighbour| run < neighbour)
}

/// Strict discrete local maxima, same conventions as [`local_minima`].
pub fn local_maxima(values: &[f64], closed: bool, tie_tol: f64) -> Vec<usize> {
    extrema(values, closed, tie_tol, |run, neighbour| run > neighbour)
}

fn extrema<F>(values: &[f64], closed: bool, tie_tol: f64, better: F) -> Vec<usize>
where
    F: Fn(f64, f64) -> bool,
{
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let tie = |i: usize, j: usize| (values[i] - values[j]).abs() <= tie_tol;
    if closed {
        // Rotate so index `start` begins a run.
        let Some(start) = (0..n).find(|&k| !tie((k + n - 1) % n, k)) else {
            return vec![0];
        };
        let mut found = Vec::new();
        let mut k = 0;
        while k < n {
            let first = (start + k) % n;
            let mut len = 1;
            while len < n && tie((start + k + len - 1) % n, (start + k + len) % n) {
                len += 1;
            }
            let last = (start + k + len - 1) % n;
            let before = values[(first + n - 1) % n];
            let after = values[(last + 1) % n];
            if better(values[first], before) && better(values[last], after) {
                found.push((first + (len - 1) / 2) % n);
            }
            k += len;
        }
        found.sort_unstable();
        found
    } else {
        let mut found = Vec::new();
        let mut first = 0;
        while first < n {
            let mut last = first;
            while last + 1 < n && tie(last, last + 1) {
                last += 1;
            }
            if first > 0 && last + 1 < n && better(values[first], values[first - 1]) && better(values[last], values[last + 1]) {
                found.push(first + (last - first) / 2);
            }
            first = last + 1;
        }
        found
    }
}

/// Objective at every trace node (`+inf` where undefined).
pub fn fiber_objective(problem: &ModeProblem, trace: &FiberTrace) -> Vec<f64> {
    trace.nodes.par_iter().map(|x| barrier_objective(problem, x)).collect()
}

/// Exhaustive discrete search: strict local minima of the objective along the trace.
pub fn scan_fiber(problem: &ModeProblem, trace: &FiberTrace) -> Vec<ScanMinimum> {
    let values = fiber_objective(problem, trace);
    local_minima(&values, trace.closed, PLATEAU_TOL)
        .into_iter()
        .map(|i| ScanMinimum {
            index: i,
            s: trace.arclen[i],
            x: trace.nodes[i].iter().cloned().collect(),
            objective: values[i],
        })
        .collect()
}
