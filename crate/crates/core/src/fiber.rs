//! Level-set tracing for curve fibers `h^{-1}({y})` (`d - n = 1`) by
//! predictor-corrector continuation, plus trapezoid quadrature against the
//! fiber's arc-length measure.

use nalgebra::{DMatrix, DVector};

use crate::density::AmbientDensity;
use crate::error::{Error, Result};
use crate::geometry::{decompose, ObservationOperator, DEFAULT_RANK_TOL};

/// Knobs for seeding and tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    pub step: f64,
    pub corrector_tol: f64,
    pub max_nodes: usize,
    pub max_corrector_iter: usize,
    pub rank_tol: f64,
    /// Open fibers stop once the ambient log-density has dropped this many
    /// nats below its running maximum along the trace.
    pub truncation_nats: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            corrector_tol: 1e-10,
            max_nodes: 1_000_000,
            max_corrector_iter: 100,
            rank_tol: DEFAULT_RANK_TOL,
            truncation_nats: 40.0,
        }
    }
}

impl TraceOptions {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }
}

/// A discretized connected component of a curve fiber.
#[derive(Debug, Clone)]
pub struct FiberTrace {
    pub y: DVector<f64>,
    pub nodes: Vec<DVector<f64>>,
    /// Polyline arc length, `arclen[0] == 0`.
    pub arclen: Vec<f64>,
    /// Unit tangents oriented along increasing arc length.
    pub tangents: Vec<DVector<f64>>,
    /// `|h(node) - y|_inf` per node.
    pub residuals: Vec<f64>,
    pub closed: bool,
    /// Open trace cut off by the density criterion.
    pub truncated: bool,
    pub step: f64,
    pub max_residual: f64,
    /// Index of the seed node.
    pub seed_index: usize,
}

impl FiberTrace {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |x| x.len())
    }

    /// Length of the segment closing the loop (0 for open traces).
    pub fn wrap_length(&self) -> f64 {
        if self.closed && self.nodes.len() > 1 {
            (&self.nodes[0] - &self.nodes[self.nodes.len() - 1]).norm()
        } else {
            0.0
        }
    }

    /// Total polyline length including the wrap segment.
    pub fn total_length(&self) -> f64 {
        self.arclen.last().copied().unwrap_or(0.0) + self.wrap_length()
    }

    /// `(i, j, length)` for every quadrature segment.
    fn segments(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.nodes.len();
        let open = (0..n.saturating_sub(1)).map(move |i| (i, i + 1, self.arclen[i + 1] - self.arclen[i]));
        let wrap = (self.closed && n > 1).then(|| (n - 1, 0, self.wrap_length()));
        open.chain(wrap)
    }

    /// Composite trapezoid weights over arc length.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (i, j, len) in self.segments() {
            w[i] += 0.5 * len;
            w[j] += 0.5 * len;
        }
        w
    }

    /// Arc distance between two nodes, measured the short way round on closed traces.
    pub fn arc_distance(&self, i: usize, j: usize) -> f64 {
        let direct = (self.arclen[i] - self.arclen[j]).abs();
        if self.closed {
            direct.min(self.total_length() - direct)
        } else {
            direct
        }
    }

    /// Index of the node closest (Euclidean) to `x`.
    pub fn nearest_node(&self, x: &DVector<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, node) in self.nodes.iter().enumerate() {
            let dist = (node - x).norm();
            if dist < best.1 {
                best = (i, dist);
            }
        }
        best.0
    }
}

fn obs_residual(op: &ObservationOperator, y: &DVector<f64>, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let r = op.eval(x)? - y;
    let res = r.amax();
    Ok((r, res))
}

fn check_regular(jac: &DMatrix<f64>, rank_tol: f64) -> Result<()> {
    let sv: Vec<f64> = if jac.nrows() == 1 {
        vec![jac.norm()]
    } else {
        jac.singular_values().iter().cloned().collect()
    };
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin > rank_tol * smax.max(1.0) {
        Ok(())
    } else {
        Err(Error::RankDeficient { sigma_min: smin, sigma_max: smax })
    }
}

/// Minimum-norm Gauss-Newton projection onto `h^{-1}(y)`.
///
/// Iterates until the residual is within `tol` and the last step has
/// stalled at rounding level, so converged points sit on the fiber to
/// machine precision. Iterates approaching a singular point fail with
/// `RankDeficient`.
pub fn project_to_fiber(
    op: &ObservationOperator,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    rank_tol: f64,
) -> Result<(DVector<f64>, f64)> {
    let mut x = x0.clone();
    let mut last_step = f64::INFINITY;
    let mut res = f64::INFINITY;
    for _ in 0..max_iter {
        let (r, current) = obs_residual(op, y, &x)?;
        res = current;
        let jac = op.jacobian(&x)?;
        check_regular(&jac, rank_tol)?;
        if res <= tol && last_step <= 1e-12 * x.amax().max(1.0) {
            return Ok((x, res));
        }
        let gram = &jac * jac.transpose();
        let coeffs = gram
            .cholesky()
            .ok_or(Error::RankDeficient { sigma_min: 0.0, sigma_max: jac.norm() })?
            .solve(&r);
        let delta = jac.transpose() * coeffs;
        last_step = delta.amax();
        x -= delta;
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("Gauss-Newton iterate diverged".into()));
        }
    }
    if res <= tol {
        // Residual is fine but the iterates keep creeping; accept.
        let (_, res) = obs_residual(op, y, &x)?;
        if res <= tol {
            return Ok((x, res));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

/// Root-finds a regular point on `h^{-1}(y)` starting from `x0`.
pub fn find_seed(op: &ObservationOperator, y: &DVector<f64>, x0: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    if y.len() != op.dim_obs() {
        return Err(Error::DimensionMismatch { expected: op.dim_obs(), got: y.len() });
    }
    if !x0.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("initial guess".into()));
    }
    project_to_fiber(op, y, x0, tol, 100, DEFAULT_RANK_TOL).map(|(x, _)| x)
}

/// Unit kernel direction at `x` for a curve fiber.
fn kernel_direction(op: &ObservationOperator, x: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    let dec = decompose(&op.jacobian(x)?, rank_tol)?;
    Ok(dec.kernel_basis.column(0).into_owned())
}

/// Deterministic tangent orientation at the seed: in the plane the kernel
/// vector is the 90-degree rotation of the gradient; otherwise the largest
/// component is made positive.
fn seed_tangent(op: &ObservationOperator, x: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    let t = kernel_direction(op, x, rank_tol)?;
    if op.dim_ambient() == 2 {
        return Ok(t);
    }
    let imax = t.iamax();
    Ok(if t[imax] < 0.0 { -t } else { t })
}

enum MarchEnd {
    Closed,
    Truncated,
}

struct March<'a> {
    op: &'a ObservationOperator,
    y: &'a DVector<f64>,
    opts: &'a TraceOptions,
    truncation: Option<&'a AmbientDensity>,
    running_max: f64,
}

impl March<'_> {
    fn run(
        &mut self,
        seed: &DVector<f64>,
        seed_tangent: &DVector<f64>,
        allow_closure: bool,
        budget: usize,
        out: &mut Vec<(DVector<f64>, DVector<f64>, f64)>,
    ) -> Result<MarchEnd> {
        let step = self.opts.step;
        let mut x = seed.clone();
        let mut t = seed_tangent.clone();
        loop {
            if out.len() >= budget {
                return Err(Error::MaxNodesExceeded { max_nodes: self.opts.max_nodes });
            }
            let predicted = &x + &t * step;
            let (x_new, res) = project_to_fiber(
                self.op,
                self.y,
                &predicted,
                self.opts.corrector_tol,
                self.opts.max_corrector_iter,
                self.opts.rank_tol,
            )?;
            let spacing = (&x_new - &x).norm();
            if !(spacing >= 0.2 * step && spacing <= 2.0 * step) {
                return Err(Error::TraceBreakdown {
                    node: out.len(),
                    reason: format!("node spacing {spacing:e} outside [0.2, 2] x step {step:e}"),
                });
            }
            let mut t_new = kernel_direction(self.op, &x_new, self.opts.rank_tol)?;
            if t_new.dot(&t) < 0.0 {
                t_new = -t_new;
            }
            let near_seed = (&x_new - seed).norm() <= 1.5 * step;
            let aligned = t_new.dot(seed_tangent) > 0.0;
            out.push((x_new.clone(), t_new.clone(), res));

            if allow_closure && out.len() >= 10 && near_seed && aligned {
                return Ok(MarchEnd::Closed);
            }
            if let Some(density) = self.truncation {
                let lp = density.log_density(&x_new);
                self.running_max = self.running_max.max(lp);
                if lp < self.running_max - self.opts.truncation_nats {
                    return Ok(MarchEnd::Truncated);
                }
            }
            x = x_new;
            t = t_new;
        }
    }
}

/// Traces the connected component of `h^{-1}(y)` through `seed`.
///
/// Closed components end when the march returns to the seed. Open
/// components require a `truncation` density and are traced in both
/// directions until it has decayed by `truncation_nats`; without one they
/// run into `MaxNodesExceeded`.
pub fn trace_fiber(
    op: &ObservationOperator,
    y: &DVector<f64>,
    seed: &DVector<f64>,
    opts: &TraceOptions,
    truncation: Option<&AmbientDensity>,
) -> Result<FiberTrace> {
    if op.dim_ambient() - op.dim_obs() != 1 {
        return Err(Error::InvalidInput(format!(
            "curve tracing needs a one-dimensional fiber, got dimension {}",
            op.dim_ambient() - op.dim_obs()
        )));
    }
    if y.len() != op.dim_obs() {
        return Err(Error::DimensionMismatch { expected: op.dim_obs(), got: y.len() });
    }
    if !(opts.step > 0.0) {
        return Err(Error::InvalidInput("trace step must be positive".into()));
    }
    let (seed, seed_res) = project_to_fiber(op, y, seed, opts.corrector_tol, opts.max_corrector_iter, opts.rank_tol)?;
    let t0 = seed_tangent(op, &seed, opts.rank_tol)?;

    let mut march = March {
        op,
        y,
        opts,
        truncation,
        running_max: truncation.map_or(f64::NEG_INFINITY, |d| d.log_density(&seed)),
    };
    let budget = opts.max_nodes.saturating_sub(1);
    let mut forward = Vec::new();
    let end = march.run(&seed, &t0, true, budget, &mut forward)?;

    let mut points: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    let (closed, truncated, seed_index) = match end {
        MarchEnd::Closed => {
            points.push((seed, t0, seed_res));
            points.extend(forward);
            (true, false, 0)
        }
        MarchEnd::Truncated => {
            let mut backward = Vec::new();
            march.run(&seed, &(-&t0), false, budget - forward.len(), &mut backward)?;
            let seed_index = backward.len();
            points.extend(backward.into_iter().rev().map(|(x, t, r)| (x, -t, r)));
            points.push((seed, t0, seed_res));
            points.extend(forward);
            (false, true, seed_index)
        }
    };

    let mut arclen = Vec::with_capacity(points.len());
    let mut s = 0.0;
    for (k, (x, _, _)) in points.iter().enumerate() {
        if k > 0 {
            s += (x - &points[k - 1].0).norm();
        }
        arclen.push(s);
    }
    let max_residual = points.iter().map(|p| p.2).fold(0.0, f64::max);
    let (mut nodes, mut tangents, mut residuals) = (Vec::new(), Vec::new(), Vec::new());
    for (x, t, r) in points {
        nodes.push(x);
        tangents.push(t);
        residuals.push(r);
    }
    Ok(FiberTrace {
        y: y.clone(),
        nodes,
        arclen,
        tangents,
        residuals,
        closed,
        truncated,
        step: opts.step,
        max_residual,
        seed_index,
    })
}

/// `int f d(lambda_fiber)` by the composite trapezoid rule.
pub fn fiber_integral<F>(trace: &FiberTrace, f: F) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    trace
        .trapezoid_weights()
        .iter()
        .zip(&trace.nodes)
        .map(|(w, x)| w * f(x))
        .sum()
}

/// Fraction `tau` of the chord from `inside` to `outside` still in the set.
fn crossing_fraction<A>(inside: &DVector<f64>, outside: &DVector<f64>, set: &A) -> f64
where
    A: Fn(&DVector<f64>) -> bool + ?Sized,
{
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let p = inside + (outside - inside) * mid;
        if set(&p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Trapezoid weights restricted to a set.
///
/// Segments crossing the boundary contribute the exact integral of the
/// linear interpolant over the part of the chord inside the set, with the
/// crossing located by bisection.
pub fn restrict_to_set<A>(trace: &FiberTrace, set: &A) -> Vec<f64>
where
    A: Fn(&DVector<f64>) -> bool + ?Sized,
{
    let inside: Vec<bool> = trace.nodes.iter().map(set).collect();
    let mut w = vec![0.0; trace.nodes.len()];
    for (i, j, len) in trace.segments() {
        match (inside[i], inside[j]) {
            (true, true) => {
                w[i] += 0.5 * len;
                w[j] += 0.5 * len;
            }
            (false, false) => {}
            (true, false) | (false, true) => {
                let (a, b) = if inside[i] { (i, j) } else { (j, i) };
                let tau = crossing_fraction(&trace.nodes[a], &trace.nodes[b], set);
                w[a] += len * (tau - 0.5 * tau * tau);
                w[b] += len * 0.5 * tau * tau;
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn y(val: f64) -> DVector<f64> {
        DVector::from_element(1, val)
    }

    /// Ellipse perimeter by the periodic trapezoid rule in the angle, which
    /// converges geometrically for this analytic integrand.
    fn ellipse_perimeter(a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        (0..n)
            .map(|k| {
                let t = k as f64 * h;
                (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn perimeter_oracle_is_converged() {
        let p = ellipse_perimeter(1.01f64.sqrt(), 0.5 * 1.01f64.sqrt());
        assert_relative_eq!(p, 4.868384979, epsilon = 1e-8);
        assert_relative_eq!(ellipse_perimeter(2.0, 2.0), 4.0 * std::f64::consts::PI, max_relative = 1e-14);
    }

    #[test]
    fn find_seed_examples() {
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let s = find_seed(&ell, &y(1.01), &v(&[2.0, 0.0]), 1e-10).unwrap();
        assert!((s[0] - 1.01f64.sqrt()).abs() <= 1e-10);
        assert_eq!(s[1], 0.0);

        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        let s = find_seed(&coord, &y(0.7), &v(&[0.0, 5.0]), 1e-10).unwrap();
        assert_relative_eq!(s[0], 0.7, max_relative = 1e-15);
        assert_eq!(s[1], 5.0);

        let err = find_seed(&ell, &y(1.01), &v(&[0.0, 0.0]), 1e-10).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn find_seed_detects_singular_value() {
        // y = 0 is attained only at the singular origin.
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let err = find_seed(&ell, &y(0.0), &v(&[1.0, 0.0]), 1e-10).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
    }

    #[test]
    fn ellipse_trace_is_closed_with_perimeter_length() {
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let opts = TraceOptions::default();
        let seed = find_seed(&ell, &y(1.01), &v(&[2.0, 0.0]), 1e-10).unwrap();
        let trace = trace_fiber(&ell, &y(1.01), &seed, &opts, None).unwrap();
        assert!(trace.closed);
        assert!(trace.max_residual <= 1e-10);
        let perimeter = ellipse_perimeter(1.01f64.sqrt(), 0.5 * 1.01f64.sqrt());
        assert!((trace.total_length() - perimeter).abs() < 1e-5, "{}", trace.total_length());

        for k in 1..trace.len() {
            let gap = trace.arclen[k] - trace.arclen[k - 1];
            assert!(gap >= 0.2 * opts.step && gap <= 2.0 * opts.step);
        }
        assert!(trace.wrap_length() <= 1.5 * opts.step);
        for (x, t) in trace.nodes.iter().zip(&trace.tangents) {
            let j = ell.jacobian(x).unwrap();
            assert!((j.row(0).transpose().dot(t)).abs() <= 1e-8 * j.norm());
            assert_relative_eq!(t.norm(), 1.0, max_relative = 1e-12);
            assert!(ell.is_regular_point(x, DEFAULT_RANK_TOL));
        }
    }

    #[test]
    fn circle_trace_length() {
        let circle = ObservationOperator::sphere(0.0, 2).unwrap();
        let trace = trace_fiber(&circle, &y(4.0), &v(&[2.0, 0.0]), &TraceOptions::default(), None).unwrap();
        assert!(trace.closed);
        assert!((trace.total_length() - 4.0 * std::f64::consts::PI).abs() <= 1e-3);
    }

    #[test]
    fn unbounded_line_exceeds_node_budget() {
        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        let opts = TraceOptions::default().with_step(1e-2).with_max_nodes(10_000);
        let err = trace_fiber(&coord, &y(0.0), &v(&[0.0, 0.0]), &opts, None).unwrap_err();
        assert!(matches!(err, Error::MaxNodesExceeded { .. }));
    }

    #[test]
    fn open_line_is_truncated_by_density() {
        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        let gauss = AmbientDensity::standard_gaussian(2);
        let trace = trace_fiber(&coord, &y(0.7), &v(&[0.7, 0.3]), &TraceOptions::default(), Some(&gauss)).unwrap();
        assert!(!trace.closed && trace.truncated);
        // 40 nats below the maximum of exp(-x2^2/2): |x2| ~ sqrt(80).
        let lo = trace.nodes[0][1];
        let hi = trace.nodes[trace.len() - 1][1];
        assert!(lo < -8.9 && lo > -9.0, "{lo}");
        assert!(hi > 8.9 && hi < 9.0, "{hi}");
        assert!(trace.arclen.windows(2).all(|w| w[1] > w[0]));
        assert!(trace.tangents.iter().all(|t| t[1] > 0.0));
    }

    #[test]
    fn fiber_integral_examples() {
        let circle = ObservationOperator::sphere(0.0, 2).unwrap();
        let step = 1e-3;
        let trace = trace_fiber(&circle, &y(4.0), &v(&[2.0, 0.0]), &TraceOptions::default(), None).unwrap();
        assert!((fiber_integral(&trace, |_| 1.0) - 4.0 * std::f64::consts::PI).abs() <= 1e-3);
        let half = fiber_integral(&trace, |x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        assert!((half - 2.0 * std::f64::consts::PI).abs() <= step);

        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        let gauss = AmbientDensity::standard_gaussian(2);
        let line = trace_fiber(&coord, &y(0.7), &v(&[0.7, 0.0]), &TraceOptions::default(), Some(&gauss)).unwrap();
        let total = fiber_integral(&line, |x| gauss.log_density(x).exp());
        let expected = (-0.49f64 / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(expected, 0.3122539, epsilon = 1e-7);
        assert!((total - expected).abs() <= 1e-6, "{total}");
    }

    #[test]
    fn restrict_to_set_examples() {
        let circle = ObservationOperator::sphere(0.0, 2).unwrap();
        let step = 1e-3;
        let trace = trace_fiber(&circle, &y(4.0), &v(&[2.0, 0.0]), &TraceOptions::default(), None).unwrap();
        let all: f64 = restrict_to_set(&trace, &|_: &DVector<f64>| true).iter().sum();
        assert_relative_eq!(all, trace.total_length(), max_relative = 1e-12);
        let none: f64 = restrict_to_set(&trace, &|_: &DVector<f64>| false).iter().sum();
        assert_eq!(none, 0.0);
        let upper: f64 = restrict_to_set(&trace, &|x: &DVector<f64>| x[1] > 0.0).iter().sum();
        assert!((upper - 2.0 * std::f64::consts::PI).abs() <= step);
        // Interpolated crossings make the half-plane split much sharper than one step.
        assert!((upper - 2.0 * std::f64::consts::PI).abs() <= 1e-5);
    }

    #[test]
    fn reversed_orientation_gives_same_node_set() {
        // Seeding on the other side of the ellipse flips the traversal direction
        // relative to the first trace.
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let opts = TraceOptions::default();
        let a = trace_fiber(&ell, &y(1.01), &v(&[1.01f64.sqrt(), 0.0]), &opts, None).unwrap();
        let b = trace_fiber(&ell, &y(1.01), &v(&[-(1.01f64.sqrt()), 0.0]), &opts, None).unwrap();
        let hausdorff = |p: &FiberTrace, q: &FiberTrace| {
            p.nodes
                .iter()
                .map(|x| (&q.nodes[q.nearest_node(x)] - x).norm())
                .fold(0.0, f64::max)
        };
        assert!(hausdorff(&a, &b) <= opts.step);
        assert!(hausdorff(&b, &a) <= opts.step);
    }

    #[test]
    fn arc_length_converges_quadratically() {
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let exact = ellipse_perimeter(1.01f64.sqrt(), 0.5 * 1.01f64.sqrt());
        let errors: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&step| {
                let opts = TraceOptions::default().with_step(step);
                let t = trace_fiber(&ell, &y(1.01), &v(&[1.01f64.sqrt(), 0.0]), &opts, None).unwrap();
                exact - t.total_length()
            })
            .collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}, errors {errors:?}");
        }
    }

    #[test]
    fn rejects_surface_fibers() {
        let sphere3 = ObservationOperator::sphere(0.0, 3).unwrap();
        let err = trace_fiber(&sphere3, &y(1.0), &v(&[1.0, 0.0, 0.0]), &TraceOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
