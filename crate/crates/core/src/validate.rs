//! Numerical checks of the disintegration identities: the law of total
//! probability by Monte Carlo, and the product, pushforward, equivalent
//! observation, Bayes, dominated and restriction lemmas deterministically.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{log_disint_unnorm, normalize_on_fiber, AmbientDensity, FiberDensityProfile, ProfileVariant};
use crate::error::{Error, Result};
use crate::fiber::{find_seed, trace_fiber, FiberTrace, TraceOptions};
use crate::geometry::{decompose, ObservationOperator, DEFAULT_RANK_TOL};

/// Maximum fraction of Monte Carlo samples whose fiber may be discarded.
pub const MAX_DISCARD_FRACTION: f64 = 1e-3;
/// Multiple of the standard error allowed between the two sides of a Monte Carlo check.
pub const SE_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub check: String,
    /// The case within the check (predicate, matrix, weight, ...).
    pub case: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Combined standard error of `lhs - rhs` (Monte Carlo checks only).
    pub std_error: Option<f64>,
    pub lhs_std_error: Option<f64>,
    pub rhs_std_error: Option<f64>,
    /// Absolute tolerance on `|lhs - rhs|` (deterministic checks only).
    pub tolerance: Option<f64>,
    pub n_samples: usize,
    pub discarded: usize,
    pub seed: Option<u64>,
    pub verdict: Verdict,
    /// Wall time; kept out of serialized output so reports are reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ValidationReport {
    fn deterministic(check: &str, case: impl Into<String>, error: f64, tolerance: f64, started: Instant) -> Self {
        let verdict = if !error.is_finite() {
            Verdict::Inconclusive
        } else if error <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            check: check.to_string(),
            case: case.into(),
            lhs: error,
            rhs: 0.0,
            std_error: None,
            lhs_std_error: None,
            rhs_std_error: None,
            tolerance: Some(tolerance),
            n_samples: 0,
            discarded: 0,
            seed: None,
            verdict,
            runtime_s: started.elapsed().as_secs_f64(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `(lhs - rhs) / std_error` for Monte Carlo reports.
    pub fn z_score(&self) -> Option<f64> {
        self.std_error.filter(|s| *s > 0.0).map(|s| (self.lhs - self.rhs) / s)
    }
}

/// Measurable test sets in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// `normal . x > offset`.
    HalfPlane { normal: Vec<f64>, offset: f64 },
    /// `|x_axis - center| < half_width` (axis is 0-based).
    Band { axis: usize, center: f64, half_width: f64 },
    /// Open Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    All,
    Empty,
}

impl Region {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Region::HalfPlane { normal, offset } => normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() > *offset,
            Region::Band { axis, center, half_width } => (x[*axis] - center).abs() < *half_width,
            Region::Ball { center, radius } => {
                center.iter().zip(x.iter()).map(|(c, v)| (v - c).powi(2)).sum::<f64>() < radius * radius
            }
            Region::All => true,
            Region::Empty => false,
        }
    }

    pub fn name(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Region::HalfPlane { normal, offset } => format!("halfplane:[{}]>{offset}", list(normal)),
            Region::Band { axis, center, half_width } => format!("band:|x{}-{center}|<{half_width}", axis + 1),
            Region::Ball { center, radius } => format!("ball:[{}],{radius}", list(center)),
            Region::All => "all".into(),
            Region::Empty => "empty".into(),
        }
    }
}

/// The ten planar test sets used for the total-probability suite: half-planes, bands and discs.
pub fn default_regions() -> Vec<Region> {
    let half = |normal: [f64; 2], offset| Region::HalfPlane { normal: normal.to_vec(), offset };
    let band = |axis, half_width| Region::Band { axis, center: 0.0, half_width };
    let ball = |center: [f64; 2], radius| Region::Ball { center: center.to_vec(), radius };
    vec![
        half([1.0, 0.0], 0.0),
        half([1.0, 0.0], 0.4),
        half([0.0, 1.0], 0.0),
        half([0.0, 1.0], 0.25),
        half([1.0, 1.0], 0.5),
        band(1, 0.3),
        band(0, 0.5),
        ball([0.0, 0.0], 1.0),
        ball([0.5, 0.0], 0.7),
        ball([0.0, 0.5], 0.5),
    ]
}

/// Trace step used for the fiber through a sampled point: one hundredth of
/// its norm, clamped to `[1e-4, 1e-2]`.
pub fn sample_trace_step(x: &DVector<f64>) -> f64 {
    (0.01 * x.norm()).clamp(1e-4, 1e-2)
}

/// Conditional masses of every region on the fiber through `x`, or `None` for a discarded sample.
fn conditional_masses(
    density: &AmbientDensity,
    op: &ObservationOperator,
    x: &DVector<f64>,
    regions: &[Region],
    variant: ProfileVariant,
) -> Option<Vec<f64>> {
    if !op.is_regular_point(x, DEFAULT_RANK_TOL) {
        return None;
    }
    let y = op.eval(x).ok()?;
    let opts = TraceOptions::default().with_step(sample_trace_step(x)).with_max_nodes(200_000);
    let trace = Arc::new(trace_fiber(op, &y, x, &opts, Some(density)).ok()?);
    let profile = normalize_on_fiber(density, op, &trace, variant).ok()?;
    Some(regions.iter().map(|r| profile.mass_of(&|z: &DVector<f64>| r.contains(z))).collect())
}

/// Monte Carlo check of `mu(A) = E_{x ~ mu}[ mu^{h(x)}(A) ]`.
///
/// Sample `i` draws from its own ChaCha8 stream `i` under `seed`, so the
/// estimate does not depend on scheduling. The fiber through each sample is
/// traced as a single connected component. Both sides are estimated from the
/// same draws, and the verdict uses the standard error of the paired
/// differences `1_A(x_i) - mu^{y_i}(A)`. `variant` selects the fiber density
/// under test; only the disintegration is expected to pass in general.
pub fn check_total_probability(
    density: &AmbientDensity,
    op: &ObservationOperator,
    region: &Region,
    variant: ProfileVariant,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let mut reports = check_total_probability_many(density, op, std::slice::from_ref(region), variant, samples, seed)?;
    Ok(reports.remove(0))
}

/// [`check_total_probability`] for several regions on the same draws and traces.
pub fn check_total_probability_many(
    density: &AmbientDensity,
    op: &ObservationOperator,
    regions: &[Region],
    variant: ProfileVariant,
    samples: usize,
    seed: u64,
) -> Result<Vec<ValidationReport>> {
    let started = Instant::now();
    if !density.has_sampler() {
        return Err(Error::InvalidInput(format!("density {} has no sampler", density.name())));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let outcomes: Vec<Option<(DVector<f64>, Vec<f64>)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = density.sample(&mut rng).expect("sampler checked above");
            conditional_masses(density, op, &x, regions, variant).map(|m| (x, m))
        })
        .collect();
    let used: Vec<&(DVector<f64>, Vec<f64>)> = outcomes.iter().flatten().collect();
    let discarded = samples - used.len();
    if discarded as f64 > MAX_DISCARD_FRACTION * samples as f64 || used.len() < 2 {
        return Err(Error::TooManySingularFibers { discarded, total: samples });
    }
    let runtime_s = started.elapsed().as_secs_f64();
    let m = used.len() as f64;
    let mean_se = |values: &[f64]| {
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    };
    Ok(regions
        .iter()
        .enumerate()
        .map(|(k, region)| {
            let indicators: Vec<f64> = used.iter().map(|(x, _)| f64::from(u8::from(region.contains(x)))).collect();
            let conditionals: Vec<f64> = used.iter().map(|(_, masses)| masses[k]).collect();
            let diffs: Vec<f64> = indicators.iter().zip(&conditionals).map(|(a, b)| a - b).collect();
            let (lhs, lhs_se) = mean_se(&indicators);
            let (rhs, rhs_se) = mean_se(&conditionals);
            let (_, std_error) = mean_se(&diffs);
            let verdict = if (lhs - rhs).abs() <= SE_MULTIPLE * std_error { Verdict::Pass } else { Verdict::Fail };
            ValidationReport {
                check: format!("total_probability[{variant}]"),
                case: region.name(),
                lhs,
                rhs,
                std_error: Some(std_error),
                lhs_std_error: Some(lhs_se),
                rhs_std_error: Some(rhs_se),
                tolerance: None,
                n_samples: samples,
                discarded,
                seed: Some(seed),
                verdict,
                runtime_s,
            }
        })
        .collect())
}

/// Traces the fiber at `y` starting from the projection of `x0`, truncating open components by `density`.
pub fn trace_from(
    op: &ObservationOperator,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    step: f64,
    density: &AmbientDensity,
) -> Result<Arc<FiberTrace>> {
    let seed = find_seed(op, y, x0, 1e-12)?;
    let opts = TraceOptions::default().with_step(step);
    Ok(Arc::new(trace_fiber(op, y, &seed, &opts, Some(density))?))
}

fn disintegration_profile(
    density: &AmbientDensity,
    op: &ObservationOperator,
    y: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<FiberDensityProfile> {
    let trace = trace_from(op, y, x0, 1e-3, density)?;
    normalize_on_fiber(density, op, &trace, ProfileVariant::Disintegration)
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * std::f64::consts::PI * var).ln())
}

fn sup_distance(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Disintegration of `N(0, 1) x mu2` along `h(x) = x_1` against `mu2`'s density in `x_2`.
///
/// `mu2` must be a normalized one-dimensional density.
pub fn check_product_slice(mu2: &AmbientDensity, y: f64) -> Result<ValidationReport> {
    let started = Instant::now();
    if mu2.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu2.dim() });
    }
    let second = mu2.clone();
    let product = AmbientDensity::new(format!("N(0,1)x{}", mu2.name()), 2, move |x: &DVector<f64>| {
        normal_log_pdf(x[0], 0.0, 1.0) + second.log_density(&DVector::from_element(1, x[1]))
    });
    let op = ObservationOperator::coordinate(2, 0)?;
    let profile = disintegration_profile(&product, &op, &DVector::from_element(1, y), &DVector::from_vec(vec![y, 0.0]))?;
    let expected = profile.trace.nodes.iter().map(|x| mu2.log_density(&DVector::from_element(1, x[1])).exp());
    let err = sup_distance(profile.normalized.iter().cloned(), expected);
    Ok(ValidationReport::deterministic("product_slice", format!("{} y={y}", mu2.name()), err, 1e-4, started))
}

/// Pushforward lemma: the disintegration of `T_* mu` along `h o T^{-1}` at `y`
/// equals the pushforward of `mu`'s disintegration along `h`.
///
/// Under the linear map `T` a curve density `rho` against arc length becomes
/// `rho / |T t|` at the image point, `t` the unit tangent; that prediction is
/// compared with the directly computed profile at every image node.
pub fn check_pushforward(
    t: &DMatrix<f64>,
    density: &AmbientDensity,
    op: &ObservationOperator,
    y: f64,
    x0: &DVector<f64>,
    case: &str,
) -> Result<ValidationReport> {
    let started = Instant::now();
    let yv = DVector::from_element(1, y);
    let direct = disintegration_profile(density, op, &yv, x0)?;
    let pushed_density = density.pushforward_linear(t)?;
    let pushed_op = op.compose_linear_inverse(t)?;
    let pushed = disintegration_profile(&pushed_density, &pushed_op, &yv, &(t * &direct.trace.nodes[0]))?;
    let t_inv = t.clone().try_inverse().ok_or_else(|| Error::InvalidInput("linear map is not invertible".into()))?;
    let predicted = pushed
        .trace
        .nodes
        .iter()
        .map(|z| {
            let x = &t_inv * z;
            let tangent = decompose(&op.jacobian(&x)?, DEFAULT_RANK_TOL)?.kernel_basis.column(0).into_owned();
            Ok(direct.density_at(log_disint_unnorm(density, op, &x)?) / (t * tangent).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let err = sup_distance(pushed.normalized.iter().cloned(), predicted.into_iter());
    Ok(ValidationReport::deterministic("pushforward", case, err, 1e-4, started))
}

/// Equivalent observations: the disintegrations along `h` at `y` and along
/// `f o h` at `f(y)` agree for strictly increasing smooth `f`.
pub fn check_equivalent_observations<F, G>(
    density: &AmbientDensity,
    op: &ObservationOperator,
    y: f64,
    x0: &DVector<f64>,
    name: &str,
    f: F,
    df: G,
) -> Result<ValidationReport>
where
    F: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    G: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
{
    let started = Instant::now();
    if !(df(y) > 0.0) {
        return Err(Error::InvalidInput(format!("{name} is not increasing at y = {y}")));
    }
    let base = disintegration_profile(density, op, &DVector::from_element(1, y), x0)?;
    let composed = op.compose_scalar(name, f.clone(), df)?;
    let other = disintegration_profile(density, &composed, &DVector::from_element(1, f(y)), x0)?;
    let predicted = other
        .trace
        .nodes
        .iter()
        .map(|x| Ok(base.density_at(log_disint_unnorm(density, op, x)?)))
        .collect::<Result<Vec<f64>>>()?;
    let err = sup_distance(other.normalized.iter().cloned(), predicted.into_iter());
    Ok(ValidationReport::deterministic("equivalent_observations", format!("f={name}"), err, 1e-6, started))
}

/// Bayes' theorem for Gaussians: the disintegration of `N(0, sigma)` along
/// `(t, z) -> z` at `z` is the Gaussian conditional of `t` given `z`.
pub fn check_bayes_gaussian(sigma: &DMatrix<f64>, z: f64) -> Result<ValidationReport> {
    let started = Instant::now();
    if sigma.shape() != (2, 2) {
        return Err(Error::DimensionMismatch { expected: 4, got: sigma.len() });
    }
    let density = AmbientDensity::gaussian(&[0.0, 0.0], sigma)?;
    let op = ObservationOperator::coordinate(2, 1)?;
    let profile = disintegration_profile(&density, &op, &DVector::from_element(1, z), &DVector::from_vec(vec![0.0, z]))?;
    let mean = sigma[(0, 1)] / sigma[(1, 1)] * z;
    let var = sigma[(0, 0)] - sigma[(0, 1)] * sigma[(1, 0)] / sigma[(1, 1)];
    let expected = profile.trace.nodes.iter().map(|x| normal_log_pdf(x[0], mean, var).exp());
    let err = sup_distance(profile.normalized.iter().cloned(), expected);
    let case = format!("sigma=[[{},{}],[{},{}]] z={z}", sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 0)], sigma[(1, 1)]);
    Ok(ValidationReport::deterministic("bayes_gaussian", case, err, 1e-4, started))
}

/// Dominated measures: the disintegration of `g mu` equals `mu`'s
/// disintegration reweighted by `g` and renormalized, node by node.
pub fn check_dominated<G>(
    density: &AmbientDensity,
    op: &ObservationOperator,
    y: f64,
    x0: &DVector<f64>,
    name: &str,
    log_g: G,
) -> Result<ValidationReport>
where
    G: Fn(&DVector<f64>) -> f64 + Send + Sync + Clone + 'static,
{
    let started = Instant::now();
    let base = disintegration_profile(density, op, &DVector::from_element(1, y), x0)?;
    let weighted_density = density.reweighted(name, log_g.clone());
    let weighted = normalize_on_fiber(&weighted_density, op, &base.trace, ProfileVariant::Disintegration)?;
    let reweighted_logs = base.trace.nodes.iter().zip(&base.log_unnorm).map(|(x, l)| l + log_g(x)).collect();
    let reweighted = FiberDensityProfile::from_log_values(base.trace.clone(), ProfileVariant::Disintegration, reweighted_logs)?;
    let err = sup_distance(weighted.normalized.iter().cloned(), reweighted.normalized.iter().cloned());
    Ok(ValidationReport::deterministic("dominated", format!("g={name}"), err, 1e-8, started))
}

/// Restricted measures: on `A`, the disintegration of `mu|_A` equals `mu`'s
/// disintegration masked to `A` and renormalized by its mass on `A`.
///
/// Masking is node-wise so both sides use the same trapezoid rule.
pub fn check_restriction(
    density: &AmbientDensity,
    op: &ObservationOperator,
    y: f64,
    x0: &DVector<f64>,
    region: &Region,
) -> Result<ValidationReport> {
    let started = Instant::now();
    let base = disintegration_profile(density, op, &DVector::from_element(1, y), x0)?;
    let inside: Vec<bool> = base.trace.nodes.iter().map(|x| region.contains(x)).collect();
    let region_for_density = region.clone();
    let restricted_density = density.restricted_to(&region.name(), move |x| region_for_density.contains(x));
    let restricted = normalize_on_fiber(&restricted_density, op, &base.trace, ProfileVariant::Disintegration)?;
    let weights = base.trace.trapezoid_weights();
    let mass: f64 = weights.iter().zip(&base.normalized).zip(&inside).filter(|(_, i)| **i).map(|((w, p), _)| w * p).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let masked = base.normalized.iter().zip(&inside).filter(|(_, i)| **i).map(|(p, _)| p / mass);
    let on_set = restricted.normalized.iter().zip(&inside).filter(|(_, i)| **i).map(|(p, _)| *p);
    let err = sup_distance(on_set, masked);
    Ok(ValidationReport::deterministic("restriction", region.name(), err, 1e-8, started))
}

/// Every deterministic lemma case on the builtin catalog, in a fixed order.
pub fn lemma_suite() -> Vec<(String, Result<ValidationReport>)> {
    let gauss = AmbientDensity::standard_gaussian(2);
    let ellipse = ObservationOperator::ellipse(1.0, 0.5).expect("valid ellipse");
    let circle = ObservationOperator::sphere(0.0, 2).expect("valid circle");
    let e1 = DVector::from_vec(vec![1.0, 0.0]);
    let y = 1.01;
    let mut out: Vec<(String, Result<ValidationReport>)> = Vec::new();

    let std_normal = AmbientDensity::new("N(0,1)", 1, |x: &DVector<f64>| normal_log_pdf(x[0], 0.0, 1.0));
    let bimodal = AmbientDensity::gaussian_mixture(&[(0.5, vec![-1.0], vec![0.09]), (0.5, vec![1.0], vec![0.09])])
        .expect("valid mixture");
    for (mu2, yv) in [(&std_normal, 0.7), (&std_normal, 0.0), (&bimodal, 0.7)] {
        out.push(("product_slice".into(), check_product_slice(mu2, yv)));
    }

    let angle = 30f64.to_radians();
    let rotation = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
    let cases: [(DMatrix<f64>, &ObservationOperator, &str); 3] = [
        (DMatrix::identity(2, 2), &ellipse, "T=I ellipse"),
        (DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])), &ellipse, "T=diag(2,0.5) ellipse"),
        (rotation, &circle, "T=rot(30deg) circle"),
    ];
    for (t, op, case) in &cases {
        out.push(("pushforward".into(), check_pushforward(t, &gauss, op, y, &e1, case)));
    }

    out.push((
        "equivalent_observations".into(),
        check_equivalent_observations(&gauss, &ellipse, y, &e1, "t", |t| t, |_| 1.0),
    ));
    out.push((
        "equivalent_observations".into(),
        check_equivalent_observations(&gauss, &ellipse, y, &e1, "t^3+t", |t| t * t * t + t, |t| 3.0 * t * t + 1.0),
    ));
    out.push((
        "equivalent_observations".into(),
        check_equivalent_observations(&gauss, &ellipse, y, &e1, "exp", f64::exp, f64::exp),
    ));

    let covs = [
        (DMatrix::identity(2, 2), 0.7),
        (DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), 1.0),
        (DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]), -1.0),
    ];
    for (sigma, z) in &covs {
        out.push(("bayes_gaussian".into(), check_bayes_gaussian(sigma, *z)));
    }

    out.push(("dominated".into(), check_dominated(&gauss, &ellipse, y, &e1, "1", |_| 0.0)));
    out.push(("dominated".into(), check_dominated(&gauss, &ellipse, y, &e1, "1+x1^2", |x| (1.0 + x[0] * x[0]).ln())));
    out.push(("dominated".into(), check_dominated(&gauss, &ellipse, y, &e1, "exp(x2)", |x| x[1])));

    for region in [Region::All, Region::HalfPlane { normal: vec![0.0, 1.0], offset: 0.0 }] {
        out.push(("restriction".into(), check_restriction(&gauss, &ellipse, y, &e1, &region)));
    }
    out
}

/// Total-probability reports for the ellipse `x_1^2 + 4 x_2^2` under a
/// standard Gaussian, one per region of [`default_regions`].
pub fn total_probability_suite(variant: ProfileVariant, samples: usize, seed: u64) -> Result<Vec<ValidationReport>> {
    let gauss = AmbientDensity::standard_gaussian(2);
    let ellipse = ObservationOperator::ellipse(1.0, 0.5)?;
    check_total_probability_many(&gauss, &ellipse, &default_regions(), variant, samples, seed)
}
