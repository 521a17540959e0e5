//! Onsager-Machlup functionals for `l_p` ambient norms and small-ball mass
//! estimators that check them.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{AmbientDensity, FiberDensityProfile};
use crate::error::{Error, Result};
use crate::fiber::FiberTrace;
use crate::geometry::{decompose, ObservationOperator};
use crate::modes::{format_p, objective_parts, ModeProblem, ModeVariant};

/// `|v|_p` for `p` in `[1, inf]`.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        // Scale by the max entry to avoid overflow for large p.
        let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Euclidean length of `{s t : |s t|_p <= 1}` for a tangent direction `t`.
///
/// Equals `2 / |t|_p` for a Euclidean-unit `t`; the Euclidean norm is kept in
/// the numerator so slightly unnormalized tangents are handled consistently.
pub fn lp_slice_volume(tangent: &DVector<f64>, p: f64) -> f64 {
    2.0 * tangent.norm() / lp_norm(tangent.as_slice(), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Volume of the unit `l_p` ball intersected with the span of the orthonormal
/// columns of `basis`, by rejection sampling. Experimental; intended for
/// tangent spaces of dimension above one, where no closed form is used.
pub fn mc_slice_volume(basis: &DMatrix<f64>, p: f64, samples: usize, seed: u64) -> Estimate {
    let d = basis.nrows();
    let k = basis.ncols();
    // |B u|_p <= 1 implies |u|_2 = |B u|_2 <= sqrt(d) |B u|_inf <= sqrt(d).
    let half = (d as f64).sqrt();
    let chunk = 4096;
    let chunks = samples.div_ceil(chunk);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = chunk.min(samples - c * chunk);
            let mut hits = 0;
            let mut u = DVector::zeros(k);
            for _ in 0..count {
                for ui in u.iter_mut() {
                    *ui = rng.random_range(-half..half);
                }
                if lp_norm((basis * &u).as_slice(), p) <= 1.0 {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let cube = (2.0 * half).powi(k as i32);
    let frac = hits as f64 / samples as f64;
    Estimate { value: cube * frac, std_error: cube * (frac * (1.0 - frac) / samples as f64).sqrt() }
}

/// Ambient norm used for the small balls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmNorm {
    Euclidean,
    Lp(f64),
}

impl OmNorm {
    pub fn p(self) -> f64 {
        match self {
            OmNorm::Euclidean => 2.0,
            OmNorm::Lp(p) => p,
        }
    }
}

/// Which measure on the fiber the functional describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmBase {
    Restricted,
    Disintegration,
}

impl fmt::Display for OmBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OmBase::Restricted => "restricted",
            OmBase::Disintegration => "disintegration",
        })
    }
}

/// OM functional of a fiber measure. Only differences of values are
/// meaningful; the additive constant is the raw formula's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmFunctional {
    pub base: OmBase,
    pub norm: OmNorm,
}

impl OmFunctional {
    pub fn new(base: OmBase, norm: OmNorm) -> Self {
        Self { base, norm }
    }

    /// Value at a regular point (no on-fiber check).
    pub fn value(&self, density: &AmbientDensity, op: &ObservationOperator, x: &DVector<f64>) -> Result<f64> {
        let base = match self.base {
            OmBase::Restricted => objective_parts(density, op, ModeVariant::Restricted, crate::geometry::DEFAULT_RANK_TOL, x)?,
            OmBase::Disintegration => {
                objective_parts(density, op, ModeVariant::Disintegration, crate::geometry::DEFAULT_RANK_TOL, x)?
            }
        };
        match self.norm {
            OmNorm::Euclidean => Ok(base),
            OmNorm::Lp(p) => Ok(base - log_slice_volume(op, x, p)?),
        }
    }
}

fn log_slice_volume(op: &ObservationOperator, x: &DVector<f64>, p: f64) -> Result<f64> {
    let dec = decompose(&op.jacobian(x)?, crate::geometry::DEFAULT_RANK_TOL)?;
    if dec.kernel_basis.ncols() != 1 {
        return Err(Error::InvalidInput("closed-form slice volume needs a one-dimensional fiber".into()));
    }
    Ok(lp_slice_volume(&dec.kernel_basis.column(0).into_owned(), p).ln())
}

/// OM value of the disintegration for the problem's norm: Euclidean for the
/// disintegration variant, `l_p` for `LpOm(p)`. `x` must be on the fiber.
pub fn om_value(problem: &ModeProblem, x: &DVector<f64>) -> Result<f64> {
    let norm = match problem.variant {
        ModeVariant::Disintegration => OmNorm::Euclidean,
        ModeVariant::LpOm(p) => OmNorm::Lp(p),
        ModeVariant::Restricted => {
            return Err(Error::InvalidInput("om_value needs the disintegration or an l_p variant".into()))
        }
    };
    let residual = (problem.operator.eval(x)? - &problem.y).amax();
    if residual > 1e-8 {
        return Err(Error::InvalidInput(format!("point is off the fiber by {residual:e}")));
    }
    OmFunctional::new(OmBase::Disintegration, norm).value(&problem.density, &problem.operator, x)
}

/// OM functional at every trace node, in node order.
pub fn om_scan(
    functional: OmFunctional,
    density: &AmbientDensity,
    op: &ObservationOperator,
    trace: &FiberTrace,
) -> Result<Vec<f64>> {
    trace.nodes.par_iter().map(|x| functional.value(density, op, x)).collect()
}

/// Mass of the normalized fiber density inside the closed `l_p` ball of
/// radius `r` around `center`.
pub fn small_ball_mass(profile: &FiberDensityProfile, center: &DVector<f64>, r: f64, p: f64) -> f64 {
    profile.mass_of(&|x: &DVector<f64>| lp_norm((x - center).as_slice(), p) <= r)
}

/// `log(mass(x2, r) / mass(x1, r))`, which tends to `I(x1) - I(x2)`.
pub fn log_ball_ratio(profile: &FiberDensityProfile, x1: &DVector<f64>, x2: &DVector<f64>, r: f64, p: f64) -> f64 {
    (small_ball_mass(profile, x2, r, p) / small_ball_mass(profile, x1, r, p)).ln()
}

/// Neville extrapolation to `r = 0` of values with an error expansion in even powers of `r`.
pub fn richardson_r2(radii: &[f64], values: &[f64]) -> f64 {
    assert_eq!(radii.len(), values.len());
    let t: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let mut p = values.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (ti, tj) = (t[i], t[i + level]);
            p[i] = (tj * p[i] - ti * p[i + 1]) / (tj - ti);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Serialize)]
pub struct BallRatioCheck {
    pub radii: Vec<f64>,
    pub log_ratios: Vec<f64>,
    pub extrapolated: f64,
    /// Standard error of the extrapolated value (Monte Carlo only).
    pub std_error: f64,
}

/// Fiber small-ball log ratios at each radius and their extrapolation.
pub fn fiber_ball_ratio(
    profile: &FiberDensityProfile,
    x1: &DVector<f64>,
    x2: &DVector<f64>,
    radii: &[f64],
    p: f64,
) -> Result<BallRatioCheck> {
    for &r in radii {
        if !(r > 2.0 * profile.trace.step) {
            return Err(Error::InvalidInput(format!("radius {r} must exceed twice the trace step")));
        }
    }
    let log_ratios: Vec<f64> = radii.iter().map(|&r| log_ball_ratio(profile, x1, x2, r, p)).collect();
    if log_ratios.iter().any(|v| !v.is_finite()) {
        return Err(Error::ZeroMass);
    }
    Ok(BallRatioCheck {
        radii: radii.to_vec(),
        extrapolated: richardson_r2(radii, &log_ratios),
        log_ratios,
        std_error: 0.0,
    })
}

/// Monte Carlo `log(mu(B_r(x2)) / mu(B_r(x1)))` for the ambient measure at each
/// radius (independent sample batches), extrapolated to `r = 0`.
pub fn ambient_ball_ratio(
    density: &AmbientDensity,
    x1: &DVector<f64>,
    x2: &DVector<f64>,
    radii: &[f64],
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<BallRatioCheck> {
    if !density.has_sampler() {
        return Err(Error::InvalidInput(format!("density {} has no sampler", density.name())));
    }
    let chunk = 4096;
    let chunks = samples.div_ceil(chunk);
    let mut log_ratios = Vec::new();
    let mut variances = Vec::new();
    for (level, &r) in radii.iter().enumerate() {
        let (h1, h2) = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(level as u64));
                rng.set_stream(c as u64);
                let mut hits = (0usize, 0usize);
                for _ in 0..chunk.min(samples - c * chunk) {
                    let x = density.sample(&mut rng).expect("sampler checked above");
                    hits.0 += usize::from(lp_norm((&x - x1).as_slice(), p) <= r);
                    hits.1 += usize::from(lp_norm((&x - x2).as_slice(), p) <= r);
                }
                hits
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if h1 == 0 || h2 == 0 {
            return Err(Error::ZeroMass);
        }
        let (n1, n2, m) = (h1 as f64, h2 as f64, samples as f64);
        log_ratios.push((n2 / n1).ln());
        // Delta method for the log of a multinomial count ratio (balls disjoint or not,
        // the covariance term only shrinks the variance, so this is conservative).
        variances.push(1.0 / n1 + 1.0 / n2 - 2.0 / m);
    }
    // The extrapolation is linear in the inputs; propagate the variances.
    let weights: Vec<f64> = (0..radii.len())
        .map(|i| {
            let mut e = vec![0.0; radii.len()];
            e[i] = 1.0;
            richardson_r2(radii, &e)
        })
        .collect();
    let std_error = weights.iter().zip(&variances).map(|(w, v)| w * w * v).sum::<f64>().sqrt();
    Ok(BallRatioCheck { radii: radii.to_vec(), extrapolated: richardson_r2(radii, &log_ratios), log_ratios, std_error })
}

/// Label used in CSV output for an OM norm.
pub fn norm_label(norm: OmNorm) -> String {
    match norm {
        OmNorm::Euclidean => "euclidean".into(),
        OmNorm::Lp(p) => format_p(p),
    }
}
