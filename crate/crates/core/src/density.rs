//! Ambient densities and the two fiber densities built from them: the
//! restricted density (ambient density read against fiber arc length) and
//! the disintegration density, which carries the extra factor
//! `|det(Jh|_{ker Jh^perp})|^{-1}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::FiberTrace;
use crate::geometry::{gram_det, ObservationOperator};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

type LogDensityFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type SamplerFn = dyn Fn(&mut dyn RngCore) -> DVector<f64> + Send + Sync;

/// A probability density with respect to Lebesgue measure on `R^d`, held in log form.
#[derive(Clone)]
pub struct AmbientDensity {
    name: String,
    dim: usize,
    log_density: Arc<LogDensityFn>,
    gradient: Option<Arc<GradientFn>>,
    sampler: Option<Arc<SamplerFn>>,
}

impl fmt::Debug for AmbientDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientDensity")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("gradient", &self.gradient.is_some())
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

impl AmbientDensity {
    /// `log_density` may return `-inf` outside the support.
    pub fn new<F>(name: impl Into<String>, dim: usize, log_density: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), dim, log_density: Arc::new(log_density), gradient: None, sampler: None }
    }

    pub fn with_gradient<F>(mut self, gradient: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_sampler<F>(mut self, sampler: F) -> Self
    where
        F: Fn(&mut dyn RngCore) -> DVector<f64> + Send + Sync + 'static,
    {
        self.sampler = Some(Arc::new(sampler));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        (self.log_density)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_sampler(&self) -> bool {
        self.sampler.is_some()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        self.sampler.as_ref().map(|s| s(rng))
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        let norm = 0.5 * dim as f64 * LN_2PI;
        Self::new(format!("gauss:{dim}"), dim, move |x| -0.5 * x.norm_squared() - norm)
            .with_gradient(|x| -x)
            .with_sampler(move |rng| DVector::from_fn(dim, |_, _| StandardNormal.sample(rng)))
    }

    /// Independent coordinates `x_i ~ N(mean_i, var_i)`.
    pub fn diagonal_gaussian(mean: &[f64], var: &[f64]) -> Result<Self> {
        if mean.len() != var.len() || mean.is_empty() {
            return Err(Error::InvalidInput("diagonal Gaussian needs matching, non-empty mean and variance".into()));
        }
        if var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        let dim = mean.len();
        let mean = DVector::from_column_slice(mean);
        let var = DVector::from_column_slice(var);
        let norm = 0.5 * (dim as f64 * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>());
        let (m1, v1) = (mean.clone(), var.clone());
        let (m2, v2) = (mean.clone(), var.clone());
        let sd = var.map(f64::sqrt);
        Ok(Self::new(format!("diag:{dim}"), dim, move |x| {
            -0.5 * (x - &m1).component_div(&v1).dot(&(x - &m1)) - norm
        })
        .with_gradient(move |x| -(x - &m2).component_div(&v2))
        .with_sampler(move |rng| {
            DVector::from_fn(dim, |i, _| {
                let z: f64 = StandardNormal.sample(rng);
                mean[i] + sd[i] * z
            })
        }))
    }

    /// `N(mean, cov)` with a full symmetric positive-definite covariance.
    pub fn gaussian(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: cov.nrows() * cov.ncols() });
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let norm = 0.5 * (dim as f64 * LN_2PI + log_det);
        let mean = DVector::from_column_slice(mean);
        let precision = chol.inverse();
        let (m1, p1) = (mean.clone(), precision.clone());
        let m2 = mean.clone();
        Ok(Self::new(format!("gaussian:{dim}"), dim, move |x| {
            let r = x - &m1;
            -0.5 * r.dot(&(&p1 * &r)) - norm
        })
        .with_gradient(move |x| -(&precision * (x - &m2)))
        .with_sampler(move |rng| {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
            &mean + &lower * z
        }))
    }

    /// Finite mixture of diagonal Gaussians, `(weight, mean, variances)` per component.
    pub fn gaussian_mixture(components: &[(f64, Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidInput("mixture needs at least one component".into()))?;
        let dim = first.1.len();
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.iter().any(|c| !(c.0 > 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidInput("mixture weights must be positive".into()));
        }
        let mut parts = Vec::with_capacity(components.len());
        for (w, mean, var) in components {
            if mean.len() != dim || var.len() != dim {
                return Err(Error::InvalidInput("mixture components must share one dimension".into()));
            }
            parts.push(((w / total).ln(), Self::diagonal_gaussian(mean, var)?));
        }
        let parts = Arc::new(parts);
        let (p1, p2, p3) = (parts.clone(), parts.clone(), parts.clone());
        let weights: Vec<f64> = components.iter().map(|c| c.0 / total).collect();
        Ok(Self::new(format!("mixture:{}", components.len()), dim, move |x| {
            log_sum_exp(p1.iter().map(|(lw, c)| lw + c.log_density(x)))
        })
        .with_gradient(move |x| {
            let logs: Vec<f64> = p2.iter().map(|(lw, c)| lw + c.log_density(x)).collect();
            let lse = log_sum_exp(logs.iter().cloned());
            let mut g = DVector::zeros(dim);
            for ((_, c), l) in p2.iter().zip(&logs) {
                g += c.gradient(x).expect("diagonal Gaussian has a gradient") * (l - lse).exp();
            }
            g
        })
        .with_sampler(move |rng| {
            let u: f64 = rand::Rng::random(rng);
            let mut acc = 0.0;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            p3[pick].1.sample(rng).expect("diagonal Gaussian has a sampler")
        }))
    }

    /// Density proportional to `g * dmu/dlambda` for a positive weight given as `log g`.
    pub fn reweighted<G>(&self, name: &str, log_weight: G) -> Self
    where
        G: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        let base = self.log_density.clone();
        Self::new(format!("{}*{name}", self.name), self.dim, move |x| base(x) + log_weight(x))
    }

    /// `mu` restricted to a set: `-inf` outside.
    pub fn restricted_to<A>(&self, name: &str, set: A) -> Self
    where
        A: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        let base = self.log_density.clone();
        Self::new(format!("{}|{name}", self.name), self.dim, move |x| {
            if set(x) {
                base(x)
            } else {
                f64::NEG_INFINITY
            }
        })
    }

    /// Density of the pushforward `T_* mu` under an invertible linear map.
    pub fn pushforward_linear(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.nrows() != self.dim || t.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim * self.dim, got: t.nrows() * t.ncols() });
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("linear map is not invertible".into()))?;
        let log_det = t.determinant().abs().ln();
        let base = self.log_density.clone();
        let mut pushed = Self::new(format!("T*{}", self.name), self.dim, move |z| base(&(&t_inv * z)) - log_det);
        if let Some(sampler) = self.sampler.clone() {
            let t = t.clone();
            pushed = pushed.with_sampler(move |rng| &t * sampler(rng));
        }
        Ok(pushed)
    }
}

pub(crate) fn log_sum_exp<I: Iterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.collect();
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log dmu/dlambda(x)`: the restricted density against fiber arc length.
pub fn log_restricted_unnorm(density: &AmbientDensity, x: &DVector<f64>) -> f64 {
    density.log_density(x)
}

/// `log dmu/dlambda(x) - log sqrt(det(Jh Jh^T))(x)`: the unnormalized
/// disintegration density against fiber arc length.
pub fn log_disint_unnorm(density: &AmbientDensity, op: &ObservationOperator, x: &DVector<f64>) -> Result<f64> {
    let g = gram_det(&op.jacobian(x)?)?;
    Ok(density.log_density(x) - g.ln())
}

/// Which fiber density a profile holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileVariant {
    Restricted,
    Disintegration,
}

impl ProfileVariant {
    pub fn log_unnorm(self, density: &AmbientDensity, op: &ObservationOperator, x: &DVector<f64>) -> Result<f64> {
        match self {
            ProfileVariant::Restricted => Ok(log_restricted_unnorm(density, x)),
            ProfileVariant::Disintegration => log_disint_unnorm(density, op, x),
        }
    }
}

impl fmt::Display for ProfileVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileVariant::Restricted => "restricted",
            ProfileVariant::Disintegration => "disintegration",
        })
    }
}

/// A fiber density normalized to a probability density over arc length.
#[derive(Debug, Clone)]
pub struct FiberDensityProfile {
    pub trace: Arc<FiberTrace>,
    pub variant: ProfileVariant,
    pub log_unnorm: Vec<f64>,
    /// `log` of the trapezoid integral of `exp(log_unnorm)`.
    pub log_norm_const: f64,
    pub normalized: Vec<f64>,
}

impl FiberDensityProfile {
    /// Normalizes arbitrary per-node log values over the trace.
    pub fn from_log_values(trace: Arc<FiberTrace>, variant: ProfileVariant, log_unnorm: Vec<f64>) -> Result<Self> {
        let mut profiles = normalize_jointly(vec![(trace, log_unnorm)], variant)?;
        Ok(profiles.remove(0))
    }

    /// Normalized density at an arbitrary point, using this profile's constant.
    pub fn density_at(&self, log_unnorm: f64) -> f64 {
        (log_unnorm - self.log_norm_const).exp()
    }

    /// Trapezoid integral of the normalized density over this component.
    pub fn integral(&self) -> f64 {
        self.trace.trapezoid_weights().iter().zip(&self.normalized).map(|(w, p)| w * p).sum()
    }

    /// Probability of a set under the normalized density, with interpolated boundary crossings.
    pub fn mass_of<A>(&self, set: &A) -> f64
    where
        A: Fn(&DVector<f64>) -> bool + ?Sized,
    {
        crate::fiber::restrict_to_set(&self.trace, set)
            .iter()
            .zip(&self.normalized)
            .map(|(w, p)| w * p)
            .sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.normalized.iter().enumerate() {
            if *p > self.normalized[best] {
                best = i;
            }
        }
        best
    }
}

fn normalize_jointly(
    parts: Vec<(Arc<FiberTrace>, Vec<f64>)>,
    variant: ProfileVariant,
) -> Result<Vec<FiberDensityProfile>> {
    let mut terms = Vec::new();
    for (trace, logs) in &parts {
        if logs.len() != trace.len() {
            return Err(Error::DimensionMismatch { expected: trace.len(), got: logs.len() });
        }
        for (w, l) in trace.trapezoid_weights().iter().zip(logs) {
            if *w > 0.0 {
                terms.push(w.ln() + l);
            }
        }
    }
    let log_norm_const = log_sum_exp(terms.into_iter());
    if !log_norm_const.is_finite() {
        return Err(Error::ZeroMass);
    }
    Ok(parts
        .into_iter()
        .map(|(trace, log_unnorm)| {
            let normalized = log_unnorm.iter().map(|l| (l - log_norm_const).exp()).collect();
            FiberDensityProfile { trace, variant, log_unnorm, log_norm_const, normalized }
        })
        .collect())
}

/// Per-node unnormalized log density, evaluated in parallel in node order.
pub fn fiber_log_values(
    density: &AmbientDensity,
    op: &ObservationOperator,
    trace: &FiberTrace,
    variant: ProfileVariant,
) -> Result<Vec<f64>> {
    trace.nodes.par_iter().map(|x| variant.log_unnorm(density, op, x)).collect()
}

/// Restricted or disintegration density on one traced component, normalized
/// by the trapezoid rule over arc length.
pub fn normalize_on_fiber(
    density: &AmbientDensity,
    op: &ObservationOperator,
    trace: &Arc<FiberTrace>,
    variant: ProfileVariant,
) -> Result<FiberDensityProfile> {
    let logs = fiber_log_values(density, op, trace, variant)?;
    FiberDensityProfile::from_log_values(trace.clone(), variant, logs)
}

/// Normalizes over several components of one fiber with a shared constant.
pub fn normalize_components(
    density: &AmbientDensity,
    op: &ObservationOperator,
    traces: &[Arc<FiberTrace>],
    variant: ProfileVariant,
) -> Result<Vec<FiberDensityProfile>> {
    let parts = traces
        .iter()
        .map(|t| Ok((t.clone(), fiber_log_values(density, op, t, variant)?)))
        .collect::<Result<Vec<_>>>()?;
    normalize_jointly(parts, variant)
}
