//! Observation operators `h: R^d -> R^n` and the first-order geometry of
//! their level sets: Jacobians, kernel/normal splits and the Gram
//! determinant `sqrt(det(J J^T))` that converts restricted densities into
//! conditional densities.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default central-difference step (scaled per coordinate by `max(1, |x_i|)`).
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Default relative threshold separating regular from singular Jacobians.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

type EvalFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A smooth observation map `h: R^d -> R^n` with `n < d`.
#[derive(Clone)]
pub struct ObservationOperator {
    name: String,
    dim_ambient: usize,
    dim_obs: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacobianFn>>,
    fd_step: f64,
}

impl fmt::Debug for ObservationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservationOperator")
            .field("name", &self.name)
            .field("dim_ambient", &self.dim_ambient)
            .field("dim_obs", &self.dim_obs)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl ObservationOperator {
    /// Wraps an arbitrary map. Rejects `n >= d`, which leaves no fiber to trace.
    pub fn new<F>(name: impl Into<String>, dim_ambient: usize, dim_obs: usize, eval: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        if dim_obs == 0 || dim_ambient == 0 {
            return Err(Error::InvalidInput("operator dimensions must be positive".into()));
        }
        if dim_obs >= dim_ambient {
            return Err(Error::InvalidInput(format!(
                "observation dimension {dim_obs} must be smaller than ambient dimension {dim_ambient}"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim_ambient,
            dim_obs,
            eval: Arc::new(eval),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        assert!(fd_step > 0.0, "fd_step must be positive");
        self.fd_step = fd_step;
        self
    }

    /// Same map, Jacobian always by finite differences.
    pub fn without_analytic_jacobian(&self) -> Self {
        let mut op = self.clone();
        op.jacobian = None;
        op.name = format!("{}[fd]", self.name);
        op
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_ambient(&self) -> usize {
        self.dim_ambient
    }

    pub fn dim_obs(&self) -> usize {
        self.dim_obs
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim_ambient {
            return Err(Error::DimensionMismatch { expected: self.dim_ambient, got: x.len() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let v = (self.eval)(x);
        if v.len() != self.dim_obs {
            return Err(Error::DimensionMismatch { expected: self.dim_obs, got: v.len() });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("{} evaluated at {:?}", self.name, x.as_slice())));
        }
        Ok(v)
    }

    /// Analytic Jacobian when available, otherwise central differences with
    /// step `fd_step * max(1, |x_i|)` in coordinate `i`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("Jacobian requested at non-finite point".into()));
        }
        let jac = match &self.jacobian {
            Some(analytic) => analytic(x),
            None => self.jacobian_fd(x)?,
        };
        if jac.nrows() != self.dim_obs || jac.ncols() != self.dim_ambient {
            return Err(Error::DimensionMismatch {
                expected: self.dim_obs * self.dim_ambient,
                got: jac.nrows() * jac.ncols(),
            });
        }
        if jac.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("Jacobian of {} at {:?}", self.name, x.as_slice())));
        }
        Ok(jac)
    }

    /// Central finite-difference Jacobian, regardless of any analytic one.
    pub fn jacobian_fd(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut jac = DMatrix::zeros(self.dim_obs, self.dim_ambient);
        let mut probe = x.clone();
        for i in 0..self.dim_ambient {
            let h = self.fd_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let plus = self.eval(&probe)?;
            probe[i] = x[i] - h;
            let minus = self.eval(&probe)?;
            probe[i] = x[i];
            let column = (plus - minus) / (2.0 * h);
            jac.set_column(i, &column);
        }
        Ok(jac)
    }

    /// `|det(Jh(x) restricted to (ker Jh(x))^perp)|^{-1}`.
    pub fn corrective_factor(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(1.0 / gram_det(&self.jacobian(x)?)?)
    }

    /// `sigma_min(J) > rank_tol * max(1, sigma_max(J))`; false on any evaluation failure.
    pub fn is_regular_point(&self, x: &DVector<f64>, rank_tol: f64) -> bool {
        match self.jacobian(x) {
            Ok(jac) => {
                let sv = singular_values(&jac);
                let smax = sv.iter().cloned().fold(0.0, f64::max);
                let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
                smin > rank_tol * smax.max(1.0)
            }
            Err(_) => false,
        }
    }

    /// `f o h` for a scalar observation and scalar `f` with derivative `df`.
    pub fn compose_scalar<F, G>(&self, name: &str, f: F, df: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if self.dim_obs != 1 {
            return Err(Error::InvalidInput("scalar composition needs a scalar observation".into()));
        }
        let f = Arc::new(f);
        let inner = self.clone();
        let inner_eval = self.eval.clone();
        let eval = {
            let f = f.clone();
            move |x: &DVector<f64>| {
                let v = inner_eval(x);
                DVector::from_element(1, f(v[0]))
            }
        };
        let jac = move |x: &DVector<f64>| {
            let hx = (inner.eval)(x)[0];
            let j = inner.jacobian(x).unwrap_or_else(|_| DMatrix::from_element(1, inner.dim_ambient, f64::NAN));
            j * df(hx)
        };
        let mut op = Self::new(format!("{name}({})", self.name), self.dim_ambient, 1, eval)?
            .with_fd_step(self.fd_step);
        if self.jacobian.is_some() {
            op = op.with_jacobian(jac);
        }
        Ok(op)
    }

    /// `h o T^{-1}` for an invertible linear map `T`; the fibers are `T(h^{-1}(y))`.
    pub fn compose_linear_inverse(&self, t: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim_ambient;
        if t.nrows() != d || t.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d * d, got: t.nrows() * t.ncols() });
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("linear map is not invertible".into()))?;
        let inner = self.clone();
        let t_inv_eval = t_inv.clone();
        let eval = move |z: &DVector<f64>| (inner.eval)(&(&t_inv_eval * z));
        let inner = self.clone();
        let jac = move |z: &DVector<f64>| {
            let x = &t_inv * z;
            let j = inner
                .jacobian(&x)
                .unwrap_or_else(|_| DMatrix::from_element(inner.dim_obs, d, f64::NAN));
            j * &t_inv
        };
        let mut op = Self::new(format!("{}∘T⁻¹", self.name), d, self.dim_obs, eval)?
            .with_fd_step(self.fd_step);
        if self.jacobian.is_some() {
            op = op.with_jacobian(jac);
        }
        Ok(op)
    }

    /// `h(x) = x_{index}` on `R^dim`.
    pub fn coordinate(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidInput(format!("coordinate {index} out of range for R^{dim}")));
        }
        Ok(Self::new(format!("coord{}", index + 1), dim, 1, move |x| DVector::from_element(1, x[index]))?
            .with_jacobian(move |_| {
                let mut j = DMatrix::zeros(1, dim);
                j[(0, index)] = 1.0;
                j
            }))
    }

    /// `h(x) = a . x`.
    pub fn linear(coefficients: &[f64]) -> Result<Self> {
        let a = DVector::from_column_slice(coefficients);
        let a_eval = a.clone();
        let name = format!(
            "linear:{}",
            coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        );
        Ok(Self::new(name, coefficients.len(), 1, move |x| DVector::from_element(1, a_eval.dot(x)))?
            .with_jacobian(move |_| DMatrix::from_row_slice(1, a.len(), a.as_slice())))
    }

    /// `h(x) = x_1^2/a^2 + x_2^2/b^2` on `R^2`.
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidInput("ellipse semi-axis scales must be positive".into()));
        }
        let (a2, b2) = (a * a, b * b);
        Ok(Self::new(format!("ellipse:{a},{b}"), 2, 1, move |x| {
            DVector::from_element(1, x[0] * x[0] / a2 + x[1] * x[1] / b2)
        })?
        .with_jacobian(move |x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0] / a2, 2.0 * x[1] / b2])))
    }

    /// `h(x) = |x|^2 - offset` on `R^dim`.
    pub fn sphere(offset: f64, dim: usize) -> Result<Self> {
        Ok(Self::new(format!("sphere:{offset}"), dim, 1, move |x| {
            DVector::from_element(1, x.norm_squared() - offset)
        })?
        .with_jacobian(move |x| DMatrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())))
    }
}

/// Singular-value split of a full-row-rank Jacobian into `ker J` and its
/// orthogonal complement. Basis signs are arbitrary.
#[derive(Debug, Clone)]
pub struct JacobianDecomposition {
    pub jacobian: DMatrix<f64>,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// `d x (d-n)`, orthonormal columns spanning `ker J`.
    pub kernel_basis: DMatrix<f64>,
    /// `d x n`, orthonormal columns spanning the row space of `J`.
    pub normal_basis: DMatrix<f64>,
}

impl JacobianDecomposition {
    /// `|det(J restricted to (ker J)^perp)|`, computed as the determinant of
    /// the `n x n` matrix `J * normal_basis`.
    pub fn restricted_determinant(&self) -> f64 {
        (&self.jacobian * &self.normal_basis).determinant().abs()
    }
}

fn singular_values(jac: &DMatrix<f64>) -> Vec<f64> {
    if jac.nrows() == 1 {
        return vec![jac.norm()];
    }
    let mut sv: Vec<f64> = jac.singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// SVD-based kernel/normal decomposition of an `n x d` Jacobian.
///
/// Fails with `RankDeficient` when `sigma_min <= rank_tol * sigma_max`.
pub fn decompose(jac: &DMatrix<f64>, rank_tol: f64) -> Result<JacobianDecomposition> {
    let (n, d) = jac.shape();
    if n == 0 || n > d {
        return Err(Error::InvalidInput(format!("cannot decompose a {n}x{d} Jacobian")));
    }
    if jac.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("Jacobian contains non-finite entries".into()));
    }

    // Row vector in the plane: the kernel is the 90-degree rotation.
    if n == 1 && d == 2 {
        let norm = jac.norm();
        if !(norm > 0.0) {
            return Err(Error::RankDeficient { sigma_min: norm, sigma_max: norm });
        }
        let (g0, g1) = (jac[(0, 0)] / norm, jac[(0, 1)] / norm);
        return Ok(JacobianDecomposition {
            jacobian: jac.clone(),
            singular_values: vec![norm],
            kernel_basis: DMatrix::from_column_slice(2, 1, &[-g1, g0]),
            normal_basis: DMatrix::from_column_slice(2, 1, &[g0, g1]),
        });
    }

    // Zero-padding to a square matrix makes the SVD return a full right basis.
    let mut padded = DMatrix::zeros(d, d);
    padded.view_mut((0, 0), (n, d)).copy_from(jac);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NonFinite("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let singular_values: Vec<f64> = order[..n].iter().map(|&i| svd.singular_values[i]).collect();
    let (smax, smin) = (singular_values[0], singular_values[n - 1]);
    if !(smax > 0.0) || smin <= rank_tol * smax {
        return Err(Error::RankDeficient { sigma_min: smin, sigma_max: smax });
    }
    let mut normal_basis = DMatrix::zeros(d, n);
    for (k, &i) in order[..n].iter().enumerate() {
        normal_basis.set_column(k, &v_t.row(i).transpose());
    }
    let mut kernel_basis = DMatrix::zeros(d, d - n);
    for (k, &i) in order[n..].iter().enumerate() {
        kernel_basis.set_column(k, &v_t.row(i).transpose());
    }
    Ok(JacobianDecomposition { jacobian: jac.clone(), singular_values, kernel_basis, normal_basis })
}

/// `sqrt(det(J J^T))`, the product of the singular values; `|J|_2` for a row.
pub fn gram_det(jac: &DMatrix<f64>) -> Result<f64> {
    if jac.nrows() == 1 {
        let norm = jac.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("Jacobian contains non-finite entries".into()));
        }
        if !(norm > 0.0) {
            return Err(Error::RankDeficient { sigma_min: norm, sigma_max: norm });
        }
        return Ok(norm);
    }
    let dec = decompose(jac, DEFAULT_RANK_TOL)?;
    Ok(dec.singular_values.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn row(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, xs.len(), xs)
    }

    #[test]
    fn jacobian_examples() {
        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        assert_eq!(coord.jacobian(&v(&[3.0, 7.0])).unwrap(), row(&[1.0, 0.0]));

        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let x = v(&[1.01f64.sqrt(), 0.0]);
        let j = ell.jacobian(&x).unwrap();
        assert_relative_eq!(j[(0, 0)], 2.0 * 1.01f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(j[(0, 0)], 2.0099751, epsilon = 1e-7);
        assert_eq!(j[(0, 1)], 0.0);

        let lin = ObservationOperator::linear(&[3.0, 4.0]).unwrap();
        let fd = lin.without_analytic_jacobian();
        let j = fd.jacobian(&v(&[-2.5, 11.0])).unwrap();
        assert_relative_eq!(j[(0, 0)], 3.0, max_relative = 1e-9);
        assert_relative_eq!(j[(0, 1)], 4.0, max_relative = 1e-9);
    }

    #[test]
    fn jacobian_reports_non_finite() {
        let op = ObservationOperator::new("log", 2, 1, |x: &DVector<f64>| DVector::from_element(1, x[0].ln()))
            .unwrap();
        assert!(matches!(op.jacobian(&v(&[0.0, 1.0])), Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_square_operators() {
        let err = ObservationOperator::new("id", 2, 2, |x: &DVector<f64>| x.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn decompose_examples() {
        let dec = decompose(&row(&[1.0, 0.0]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(dec.singular_values, vec![1.0]);
        assert_relative_eq!(dec.kernel_basis[(0, 0)].abs(), 0.0);
        assert_relative_eq!(dec.kernel_basis[(1, 0)].abs(), 1.0);
        assert_relative_eq!(dec.normal_basis[(0, 0)].abs(), 1.0);

        let dec = decompose(&row(&[3.0, 4.0]), DEFAULT_RANK_TOL).unwrap();
        assert_relative_eq!(dec.singular_values[0], 5.0, max_relative = 1e-15);
        let sign = dec.normal_basis[(0, 0)].signum();
        assert_relative_eq!(sign * dec.normal_basis[(0, 0)], 0.6, max_relative = 1e-15);
        assert_relative_eq!(sign * dec.normal_basis[(1, 0)], 0.8, max_relative = 1e-15);

        assert!(matches!(decompose(&row(&[0.0, 0.0]), DEFAULT_RANK_TOL), Err(Error::RankDeficient { .. })));
        let rank_one = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(decompose(&rank_one, DEFAULT_RANK_TOL), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn gram_det_examples() {
        let g = gram_det(&row(&[2.0 * 1.01f64.sqrt(), 0.0])).unwrap();
        assert_relative_eq!(g, 2.0099751, epsilon = 1e-7);
        assert_relative_eq!(1.0 / g, 1.0 / (2.0 * 1.01f64.sqrt()), max_relative = 1e-15);
        let g = gram_det(&row(&[0.0, 8.0 * 0.5 * 1.01f64.sqrt()])).unwrap();
        assert_relative_eq!(g, 4.0199502, epsilon = 1e-7);
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_relative_eq!(gram_det(&j).unwrap(), 2.0, max_relative = 1e-14);
        assert!(matches!(gram_det(&row(&[0.0, 0.0])), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn corrective_factor_examples() {
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let cf = ell.corrective_factor(&v(&[1.01f64.sqrt(), 0.0])).unwrap();
        assert_relative_eq!(cf, 0.4975186, epsilon = 1e-7);
        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        assert_eq!(coord.corrective_factor(&v(&[-4.0, 0.3])).unwrap(), 1.0);
        let lin = ObservationOperator::linear(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(lin.corrective_factor(&v(&[9.0, -1.0])).unwrap(), 0.2, max_relative = 1e-15);
    }

    #[test]
    fn regular_point_examples() {
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        assert!(!ell.is_regular_point(&v(&[0.0, 0.0]), DEFAULT_RANK_TOL));
        assert!(ell.is_regular_point(&v(&[1.01f64.sqrt(), 0.0]), DEFAULT_RANK_TOL));
        let coord = ObservationOperator::coordinate(2, 0).unwrap();
        assert!(coord.is_regular_point(&v(&[123.0, -5.0]), DEFAULT_RANK_TOL));
    }

    #[test]
    fn fd_matches_analytic_on_ellipse() {
        use rand::{Rng, SeedableRng};
        let ell = ObservationOperator::ellipse(1.0, 0.5).unwrap();
        let fd = ell.without_analytic_jacobian();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut probed = 0;
        while probed < 100 {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            if !ell.is_regular_point(&x, 1e-3) {
                continue;
            }
            let ja = ell.jacobian(&x).unwrap();
            let jf = fd.jacobian(&x).unwrap();
            assert!((&ja - &jf).norm() <= 1e-5 * ja.norm(), "at {x:?}");
            probed += 1;
        }
    }

    fn random_matrix(n: usize, d: usize, entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, d, &entries[..n * d])
    }

    proptest! {
        #[test]
        fn decomposition_invariants(
            (n, d) in (1usize..4).prop_flat_map(|n| (Just(n), (n + 1)..6)),
            entries in proptest::collection::vec(-3.0f64..3.0, 25),
        ) {
            let j = random_matrix(n, d, &entries);
            prop_assume!(decompose(&j, 1e-6).is_ok());
            let dec = decompose(&j, 1e-6).unwrap();
            let jn = j.norm();
            prop_assert!((&j * &dec.kernel_basis).amax() <= 1e-10 * jn);
            let kk = dec.kernel_basis.transpose() * &dec.kernel_basis;
            let nn = dec.normal_basis.transpose() * &dec.normal_basis;
            let kn = dec.kernel_basis.transpose() * &dec.normal_basis;
            prop_assert!((kk - DMatrix::identity(d - n, d - n)).amax() <= 1e-12);
            prop_assert!((nn - DMatrix::identity(n, n)).amax() <= 1e-12);
            prop_assert!(kn.amax() <= 1e-12);
            prop_assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));

            // Two routes to the restricted determinant.
            let g = gram_det(&j).unwrap();
            prop_assert!((g - dec.restricted_determinant()).abs() <= 1e-10 * g);
            let direct = (&j * j.transpose()).determinant().sqrt();
            prop_assert!((g - direct).abs() <= 1e-9 * g);
        }

        #[test]
        fn gram_det_orthogonal_invariance(
            (n, d) in (1usize..3).prop_flat_map(|n| (Just(n), (n + 1)..5)),
            entries in proptest::collection::vec(-3.0f64..3.0, 25),
            rot in proptest::collection::vec(-1.0f64..1.0, 25),
        ) {
            let j = random_matrix(n, d, &entries);
            prop_assume!(decompose(&j, 1e-6).is_ok());
            let q = DMatrix::from_row_slice(d, d, &rot[..d * d]).qr().q();
            let g = gram_det(&j).unwrap();
            let gq = gram_det(&(&j * q)).unwrap();
            prop_assert!((g - gq).abs() <= 1e-10 * g);
        }

        #[test]
        fn gram_det_of_row_is_norm(entries in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let j = DMatrix::from_row_slice(1, entries.len(), &entries);
            prop_assume!(j.norm() > 0.0);
            prop_assert_eq!(gram_det(&j).unwrap(), j.norm());
        }
    }
}
