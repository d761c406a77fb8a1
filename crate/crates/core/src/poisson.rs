//! Admissible vertical Poisson structures on trivialized bundles.

use crate::error::{Error, Result};
use crate::geometry::RadialDiffeo;
use nalgebra::DMatrix;
use std::sync::Arc;

pub type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Constant fibre metric with its Cholesky factor h = L L^T.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMetric {
    h: DMatrix<f64>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
    h_inv: DMatrix<f64>,
}

impl FiberMetric {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if n == 0 || h.ncols() != n {
            return Err(Error::Dimension("metric must be a non-empty square matrix".into()));
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::MetricNotPositiveDefinite);
        }
        let chol = h.clone().cholesky().ok_or(Error::MetricNotPositiveDefinite)?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or(Error::MetricNotPositiveDefinite)?;
        let h_inv = l_inv.transpose() * &l_inv;
        Ok(Self { h, l, l_inv, h_inv })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is positive definite")
    }

    /// h = I / radius^2, so the unit h-ball is the Euclidean ball of that radius.
    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::MetricNotPositiveDefinite);
        }
        Self::new(DMatrix::identity(n, n) / (radius * radius))
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.h_inv
    }

    /// z = L^T x
    pub fn to_orthonormal(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|a| (a..n).map(|b| self.l[(b, a)] * x[b]).sum())
            .collect()
    }

    /// x = L^{-T} z
    pub fn from_orthonormal(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|a| (a..n).map(|b| self.l_inv[(b, a)] * z[b]).sum())
            .collect()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.to_orthonormal(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Half-width of the unit h-ball along coordinate axis `i`.
    pub fn half_extent(&self, i: usize) -> f64 {
        self.h_inv[(i, i)].sqrt()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.h.clone().symmetric_eigen().eigenvalues.min()
    }
}

#[derive(Clone)]
pub enum MetricSpec {
    Constant(DMatrix<f64>),
    Varying(MatrixField),
}

#[derive(Clone)]
pub struct BundleSpec {
    pub base_dim: usize,
    pub fiber_dim: usize,
    pub metric: MetricSpec,
    /// Radius of the neighbourhood U in units of the fibre metric.
    pub neighbourhood_radius: f64,
}

impl BundleSpec {
    pub fn single_fiber(metric: DMatrix<f64>, neighbourhood_radius: f64) -> Self {
        Self {
            base_dim: 0,
            fiber_dim: metric.nrows(),
            metric: MetricSpec::Constant(metric),
            neighbourhood_radius,
        }
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<FiberMetric> {
        if p.len() != self.base_dim {
            return Err(Error::Dimension(format!("base point has {} coordinates, expected {}", p.len(), self.base_dim)));
        }
        let h = match &self.metric {
            MetricSpec::Constant(h) => h.clone(),
            MetricSpec::Varying(f) => f(p),
        };
        if h.nrows() != self.fiber_dim {
            return Err(Error::Dimension("metric size differs from fiber dimension".into()));
        }
        FiberMetric::new(h)
    }

    pub fn check(&self, base_samples: &[Vec<f64>]) -> Result<()> {
        if !(self.neighbourhood_radius > 1.0) {
            return Err(Error::Neighbourhood {
                radius: self.neighbourhood_radius,
            });
        }
        for p in base_samples {
            self.metric_at(p)?;
        }
        Ok(())
    }
}

/// Sections e_i (columns of an n x d matrix) with optional covectors f^i (rows of a d x n matrix).
#[derive(Clone)]
pub struct DualBasisSpec {
    pub d: usize,
    pub sections: MatrixField,
    pub covectors: Option<MatrixField>,
}

impl DualBasisSpec {
    pub fn trivial(n: usize) -> Self {
        Self {
            d: n,
            sections: Arc::new(move |_| DMatrix::identity(n, n)),
            covectors: Some(Arc::new(move |_| DMatrix::identity(n, n))),
        }
    }

    pub fn sections_only(d: usize, sections: MatrixField) -> Self {
        Self {
            d,
            sections,
            covectors: None,
        }
    }

    pub fn reconstruction_residual(&self, p: &[f64]) -> Option<f64> {
        let cov = self.covectors.as_ref()?;
        let e = (self.sections)(p);
        let f = cov(p);
        let n = e.nrows();
        Some((e * f - DMatrix::<f64>::identity(n, n)).amax())
    }
}

/// Commuting fields X_i = Psi_h^* eps_i on one fiber; `directions` holds the eps_i as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberFields {
    pub metric: FiberMetric,
    pub radial: RadialDiffeo,
    pub directions: DMatrix<f64>,
}

impl FiberFields {
    pub fn new(metric: FiberMetric, directions: DMatrix<f64>) -> Result<Self> {
        let n = metric.dim();
        if directions.nrows() != n {
            return Err(Error::Dimension("direction vectors must live in the fiber".into()));
        }
        Ok(Self {
            radial: RadialDiffeo::new(n)?,
            metric,
            directions,
        })
    }

    pub fn n(&self) -> usize {
        self.metric.dim()
    }

    pub fn count(&self) -> usize {
        self.directions.ncols()
    }

    /// Open unit h-ball.
    pub fn in_ball(&self, x: &[f64]) -> bool {
        self.metric.norm(x) < 1.0
    }

    /// Psi_h(x) = L^{-T} Psi(L^T x).
    pub fn warp(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.metric.to_orthonormal(x);
        let w = self.radial.apply(&z)?;
        Ok(self.metric.from_orthonormal(&w))
    }

    pub fn unwarp(&self, y: &[f64]) -> Result<Vec<f64>> {
        let w = self.metric.to_orthonormal(y);
        let z = self.radial.apply_inverse(&w)?;
        Ok(self.metric.from_orthonormal(&z))
    }

    /// Translation vector eps . v in warped coordinates.
    pub fn shift(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|a| (0..self.count()).map(|i| self.directions[(a, i)] * v[i]).sum())
            .collect()
    }

    /// Value of field `i` at x.
    pub fn field(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let z = self.metric.to_orthonormal(x);
        let eps: Vec<f64> = self.directions.column(i).iter().copied().collect();
        let w = self.metric.to_orthonormal(&eps);
        let u = self.radial.inverse_jacobian_apply(&z, &w);
        self.metric.from_orthonormal(&u)
    }

    /// Joint flow phi_v(x) = Psi_h^{-1}(Psi_h(x) + eps . v); points that leave the
    /// representable range of Psi_h are treated as fixed.
    pub fn flow(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        if !self.in_ball(x) {
            return x.to_vec();
        }
        let Ok(y) = self.warp(x) else {
            return x.to_vec();
        };
        let s = self.shift(v);
        let moved: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a + b).collect();
        self.unwarp(&moved).unwrap_or_else(|_| x.to_vec())
    }

    pub fn flow_axis(&self, i: usize, t: f64, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.count()];
        v[i] = t;
        self.flow(&v, x)
    }
}

pub fn build_shrunken_fields(basis: &DualBasisSpec, bundle: &BundleSpec, p: &[f64]) -> Result<FiberFields> {
    let metric = bundle.metric_at(p)?;
    if let Some(res) = basis.reconstruction_residual(p) {
        if res > 1e-12 {
            return Err(Error::Reconstruction {
                residual: res,
                tolerance: 1e-12,
            });
        }
    }
    let e = (basis.sections)(p);
    if e.ncols() != basis.d {
        return Err(Error::Dimension("section matrix must have d columns".into()));
    }
    FiberFields::new(metric, e)
}

pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    (m + m.transpose()).amax()
}

pub fn require_skew(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("skew matrix must be square".into()));
    }
    let defect = skew_defect(m);
    if defect != 0.0 {
        return Err(Error::NotSkew { defect });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Presentation {
    /// theta = sum_i X_i ^ Y_i with Y_i = 1/2 sum_j gamma^{ij} X_j.
    Companion,
    /// theta = 1/2 sum Theta^{ij} X_i ^ X_j.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleStructure {
    /// All commuting fields; for the companion presentation the first d are the X_i, the last d the Y_i.
    pub fields: FiberFields,
    pub theta: DMatrix<f64>,
    pub gamma: Option<DMatrix<f64>>,
    pub presentation: Presentation,
    /// The X_i fields alone.
    pub primary: usize,
}

pub fn build_theta(gamma: &DMatrix<f64>, fields: &FiberFields) -> Result<AdmissibleStructure> {
    require_skew(gamma)?;
    let d = fields.count();
    if gamma.nrows() != d {
        return Err(Error::Dimension("gamma must be d x d".into()));
    }
    let e = &fields.directions;
    let y = e * gamma.transpose() * 0.5;
    let n = fields.n();
    let mut dirs = DMatrix::zeros(n, 2 * d);
    dirs.columns_mut(0, d).copy_from(e);
    dirs.columns_mut(d, d).copy_from(&y);
    let mut theta = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        theta[(i, d + i)] = 1.0;
        theta[(d + i, i)] = -1.0;
    }
    Ok(AdmissibleStructure {
        fields: FiberFields::new(fields.metric.clone(), dirs)?,
        theta,
        gamma: Some(gamma.clone()),
        presentation: Presentation::Companion,
        primary: d,
    })
}

pub fn as_admissible_action(fields: &FiberFields, theta: &DMatrix<f64>) -> Result<AdmissibleStructure> {
    require_skew(theta)?;
    if theta.nrows() != fields.count() {
        return Err(Error::Dimension("Theta must be d x d".into()));
    }
    Ok(AdmissibleStructure {
        fields: fields.clone(),
        theta: theta.clone(),
        gamma: None,
        presentation: Presentation::Direct,
        primary: fields.count(),
    })
}

impl AdmissibleStructure {
    /// Bivector components Z Theta Z^T where Z holds the field values as columns.
    pub fn eval_theta(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.fields.n();
        if !self.fields.in_ball(x) {
            return DMatrix::zeros(n, n);
        }
        let cols: Vec<Vec<f64>> = (0..self.fields.count()).map(|i| self.fields.field(i, x)).collect();
        let z = DMatrix::from_fn(n, cols.len(), |a, i| cols[i][a]);
        &z * &self.theta * z.transpose()
    }

    /// Constant-in-fiber bivector eps Theta eps^T; equals eval_theta on the half ball.
    pub fn vertical_lift(&self) -> DMatrix<f64> {
        let e = &self.fields.directions;
        e * &self.theta * e.transpose()
    }

    pub fn companion_fields(&self) -> Option<DMatrix<f64>> {
        match self.presentation {
            Presentation::Companion => Some(self.fields.directions.columns(self.primary, self.primary).into_owned()),
            Presentation::Direct => None,
        }
    }

    /// Scales Theta by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.theta *= factor;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> FiberFields {
        build_shrunken_fields(&DualBasisSpec::trivial(2), &BundleSpec::single_fiber(DMatrix::identity(2, 2), 1.5), &[]).unwrap()
    }

    #[test]
    fn line_bundle_fields() {
        let bundle = BundleSpec {
            base_dim: 1,
            fiber_dim: 1,
            metric: MetricSpec::Constant(DMatrix::identity(1, 1)),
            neighbourhood_radius: 2.0,
        };
        let f = build_shrunken_fields(&DualBasisSpec::trivial(1), &bundle, &[0.4]).unwrap();
        assert_eq!(f.field(0, &[0.3]), vec![1.0]);
        assert_eq!(f.field(0, &[1.5]), vec![0.0]);
        assert!(bundle.check(&[vec![0.0], vec![1.0]]).is_ok());
    }

    #[test]
    fn ellipse_support() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let bundle = BundleSpec::single_fiber(h, 1.5);
        let f = build_shrunken_fields(&DualBasisSpec::trivial(2), &bundle, &[]).unwrap();
        assert!((f.metric.half_extent(0) - 0.5).abs() < 1e-15);
        assert!((f.metric.half_extent(1) - 1.0).abs() < 1e-15);
        for k in 0..400 {
            let a = k as f64 * 0.0157;
            for r in [1.0, 1.01, 1.3] {
                let x = [0.5 * r * a.cos(), r * a.sin()];
                assert_eq!(f.field(0, &x), vec![0.0, 0.0]);
                assert_eq!(f.field(1, &x), vec![0.0, 0.0]);
            }
            let x = [0.2 * a.cos(), 0.4 * a.sin()];
            assert_eq!(f.field(1, &x), vec![0.0, 1.0]);
        }
    }

    #[test]
    fn bad_metric_and_basis() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(FiberMetric::new(h).unwrap_err(), Error::MetricNotPositiveDefinite);
        let basis = DualBasisSpec {
            d: 2,
            sections: Arc::new(|_| DMatrix::identity(2, 2)),
            covectors: Some(Arc::new(|_| DMatrix::identity(2, 2) * 2.0)),
        };
        let bundle = BundleSpec::single_fiber(DMatrix::identity(2, 2), 1.5);
        assert!(matches!(build_shrunken_fields(&basis, &bundle, &[]), Err(Error::Reconstruction { .. })));
    }

    #[test]
    fn theta_from_gamma() {
        let f = plane();
        let zero = build_theta(&DMatrix::zeros(2, 2), &f).unwrap();
        assert_eq!(zero.eval_theta(&[0.1, 0.2]), DMatrix::zeros(2, 2));
        assert_eq!(zero.companion_fields().unwrap(), DMatrix::zeros(2, 2));
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let s = build_theta(&j, &f).unwrap();
        assert!((s.eval_theta(&[0.0, 0.0]) - &j).amax() < 1e-15);
        assert_eq!(s.eval_theta(&[1.2, 0.0]), DMatrix::zeros(2, 2));
        assert!(build_theta(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), &f).is_err());
    }

    #[test]
    fn theta_direct() {
        let f = plane();
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, -0.1, 0.0]);
        let s = as_admissible_action(&f, &j).unwrap();
        assert!((s.eval_theta(&[0.0, 0.0]) - &j).amax() < 1e-16);
        let x = [0.5, 0.6];
        let double = s.scaled(2.0);
        assert!((double.eval_theta(&x) - s.eval_theta(&x) * 2.0).amax() < 1e-15);
        let zero = as_admissible_action(&f, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.eval_theta(&x), DMatrix::zeros(2, 2));
    }

    #[test]
    fn coincidence_on_half_ball() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let bundle = BundleSpec::single_fiber(h, 1.5);
        let f = build_shrunken_fields(&DualBasisSpec::trivial(2), &bundle, &[]).unwrap();
        let gamma = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, -0.7, 0.0]);
        let s = build_theta(&gamma, &f).unwrap();
        let lift = s.vertical_lift();
        assert!((&lift - &gamma).amax() < 1e-15);
        for k in 0..200 {
            let a = k as f64 * 0.031;
            let r = 0.49 * (k as f64 / 200.0);
            let z = [r * a.cos(), r * a.sin()];
            let x = f.metric.from_orthonormal(&z);
            assert!((s.eval_theta(&x) - &lift).amax() <= 1e-10);
        }
    }
}
