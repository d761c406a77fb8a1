//! The R^d-action generated by commuting, compactly supported fields.

use crate::error::{Error, Result};
use crate::poisson::{as_admissible_action, AdmissibleStructure, FiberFields, FiberMetric};
use crate::starproduct::function::{GriddedFunction, Provenance};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Anything that provides commuting flows indexed by R^D together with a skew D x D matrix.
pub trait FlowAction: Send + Sync {
    fn group_dim(&self) -> usize;
    fn fiber_dim(&self) -> usize;
    fn theta(&self) -> &DMatrix<f64>;
    fn flow_v(&self, v: &[f64], x: &[f64]) -> Vec<f64>;
    /// False only for points fixed by every flow.
    fn moves(&self, x: &[f64]) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleAction {
    structure: AdmissibleStructure,
    theta0: DMatrix<f64>,
    theta: DMatrix<f64>,
    hbar: f64,
}

impl AdmissibleAction {
    /// Uses Theta = hbar * structure.theta.
    pub fn new(structure: AdmissibleStructure, hbar: f64) -> Result<Self> {
        if !(hbar >= 0.0) || !hbar.is_finite() {
            return Err(Error::Domain(format!("hbar must be finite and >= 0, got {hbar}")));
        }
        let theta0 = structure.theta.clone();
        let theta = &theta0 * hbar;
        Ok(Self {
            structure,
            theta0,
            theta,
            hbar,
        })
    }

    pub fn from_fields(fields: &FiberFields, theta0: &DMatrix<f64>, hbar: f64) -> Result<Self> {
        Self::new(as_admissible_action(fields, theta0)?, hbar)
    }

    /// Fields on a single fiber R^n with h = I/radius^2, standard directions and Theta = hbar J.
    pub fn standard_plane(radius: f64, hbar: f64) -> Result<Self> {
        let metric = FiberMetric::ball(2, radius)?;
        let fields = FiberFields::new(metric, DMatrix::identity(2, 2))?;
        Self::from_fields(&fields, &symplectic(1), hbar)
    }

    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::new(self.structure.clone(), hbar)
    }

    pub fn structure(&self) -> &AdmissibleStructure {
        &self.structure
    }

    pub fn fields(&self) -> &FiberFields {
        &self.structure.fields
    }

    pub fn metric(&self) -> &FiberMetric {
        &self.structure.fields.metric
    }

    pub fn d(&self) -> usize {
        self.structure.fields.count()
    }

    pub fn n(&self) -> usize {
        self.structure.fields.n()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn theta0(&self) -> &DMatrix<f64> {
        &self.theta0
    }

    /// eps Theta eps^T: the skew matrix governing the product in warped coordinates.
    pub fn effective_skew(&self) -> DMatrix<f64> {
        let e = &self.structure.fields.directions;
        e * &self.theta * e.transpose()
    }

    /// Closed support compactum K = closed unit h-ball.
    pub fn in_support(&self, x: &[f64]) -> bool {
        self.metric().norm(x) <= 1.0
    }

    /// Bounding box of K.
    pub fn support_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let ext: Vec<f64> = (0..self.n()).map(|i| self.metric().half_extent(i)).collect();
        (ext.iter().map(|e| -e).collect(), ext)
    }

    pub fn field(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.structure.fields.field(i, x)
    }

    pub fn flow(&self, i: usize, t: f64, x: &[f64]) -> Vec<f64> {
        self.structure.fields.flow_axis(i, t, x)
    }

    pub fn orbit(&self, q: &[f64]) -> OrbitMap {
        OrbitMap {
            base: q.to_vec(),
            fields: Arc::new(self.structure.fields.clone()),
        }
    }

    /// alpha_v(f) = f o phi_v, sampled on the grid of f.
    pub fn act(&self, v: &[f64], f: &GriddedFunction) -> Result<GriddedFunction> {
        if v.len() != self.d() {
            return Err(Error::Dimension(format!("group element needs {} components", self.d())));
        }
        let (lo, hi) = self.support_bounds();
        if f.grid().dim() != self.n() || !f.grid().covers_box(&lo, &hi) {
            return Err(Error::Coverage("grid box must contain K".into()));
        }
        if v.iter().all(|t| *t == 0.0) {
            return Ok(f.clone());
        }
        let fields = self.structure.fields.clone();
        let v = v.to_vec();
        if f.is_resampled() {
            let grid = f.grid().clone();
            let values = (0..grid.len())
                .map(|k| f.eval(&fields.flow(&v, &grid.point(k))))
                .collect();
            return GriddedFunction::from_samples(grid, values);
        }
        let g = f.evaluator();
        Ok(GriddedFunction::from_closure(f.grid().clone(), move |x| g(&fields.flow(&v, x))))
    }

    /// True when f is constant or its support misses K.
    pub fn is_fixed_function(&self, f: &GriddedFunction) -> bool {
        if f.is_constant() {
            return true;
        }
        let Some(sb) = f.support_box() else {
            return true;
        };
        if min_quadratic_on_box(self.metric().matrix(), &sb.lo, &sb.hi) > 1.0 {
            return true;
        }
        if let Provenance::Element(_) = f.provenance() {
            return false;
        }
        let margin: f64 = (0..f.grid().dim()).map(|a| f.grid().step(a)).fold(0.0, f64::max)
            * self.metric().matrix().norm().sqrt();
        f.values().iter().enumerate().all(|(k, v)| {
            v.norm() <= crate::starproduct::function::SUPPORT_THRESHOLD || self.metric().norm(&f.grid().point(k)) > 1.0 + margin
        })
    }

    pub fn cofinal_isometry_residual(&self, l: &Compactum, f: &GriddedFunction, v: &[f64]) -> Result<IsometryReport> {
        let moved = self.act(v, f)?;
        let a = f.evaluator();
        let b = moved.evaluator();
        let sup_f = sup_over_box(&|x: &[f64]| a(x).norm(), &l.lo, &l.hi, 65);
        let sup_moved = sup_over_box(&|x: &[f64]| b(x).norm(), &l.lo, &l.hi, 65);
        let (klo, khi) = self.support_bounds();
        Ok(IsometryReport {
            residual: (sup_f - sup_moved).abs(),
            sup_f,
            sup_moved,
            contains_support: l.contains_box(&klo, &khi),
        })
    }
}

impl FlowAction for AdmissibleAction {
    fn group_dim(&self) -> usize {
        self.d()
    }
    fn fiber_dim(&self) -> usize {
        self.n()
    }
    fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }
    fn flow_v(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        self.structure.fields.flow(v, x)
    }
    fn moves(&self, x: &[f64]) -> bool {
        self.structure.fields.in_ball(x) && self.structure.fields.warp(x).is_ok()
    }
}

/// Plain translations x -> x + eps v on R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationAction {
    pub directions: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

impl FlowAction for TranslationAction {
    fn group_dim(&self) -> usize {
        self.directions.ncols()
    }
    fn fiber_dim(&self) -> usize {
        self.directions.nrows()
    }
    fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }
    fn flow_v(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|a| x[a] + (0..v.len()).map(|i| self.directions[(a, i)] * v[i]).sum::<f64>())
            .collect()
    }
    fn moves(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Standard symplectic matrix of size 2k.
pub fn symplectic(k: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        j[(i, k + i)] = 1.0;
        j[(k + i, i)] = -1.0;
    }
    j
}

/// v -> phi_v(q).
#[derive(Debug, Clone)]
pub struct OrbitMap {
    pub base: Vec<f64>,
    fields: Arc<FiberFields>,
}

impl OrbitMap {
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        self.fields.flow(v, &self.base)
    }

    pub fn is_fixed(&self) -> bool {
        !self.fields.in_ball(&self.base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compactum {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Compactum {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Domain("compactum needs lo <= hi per axis".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(n: usize, half: f64) -> Self {
        Self {
            lo: vec![-half; n],
            hi: vec![half; n],
        }
    }

    /// Bounding box of K scaled about the origin by `factor`.
    pub fn around_support(action: &AdmissibleAction, factor: f64) -> Self {
        let (lo, hi) = action.support_bounds();
        Self {
            lo: lo.iter().map(|v| v * factor).collect(),
            hi: hi.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, v)| *v >= self.lo[a] && *v <= self.hi[a])
    }

    pub fn contains_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] <= lo[a] && self.hi[a] >= hi[a])
    }

    pub fn contains_compactum(&self, other: &Compactum) -> bool {
        self.contains_box(&other.lo, &other.hi)
    }

    /// Regular sample of the box with `per_axis` points per axis.
    pub fn sample(&self, per_axis: usize) -> Vec<Vec<f64>> {
        lattice(&self.lo, &self.hi, per_axis)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    pub residual: f64,
    pub sup_f: f64,
    pub sup_moved: f64,
    /// Whether L contains K; only then is the isometry claimed.
    pub contains_support: bool,
}

pub(crate) fn lattice(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let per_axis = per_axis.max(1);
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0.0; n];
            for a in (0..n).rev() {
                let i = k % per_axis;
                k /= per_axis;
                p[a] = if per_axis == 1 {
                    0.5 * (lo[a] + hi[a])
                } else {
                    lo[a] + (hi[a] - lo[a]) * i as f64 / (per_axis - 1) as f64
                };
            }
            p
        })
        .collect()
}

/// Maximum of `f` over a box: lattice search followed by shrinking pattern refinement.
pub fn sup_over_box(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], per_axis: usize) -> f64 {
    let n = lo.len();
    let pts = lattice(lo, hi, per_axis);
    let mut scored: Vec<(f64, Vec<f64>)> = pts.into_iter().map(|p| (f(&p), p)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored.first().map(|s| s.0).unwrap_or(0.0);
    let step0: Vec<f64> = (0..n)
        .map(|a| (hi[a] - lo[a]) / (per_axis.max(2) - 1) as f64)
        .collect();
    for (value, start) in scored.into_iter().take(4) {
        let mut x = start;
        let mut fx = value;
        let mut scale = 1.0;
        for _ in 0..60 {
            let cand = lattice(
                &(0..n).map(|a| (x[a] - scale * step0[a]).max(lo[a])).collect::<Vec<_>>(),
                &(0..n).map(|a| (x[a] + scale * step0[a]).min(hi[a])).collect::<Vec<_>>(),
                5,
            );
            for c in cand {
                let v = f(&c);
                if v > fx {
                    fx = v;
                    x = c;
                }
            }
            scale *= 0.5;
        }
        best = best.max(fx);
    }
    best
}

/// min over the box of x^T h x, by enumerating active sets.
pub fn min_quadratic_on_box(h: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> f64 {
    let n = lo.len();
    if lo.iter().zip(hi).all(|(a, b)| *a <= 0.0 && *b >= 0.0) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let combos = 3usize.pow(n as u32);
    for c in 0..combos {
        let mut state = vec![0u8; n];
        let mut rest = c;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&a| state[a] == 0).collect();
        let mut x = vec![0.0; n];
        for a in 0..n {
            x[a] = match state[a] {
                1 => lo[a],
                2 => hi[a],
                _ => 0.0,
            };
        }
        if !free.is_empty() {
            let k = free.len();
            let a_mat = DMatrix::from_fn(k, k, |i, j| h[(free[i], free[j])]);
            let rhs = nalgebra::DVector::from_fn(k, |i, _| {
                -(0..n)
                    .filter(|b| state[*b] != 0)
                    .map(|b| h[(free[i], b)] * x[b])
                    .sum::<f64>()
            });
            let Some(sol) = a_mat.lu().solve(&rhs) else {
                continue;
            };
            for (i, &a) in free.iter().enumerate() {
                x[a] = sol[i];
            }
            if free.iter().any(|&a| x[a] < lo[a] - 1e-12 || x[a] > hi[a] + 1e-12) {
                continue;
            }
        }
        let v: f64 = (0..n)
            .map(|a| (0..n).map(|b| x[a] * h[(a, b)] * x[b]).sum::<f64>())
            .sum();
        best = best.min(v);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::starproduct::function::BoxGrid;
    use num_complex::Complex64;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn line_action() -> AdmissibleAction {
        let fields = FiberFields::new(FiberMetric::identity(1), DMatrix::identity(1, 1)).unwrap();
        AdmissibleAction::from_fields(&fields, &DMatrix::zeros(1, 1), 0.0).unwrap()
    }

    #[test]
    fn flow_examples() {
        let a = line_action();
        assert_eq!(a.flow(0, 0.7, &[1.3]), vec![1.3]);
        assert_eq!(a.flow(0, 0.3, &[0.0]), vec![0.3]);
        let p = AdmissibleAction::standard_plane(1.0, 0.1).unwrap();
        let x = [0.4, -0.55];
        let a1 = p.flow(0, 0.3, &p.flow(1, -0.8, &x));
        let a2 = p.flow(1, -0.8, &p.flow(0, 0.3, &x));
        assert!((a1[0] - a2[0]).abs() < 1e-12 && (a1[1] - a2[1]).abs() < 1e-12);
    }

    #[test]
    fn act_examples() {
        let a = line_action();
        let g = BoxGrid::cube(1, 1.5, 61).unwrap();
        let f = GriddedFunction::from_closure(g.clone(), |x| c((-(x[0] - 0.2).powi(2) * 20.0).exp()));
        assert_eq!(a.act(&[0.0], &f).unwrap().values(), f.values());
        let moved = a.act(&[0.4], &f).unwrap();
        let radial = crate::geometry::RadialProfile::default();
        for (k, x) in g.axis(0).iter().enumerate() {
            if x.abs() < 1.0 {
                let s = x.signum() * radial.value(x.abs()) + 0.4;
                let y = s.signum() * radial.inverse(s.abs()).unwrap();
                assert!((moved.values()[k] - f.eval(&[y])).norm() < 1e-14);
            }
        }
        let outside = GriddedFunction::from_closure(g, |x| if x[0].abs() > 1.1 { c(1.0) } else { c(0.0) });
        assert_eq!(a.act(&[0.9], &outside).unwrap().values(), outside.values());
        assert!(a.is_fixed_function(&outside));
    }

    #[test]
    fn fixed_functions() {
        let p = AdmissibleAction::standard_plane(1.0, 0.1).unwrap();
        let g = BoxGrid::cube(2, 3.0, 61).unwrap();
        let inside = GriddedFunction::from_closure(g.clone(), |x| c((-(x[0] * x[0] + x[1] * x[1]) * 10.0).exp()));
        assert!(!p.is_fixed_function(&inside));
        let one = GriddedFunction::constant(g.clone(), c(1.0));
        assert!(p.is_fixed_function(&one));
        assert_eq!(p.act(&[0.3, -0.2], &one).unwrap().values(), one.values());
        let far = GriddedFunction::from_closure(g, |x| {
            let r2 = (x[0] - 2.0).powi(2) + x[1] * x[1];
            if r2 < 0.25 {
                c((1.0 - 1.0 / (1.0 - 4.0 * r2)).exp())
            } else {
                c(0.0)
            }
        });
        assert!(p.is_fixed_function(&far));
    }

    #[test]
    fn quadratic_box_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = min_quadratic_on_box(&h, &[1.0, -3.0], &[2.0, 3.0]);
        // minimiser at x0 = 1, x1 = -0.5
        assert!((v - 1.75).abs() < 1e-12);
    }

    #[test]
    fn sup_refinement() {
        let f = |x: &[f64]| (-((x[0] - 0.123_456).powi(2) + (x[1] + 0.4321).powi(2))).exp();
        let s = sup_over_box(&f, &[-1.0, -1.0], &[1.0, 1.0], 17);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
