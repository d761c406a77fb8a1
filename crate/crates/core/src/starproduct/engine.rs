//! Periodic spectral representation of functions in warped coordinates and the deformed product.

use crate::action::AdmissibleAction;
use crate::error::{Error, Result};
use crate::geometry::smooth_step;
use crate::starproduct::function::{BoxGrid, FieldFn, GriddedFunction, Provenance};
use crate::starproduct::spectral::{modes_to_samples, samples_to_modes, twisted_convolution_truncated, ModeArray};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    /// Torus samples per axis; even.
    pub torus_points: usize,
    /// Radius (in units of the fibre metric) of the ellipsoid whose warped image fits in the torus box
    /// without any shift margin.
    pub inner_radius: f64,
    /// Allowed deviation from a constant on the shell, relative to max(1, sup |f|).
    pub shell_tolerance: f64,
    /// Relative magnitude below which content counts as absent.
    pub support_tolerance: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            torus_points: 128,
            inner_radius: 0.55,
            shell_tolerance: 1e-12,
            support_tolerance: 1e-11,
        }
    }
}

struct Core {
    id: u64,
    action: AdmissibleAction,
    skew: DMatrix<f64>,
    flat: bool,
    points: usize,
    sides: Vec<f64>,
    cfg: EngineConfig,
    preimages: Vec<Vec<f64>>,
    shell: Vec<Vec<f64>>,
}

impl Core {
    /// Warped coordinates of x when x lies in the region represented on the torus.
    fn region(&self, x: &[f64]) -> Option<Vec<f64>> {
        let fields = self.action.fields();
        if !fields.in_ball(x) {
            return None;
        }
        let y = fields.warp(x).ok()?;
        y.iter()
            .zip(&self.sides)
            .all(|(v, l)| v.abs() < 0.5 * l)
            .then_some(y)
    }

    /// Extent and bandwidth of the content above `support_tolerance * max(sup, reference)`.
    fn measure(&self, modes: &ModeArray, reference: f64) -> (Vec<f64>, Vec<f64>) {
        let tol = self.cfg.support_tolerance;
        let bw = modes.bandwidth(tol);
        let n = modes.dim();
        let mut ext = vec![0.0; n];
        if modes.is_zero() {
            return (ext, bw);
        }
        let samples = modes_to_samples(modes, self.points);
        let m = samples.iter().map(|v| v.norm()).fold(reference, f64::max);
        for (j, v) in samples.iter().enumerate() {
            if v.norm() > tol * m {
                let mut rest = j;
                for a in (0..n).rev() {
                    let i = rest % self.points;
                    rest /= self.points;
                    let step = self.sides[a] / self.points as f64;
                    let y = -0.5 * self.sides[a] + i as f64 * step;
                    ext[a] = f64::max(ext[a], y.abs() + step);
                }
            }
        }
        (ext, bw)
    }
}

/// f represented as shell constant + periodic inner part on the torus box + exact exterior values.
#[derive(Clone)]
pub struct WarpedElement {
    core: Arc<Core>,
    shell: Complex64,
    modes: ModeArray,
    exterior: FieldFn,
    extent: Vec<f64>,
    bandwidth: Vec<f64>,
}

impl fmt::Debug for WarpedElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WarpedElement")
            .field("engine", &self.core.id)
            .field("shell", &self.shell)
            .field("extent", &self.extent)
            .field("bandwidth", &self.bandwidth)
            .finish()
    }
}

impl WarpedElement {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self.core.region(x) {
            Some(y) => self.shell + self.modes.eval(&y),
            None => (self.exterior)(x),
        }
    }

    pub fn conj(&self) -> WarpedElement {
        let mut modes = self.modes.clone();
        let src = &self.modes;
        for (flat, v) in modes.data.iter_mut().enumerate() {
            let k = src.mode_of(flat);
            let neg: Vec<i64> = k
                .iter()
                .zip(&src.lo)
                .map(|(ki, lo)| if *ki == *lo { *ki } else { -ki })
                .collect();
            *v = src.get(&neg).conj();
        }
        let ext = self.exterior.clone();
        WarpedElement {
            core: self.core.clone(),
            shell: self.shell.conj(),
            modes,
            exterior: Arc::new(move |x| ext(x).conj()),
            extent: self.extent.clone(),
            bandwidth: self.bandwidth.clone(),
        }
    }

    pub fn is_inner_zero(&self) -> bool {
        self.modes.is_zero()
    }

    pub fn shell_value(&self) -> Complex64 {
        self.shell
    }

    pub fn modes(&self) -> &ModeArray {
        &self.modes
    }

    pub fn engine_id(&self) -> u64 {
        self.core.id
    }

    /// Half-widths of the inner part on the torus.
    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductDiagnostics {
    pub torus_sides: Vec<f64>,
    pub torus_points: usize,
    /// Per axis: content half-width plus largest shift, against the available half side.
    pub required: Vec<f64>,
    pub available: Vec<f64>,
    /// Largest coefficient on the outermost mode ring relative to the largest coefficient.
    pub edge_ratio: f64,
    pub shell_f: [f64; 2],
    pub shell_g: [f64; 2],
}

/// Deformed product for one admissible action.
#[derive(Clone)]
pub struct ProductEngine {
    core: Arc<Core>,
}

impl fmt::Debug for ProductEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProductEngine")
            .field("id", &self.core.id)
            .field("sides", &self.core.sides)
            .field("points", &self.core.points)
            .finish()
    }
}

fn shell_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..128)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 128.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let m: usize = if n == 3 { 7 } else { 4 };
            let mut dirs = Vec::new();
            for axis in 0..n {
                for sign in [-1.0, 1.0] {
                    let others = m.pow((n - 1) as u32);
                    for c in 0..others {
                        let mut v = vec![0.0; n];
                        let mut rest = c;
                        for (a, slot) in v.iter_mut().enumerate() {
                            if a == axis {
                                *slot = sign;
                            } else {
                                *slot = -1.0 + 2.0 * (rest % m) as f64 / (m - 1) as f64;
                                rest /= m;
                            }
                        }
                        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        dirs.push(v.iter().map(|x| x / r).collect());
                    }
                }
            }
            dirs
        }
    }
}

impl ProductEngine {
    pub fn new(action: AdmissibleAction, cfg: EngineConfig) -> Result<Self> {
        let n = action.n();
        if cfg.torus_points < 8 || cfg.torus_points % 2 != 0 {
            return Err(Error::Domain("torus_points must be even and at least 8".into()));
        }
        if !(cfg.inner_radius > 0.5 && cfg.inner_radius < crate::geometry::overflow_radius()) {
            return Err(Error::Domain("inner_radius must lie in (1/2, 1)".into()));
        }
        let skew = action.effective_skew();
        crate::poisson::skew_defect(&skew);
        let flat = skew.iter().all(|v| *v == 0.0);
        let fields = action.fields().clone();
        let psi_inner = fields.radial.profile.value(cfg.inner_radius);
        let a: Vec<f64> = (0..n).map(|i| psi_inner * fields.metric.half_extent(i)).collect();
        let half_n = cfg.torus_points as f64 / 2.0;
        let mut sides: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        for _ in 0..200 {
            let next: Vec<f64> = (0..n)
                .map(|i| 2.0 * a[i] + 2.0 * (0..n).map(|j| skew[(i, j)].abs() * half_n / sides[j]).sum::<f64>())
                .collect();
            let done = next.iter().zip(&sides).all(|(x, y)| (x - y).abs() <= 1e-15 * x);
            sides = next;
            if done {
                break;
            }
        }
        let points = cfg.torus_points;
        let total = points.pow(n as u32);
        let preimages: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|j| {
                let mut rest = j;
                let mut y = vec![0.0; n];
                for a in (0..n).rev() {
                    let i = rest % points;
                    rest /= points;
                    y[a] = -0.5 * sides[a] + i as f64 * sides[a] / points as f64;
                }
                fields.unwarp(&y).expect("finite torus point has a preimage")
            })
            .collect();
        let mut shell = Vec::new();
        for u in shell_directions(n) {
            let d = fields.metric.from_orthonormal(&u);
            let reach = (0..n).map(|a| 2.0 * d[a].abs() / sides[a]).fold(0.0, f64::max);
            let r_box = fields.radial.profile.inverse(1.0 / reach)?;
            for k in 0..31 {
                let r = r_box + (1.0 - r_box) * (1.0 - 0.5f64.powi(k));
                let z: Vec<f64> = u.iter().map(|c| c * r).collect();
                shell.push(fields.metric.from_orthonormal(&z));
            }
        }
        Ok(Self {
            core: Arc::new(Core {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                action,
                skew,
                flat,
                points,
                sides,
                cfg,
                preimages,
                shell,
            }),
        })
    }

    pub fn with_defaults(action: AdmissibleAction) -> Result<Self> {
        Self::new(action, EngineConfig::default())
    }

    pub fn id(&self) -> u64 {
        self.core.id
    }

    pub fn action(&self) -> &AdmissibleAction {
        &self.core.action
    }

    pub fn config(&self) -> &EngineConfig {
        &self.core.cfg
    }

    /// eps Theta eps^T.
    pub fn skew(&self) -> &DMatrix<f64> {
        &self.core.skew
    }

    pub fn torus_sides(&self) -> &[f64] {
        &self.core.sides
    }

    pub fn torus_points(&self) -> usize {
        self.core.points
    }

    /// Warped coordinates when x is represented on the torus.
    pub fn warped_region(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.core.region(x)
    }

    pub fn element_from_fn(&self, f: FieldFn) -> Result<WarpedElement> {
        let core = &self.core;
        let shell_vals: Vec<Complex64> = core.shell.par_iter().map(|x| f(x)).collect();
        let raw: Vec<Complex64> = core.preimages.par_iter().map(|x| f(x)).collect();
        if shell_vals.iter().chain(&raw).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("function is not finite on the unit ball".into()));
        }
        let c = if shell_vals.iter().all(|v| *v == shell_vals[0]) {
            shell_vals[0]
        } else {
            shell_vals.iter().sum::<Complex64>() / shell_vals.len() as f64
        };
        let deviation = shell_vals.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
        let scale = raw.iter().chain(&shell_vals).map(|v| v.norm()).fold(1.0, f64::max);
        let tolerance = core.cfg.shell_tolerance * scale;
        if deviation > tolerance {
            return Err(Error::ShellNotConstant { deviation, tolerance });
        }
        let inner: Vec<Complex64> = raw.iter().map(|v| v - c).collect();
        let modes = samples_to_modes(&inner, core.points, &core.sides);
        let (extent, bandwidth) = core.measure(&modes, c.norm());
        Ok(WarpedElement {
            core: core.clone(),
            shell: c,
            modes,
            exterior: f,
            extent,
            bandwidth,
        })
    }

    /// Reuses the element when `f` already came from this engine.
    pub fn element(&self, f: &GriddedFunction) -> Result<Arc<WarpedElement>> {
        if let Provenance::Element(e) = f.provenance() {
            if e.core.id == self.core.id {
                return Ok(e.clone());
            }
        }
        Ok(Arc::new(self.element_from_fn(f.evaluator())?))
    }

    fn check_overflow(&self, a: &WarpedElement, b: &WarpedElement) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.core.sides.len();
        let mut required = vec![0.0; n];
        let available: Vec<f64> = self.core.sides.iter().map(|l| 0.5 * l).collect();
        for i in 0..n {
            let ext = a.extent[i].max(b.extent[i]);
            let shift: f64 = (0..n)
                .map(|j| self.core.skew[(i, j)].abs() * a.bandwidth[j].max(b.bandwidth[j]))
                .sum();
            required[i] = ext + shift;
            if required[i] > available[i] {
                return Err(Error::TorusOverflow {
                    axis: i,
                    required: required[i],
                    available: available[i],
                });
            }
        }
        Ok((required, available))
    }

    /// Returns the bare twisted product of the inner parts and the full product element.
    fn multiply_parts(&self, a: &WarpedElement, b: &WarpedElement) -> Result<(ModeArray, WarpedElement, Vec<f64>, Vec<f64>)> {
        if a.core.id != self.core.id || b.core.id != self.core.id {
            return Err(Error::LatticeMismatch);
        }
        let core = &self.core;
        let (required, available, p) = if a.is_inner_zero() || b.is_inner_zero() {
            let n = core.sides.len();
            let available = core.sides.iter().map(|l| 0.5 * l).collect();
            (vec![0.0; n], available, ModeArray::centered(n, core.points, core.sides.clone()))
        } else {
            let (required, available) = self.check_overflow(a, b)?;
            let lo = a.modes.lo.clone();
            let shape = a.modes.shape.clone();
            (required, available, twisted_convolution_truncated(&a.modes, &b.modes, &core.skew, &lo, &shape)?)
        };
        let mut inner = p.clone();
        inner.axpy(a.shell, &b.modes);
        inner.axpy(b.shell, &a.modes);
        let (extent, bandwidth) = core.measure(&inner, (a.shell * b.shell).norm());
        let (fa, fb) = (a.exterior.clone(), b.exterior.clone());
        let product = WarpedElement {
            core: core.clone(),
            shell: a.shell * b.shell,
            modes: inner,
            exterior: Arc::new(move |x| fa(x) * fb(x)),
            extent,
            bandwidth,
        };
        Ok((p, product, required, available))
    }

    pub fn multiply(&self, a: &WarpedElement, b: &WarpedElement) -> Result<WarpedElement> {
        Ok(self.multiply_parts(a, b)?.1)
    }

    /// Values of a mode array on the grid points lying in the represented region.
    fn inner_on_grid(&self, modes: &ModeArray, grid: &BoxGrid) -> Vec<Option<Complex64>> {
        let fields = self.core.action.fields();
        let identity = fields.radial.profile.cutoff.plateau_end;
        let total = grid.len();
        let class: Vec<Option<(bool, Vec<f64>)>> = (0..total)
            .into_par_iter()
            .map(|k| {
                let x = grid.point(k);
                let y = self.core.region(&x)?;
                let z = fields.metric.to_orthonormal(&x);
                let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                Some((r <= identity, y))
            })
            .collect();
        let any_identity = class.iter().any(|c| matches!(c, Some((true, _))));
        let tensor = if any_identity && !modes.is_zero() {
            let coords: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.axis(a)).collect();
            Some(modes.eval_tensor(&coords))
        } else {
            None
        };
        class
            .into_par_iter()
            .enumerate()
            .map(|(k, c)| {
                let (is_identity, y) = c?;
                if modes.is_zero() {
                    return Some(ZERO);
                }
                Some(match (&tensor, is_identity) {
                    (Some(t), true) => t[k],
                    _ => modes.eval(&y),
                })
            })
            .collect()
    }

    /// Samples of an element on a grid.
    pub fn element_on_grid(&self, e: &WarpedElement, grid: &BoxGrid) -> Vec<Complex64> {
        let inner = self.inner_on_grid(&e.modes, grid);
        inner
            .into_par_iter()
            .enumerate()
            .map(|(k, v)| match v {
                Some(v) => e.shell + v,
                None => (e.exterior)(&grid.point(k)),
            })
            .collect()
    }

    fn check_inputs(&self, f: &GriddedFunction, g: &GriddedFunction) -> Result<()> {
        if f.grid() != g.grid() {
            return Err(Error::GridMismatch);
        }
        if f.grid().dim() != self.core.action.n() {
            return Err(Error::Dimension("grid dimension differs from fiber dimension".into()));
        }
        let (lo, hi) = self.core.action.support_bounds();
        if !f.grid().covers_box(&lo, &hi) {
            return Err(Error::Coverage("grid box must contain K".into()));
        }
        Ok(())
    }

    pub fn deformed_product(&self, f: &GriddedFunction, g: &GriddedFunction) -> Result<GriddedFunction> {
        Ok(self.product_with_diagnostics(f, g)?.0)
    }

    pub fn product_with_diagnostics(&self, f: &GriddedFunction, g: &GriddedFunction) -> Result<(GriddedFunction, ProductDiagnostics)> {
        self.check_inputs(f, g)?;
        let core = &self.core;
        if core.flat {
            let out = f.pointwise_mul(g)?;
            let diag = ProductDiagnostics {
                torus_sides: core.sides.clone(),
                torus_points: core.points,
                required: vec![0.0; core.sides.len()],
                available: core.sides.iter().map(|l| 0.5 * l).collect(),
                edge_ratio: 0.0,
                shell_f: [0.0; 2],
                shell_g: [0.0; 2],
            };
            return Ok((out, diag));
        }
        let a = self.element(f)?;
        let b = self.element(g)?;
        let (p, product, required, available) = self.multiply_parts(&a, &b)?;
        let inner = self.inner_on_grid(&p, f.grid());
        let (ca, cb) = (a.shell, b.shell);
        let values: Vec<Complex64> = inner
            .into_iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(v, (fv, gv))| match v {
                Some(pv) => fv * gv - (fv - ca) * (gv - cb) + pv,
                None => fv * gv,
            })
            .collect();
        let diag = ProductDiagnostics {
            torus_sides: core.sides.clone(),
            torus_points: core.points,
            required,
            available,
            edge_ratio: edge_ratio(&p),
            shell_f: [ca.re, ca.im],
            shell_g: [cb.re, cb.im],
        };
        Ok((GriddedFunction::from_parts(f.grid().clone(), values, Provenance::Element(Arc::new(product))), diag))
    }

    /// chi_K: 1 on K, 0 beyond |x|_h = 3/2.
    pub fn cutoff_function(&self, grid: &BoxGrid) -> GriddedFunction {
        let metric = self.core.action.metric().clone();
        GriddedFunction::from_closure(grid.clone(), move |x| {
            Complex64::new(1.0 - smooth_step((metric.norm(x) - 1.0) / 0.5), 0.0)
        })
    }

    /// max over the group samples of sup |alpha_v chi_K - chi_K| on the grid.
    pub fn cutoff_invariance_residual(&self, grid: &BoxGrid, group_samples: &[Vec<f64>]) -> Result<f64> {
        let chi = self.cutoff_function(grid);
        let mut worst: f64 = 0.0;
        for v in group_samples {
            let moved = self.core.action.act(v, &chi)?;
            worst = worst.max(moved.max_abs_diff(&chi));
        }
        Ok(worst)
    }
}

fn edge_ratio(m: &ModeArray) -> f64 {
    let max = m.max_abs();
    if max == 0.0 {
        return 0.0;
    }
    let mut edge: f64 = 0.0;
    for (flat, v) in m.data.iter().enumerate() {
        let k = m.mode_of(flat);
        let on_edge = (0..m.dim()).any(|a| k[a] == m.lo[a] || k[a] == m.lo[a] + m.shape[a] as i64 - 1);
        if on_edge {
            edge = edge.max(v.norm());
        }
    }
    edge / max
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(cx: f64, cy: f64, s: f64) -> impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static {
        move |x: &[f64]| Complex64::new((-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (2.0 * s * s)).exp(), 0.0)
    }

    fn engine(hbar: f64) -> ProductEngine {
        let action = AdmissibleAction::standard_plane(5.0, hbar).unwrap();
        ProductEngine::new(
            action,
            EngineConfig {
                torus_points: 128,
                ..EngineConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn torus_fits_shift_margin() {
        let e = engine(0.1);
        let l = e.torus_sides()[0];
        let a = e.action().fields().radial.profile.value(0.55) * 5.0;
        assert!((l - (2.0 * a + 0.1 * 128.0 / l)).abs() < 1e-12);
    }

    #[test]
    fn element_round_trip() {
        let e = engine(0.1);
        let f: FieldFn = Arc::new(gauss(0.2, -0.3, 0.25));
        let el = e.element_from_fn(f.clone()).unwrap();
        assert!(el.shell_value().norm() < 1e-12);
        for x in [[0.1, 0.2], [1.0, -1.5], [3.2, 0.4], [6.0, 0.0]] {
            assert!((el.eval(&x) - f(&x)).norm() < 1e-12, "{x:?}");
        }
        let conj = el.conj();
        assert!((conj.eval(&[0.4, 0.4]) - f(&[0.4, 0.4]).conj()).norm() < 1e-12);
    }

    #[test]
    fn shell_must_be_constant() {
        let e = engine(0.1);
        let f: FieldFn = Arc::new(|x: &[f64]| Complex64::new(x[0], 0.0));
        assert!(matches!(e.element_from_fn(f), Err(Error::ShellNotConstant { .. })));
    }

    #[test]
    fn zero_hbar_is_pointwise() {
        let e = engine(0.0);
        let grid = BoxGrid::cube(2, 6.0, 33).unwrap();
        let f = GriddedFunction::from_closure(grid.clone(), gauss(0.0, 0.0, 0.25));
        let g = GriddedFunction::from_closure(grid, gauss(0.3, 0.0, 0.25));
        let p = e.deformed_product(&f, &g).unwrap();
        assert_eq!(p.values(), f.pointwise_mul(&g).unwrap().values());
    }

    #[test]
    fn unit_is_exact() {
        let e = engine(0.1);
        let grid = BoxGrid::cube(2, 6.0, 33).unwrap();
        let f = GriddedFunction::from_closure(grid.clone(), gauss(0.3, 0.1, 0.25));
        let one = GriddedFunction::constant(grid, Complex64::new(1.0, 0.0));
        assert_eq!(e.deformed_product(&one, &f).unwrap().values(), f.values());
        assert_eq!(e.deformed_product(&f, &one).unwrap().values(), f.values());
    }

    #[test]
    fn overflow_is_reported() {
        let e = engine(1.0);
        let grid = BoxGrid::cube(2, 6.0, 33).unwrap();
        let mut f = GriddedFunction::from_closure(grid, |x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::new(if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 }, 0.0)
        });
        let mut outcome = Ok(());
        for _ in 0..6 {
            match e.deformed_product(&f, &f) {
                Ok(p) => f = p,
                Err(err) => {
                    outcome = Err(err);
                    break;
                }
            }
        }
        assert!(matches!(outcome, Err(Error::TorusOverflow { .. })), "{outcome:?}");
    }

    #[test]
    fn cutoff_is_invariant() {
        let e = engine(0.1);
        let grid = BoxGrid::cube(2, 8.0, 41).unwrap();
        let r = e.cutoff_invariance_residual(&grid, &[vec![0.5, -1.0], vec![3.0, 2.0]]).unwrap();
        assert!(r < 1e-15);
    }
}
