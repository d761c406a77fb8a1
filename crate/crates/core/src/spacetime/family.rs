//! Fiberwise products on TM and their transport to M x M and to M.

use crate::action::AdmissibleAction;
use crate::error::{Error, Result};
use crate::poisson::{build_shrunken_fields, BundleSpec, DualBasisSpec, MatrixField, MetricSpec};
use crate::spacetime::geometry::{phi, phi_inverse, BaseGeometry};
use crate::starproduct::engine::{EngineConfig, ProductEngine, WarpedElement};
use crate::starproduct::function::{BoxGrid, FieldFn, GriddedFunction};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Function on TM in chart coordinates: (p, v).
pub type TmFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;
/// Function on M x M: (a, b).
pub type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;

/// Base points snap to the sample list within this distance.
pub const SNAP: f64 = 1e-9;
/// Values below this count as vanishing when checking supports.
pub const SUPPORT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TowerConfig {
    /// Radius of K_p in the base metric; the fibre metric is g_p / radius^2.
    pub fiber_radius: f64,
    /// Radius of U_p in units of the fibre metric; > 1.
    pub neighbourhood: f64,
    pub hbar: f64,
    pub theta0: DMatrix<f64>,
    /// Grid points per fibre axis.
    pub fiber_points: usize,
    /// Fibre grid half-width in units of the largest half-extent of the unit ball.
    pub grid_margin: f64,
    pub engine: EngineConfig,
}

impl TowerConfig {
    pub fn standard(fiber_radius: f64, hbar: f64) -> Self {
        Self {
            fiber_radius,
            neighbourhood: 1.5,
            hbar,
            theta0: crate::action::symplectic(1),
            fiber_points: 128,
            grid_margin: 1.2,
            engine: EngineConfig::default(),
        }
    }
}

/// Samples of a function on TM: one gridded function per base point.
#[derive(Debug, Clone)]
pub struct TmFunction {
    pub base_points: Vec<Vec<f64>>,
    pub fibers: Vec<GriddedFunction>,
}

impl TmFunction {
    pub fn max_abs_diff(&self, other: &TmFunction) -> f64 {
        self.fibers.iter().zip(&other.fibers).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.fibers.iter().map(|f| f.sup_abs()).fold(0.0, f64::max)
    }
}

fn orthonormal_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = g.clone().symmetric_eigen();
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose()
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub struct FiberedProductFamily {
    geometry: Arc<dyn BaseGeometry>,
    base_points: Vec<Vec<f64>>,
    basis: DualBasisSpec,
    bundle: BundleSpec,
    cfg: TowerConfig,
    engines: Mutex<HashMap<Vec<u64>, ProductEngine>>,
}

impl FiberedProductFamily {
    /// Sections default to a g-orthonormal frame.
    pub fn new(geometry: Arc<dyn BaseGeometry>, base_points: Vec<Vec<f64>>, sections: Option<MatrixField>, cfg: TowerConfig) -> Result<Self> {
        let m = geometry.dim();
        if !(cfg.fiber_radius > 0.0) {
            return Err(Error::Domain("fiber radius must be positive".into()));
        }
        for p in &base_points {
            if !geometry.contains(p) {
                return Err(Error::Domain(format!("base point {p:?} is outside the manifold")));
            }
        }
        let geo = geometry.clone();
        let r2 = cfg.fiber_radius * cfg.fiber_radius;
        let metric: MatrixField = Arc::new(move |p: &[f64]| geo.metric(p) / r2);
        let bundle = BundleSpec {
            base_dim: m,
            fiber_dim: m,
            metric: MetricSpec::Varying(metric),
            neighbourhood_radius: cfg.neighbourhood,
        };
        bundle.check(&base_points)?;
        let sections = sections.unwrap_or_else(|| {
            let geo = geometry.clone();
            Arc::new(move |p: &[f64]| orthonormal_frame(&geo.metric(p)))
        });
        let d = (sections)(base_points.first().map(|p| p.as_slice()).unwrap_or(&vec![0.0; m])).ncols();
        if cfg.theta0.nrows() != d || cfg.theta0.ncols() != d {
            return Err(Error::Dimension(format!("Theta0 must be {d} x {d}")));
        }
        Ok(Self {
            geometry,
            base_points,
            basis: DualBasisSpec::sections_only(d, sections),
            bundle,
            cfg,
            engines: Mutex::new(HashMap::new()),
        })
    }

    pub fn geometry(&self) -> &dyn BaseGeometry {
        self.geometry.as_ref()
    }

    pub fn base_points(&self) -> &[Vec<f64>] {
        &self.base_points
    }

    pub fn config(&self) -> &TowerConfig {
        &self.cfg
    }

    /// The sample point within SNAP of p, or p itself.
    fn snap(&self, p: &[f64]) -> Vec<f64> {
        for q in &self.base_points {
            let dist = q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dist <= SNAP {
                return q.clone();
            }
        }
        p.to_vec()
    }

    fn index_of(&self, p: &[f64]) -> Result<usize> {
        let q = self.snap(p);
        self.base_points.iter().position(|b| *b == q).ok_or_else(|| Error::OffGrid(p.to_vec()))
    }

    pub fn action_at(&self, p: &[f64]) -> Result<AdmissibleAction> {
        let q = self.snap(p);
        if self.base_points.contains(&q) {
            return Ok(self.engine_at(&q)?.action().clone());
        }
        let fields = build_shrunken_fields(&self.basis, &self.bundle, p)?;
        AdmissibleAction::from_fields(&fields, &self.cfg.theta0, self.cfg.hbar)
    }

    pub fn engine_at(&self, p: &[f64]) -> Result<ProductEngine> {
        let q = self.snap(p);
        let key: Vec<u64> = q.iter().map(|v| v.to_bits()).collect();
        if let Some(e) = self.engines.lock().expect("engine cache").get(&key) {
            return Ok(e.clone());
        }
        let fields = build_shrunken_fields(&self.basis, &self.bundle, &q)?;
        let action = AdmissibleAction::from_fields(&fields, &self.cfg.theta0, self.cfg.hbar)?;
        let engine = ProductEngine::new(action, self.cfg.engine.clone())?;
        self.engines.lock().expect("engine cache").insert(key, engine.clone());
        Ok(engine)
    }

    pub fn fiber_grid(&self, p: &[f64]) -> Result<BoxGrid> {
        let metric = self.bundle.metric_at(p)?;
        let half = (0..metric.dim()).map(|i| metric.half_extent(i)).fold(0.0, f64::max) * self.cfg.grid_margin;
        BoxGrid::cube(metric.dim(), half, self.cfg.fiber_points)
    }

    /// Whether v lies in U_p.
    pub fn in_u(&self, p: &[f64], v: &[f64]) -> Result<bool> {
        Ok(self.bundle.metric_at(p)?.norm(v) < self.cfg.neighbourhood)
    }

    pub fn sample_tm(&self, f: &TmFn) -> Result<TmFunction> {
        let mut fibers = Vec::with_capacity(self.base_points.len());
        for p in &self.base_points {
            let (f, p2) = (f.clone(), p.clone());
            fibers.push(GriddedFunction::from_closure(self.fiber_grid(p)?, move |v| f(&p2, v)));
        }
        Ok(TmFunction {
            base_points: self.base_points.clone(),
            fibers,
        })
    }

    pub fn star_tm(&self, f: &TmFunction, g: &TmFunction) -> Result<TmFunction> {
        if f.base_points != self.base_points || g.base_points != self.base_points {
            return Err(Error::GridMismatch);
        }
        let mut fibers = Vec::with_capacity(self.base_points.len());
        for (k, p) in self.base_points.iter().enumerate() {
            fibers.push(self.engine_at(p)?.deformed_product(&f.fibers[k], &g.fibers[k])?);
        }
        Ok(TmFunction {
            base_points: self.base_points.clone(),
            fibers,
        })
    }

    pub fn restrict_to_fiber(&self, p: &[f64], f: &TmFunction) -> Result<GriddedFunction> {
        let k = self.index_of(p)?;
        Ok(f.fibers[k].clone())
    }

    /// sup |i_p^*(f*g) - i_p^* f *_p i_p^* g|, relative to the size of the right side.
    pub fn homomorphism_residual_ip(&self, f: &TmFunction, g: &TmFunction, p: &[f64]) -> Result<f64> {
        let whole = self.star_tm(f, g)?;
        let lhs = self.restrict_to_fiber(p, &whole)?;
        let rhs = self.engine_at(p)?.deformed_product(&self.restrict_to_fiber(p, f)?, &self.restrict_to_fiber(p, g)?)?;
        Ok(relative(lhs.max_abs_diff(&rhs), rhs.sup_abs()))
    }

    /// (f*g)|_U against f|_U * g|_U, fibre by fibre.
    pub fn restriction_homomorphism_check(&self, f: &TmFunction, g: &TmFunction) -> Result<f64> {
        let restrict = |h: &TmFunction| -> Result<TmFunction> {
            let mut fibers = Vec::new();
            for (p, fib) in h.base_points.iter().zip(&h.fibers) {
                let metric = self.bundle.metric_at(p)?;
                let r = self.cfg.neighbourhood;
                let outside = fib
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| metric.norm(&fib.grid().point(*k)) >= r)
                    .map(|(_, v)| v.norm())
                    .fold(0.0, f64::max);
                if outside > SUPPORT_EPS {
                    return Err(Error::SupportEscapes { value: outside });
                }
                fibers.push(fib.masked(move |v| metric.norm(v) < r));
            }
            Ok(TmFunction {
                base_points: h.base_points.clone(),
                fibers,
            })
        };
        let lhs = restrict(&self.star_tm(f, g)?)?;
        let rhs = self.star_tm(&restrict(f)?, &restrict(g)?)?;
        let rhs = restrict(&rhs)?;
        Ok(relative(lhs.max_abs_diff(&rhs), rhs.sup_abs()))
    }

    pub fn phi(&self, p: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        phi(self.geometry.as_ref(), p, v)
    }

    pub fn phi_inverse(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        phi_inverse(self.geometry.as_ref(), a, b)
    }

    /// Phi^* f: (p, v) -> f(Phi(p, v)) on U, zero elsewhere.
    pub fn pullback_phi(&self, ft: &PairFn) -> TmFn {
        let geometry = self.geometry.clone();
        let bundle = self.bundle.clone();
        let r = self.cfg.neighbourhood;
        let ft = ft.clone();
        Arc::new(move |p: &[f64], v: &[f64]| {
            let inside = bundle.metric_at(p).map(|m| m.norm(v) < r).unwrap_or(false);
            if !inside {
                return Complex64::new(0.0, 0.0);
            }
            match phi(geometry.as_ref(), p, v) {
                Ok((a, b)) => ft(&a, &b),
                Err(_) => Complex64::new(0.0, 0.0),
            }
        })
    }

    /// Phi_* f: (a, b) -> f(Phi^{-1}(a, b)) on V, zero elsewhere.
    pub fn pushforward_phi(&self, f: &TmFn) -> PairFn {
        let geometry = self.geometry.clone();
        let bundle = self.bundle.clone();
        let r = self.cfg.neighbourhood;
        let f = f.clone();
        Arc::new(move |a: &[f64], b: &[f64]| {
            let Ok((p, v)) = phi_inverse(geometry.as_ref(), a, b) else {
                return Complex64::new(0.0, 0.0);
            };
            let inside = bundle.metric_at(&p).map(|m| m.norm(&v) < r).unwrap_or(false);
            if inside {
                f(&p, &v)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Largest |f(Phi(p, v))| on the sphere |v|_h = neighbourhood; supp f must stay inside V.
    pub fn check_support_in_v(&self, ft: &PairFn, p: &[f64]) -> Result<()> {
        let metric = self.bundle.metric_at(p)?;
        let r = self.cfg.neighbourhood;
        let dirs = sphere_samples(metric.dim(), 256);
        let mut worst: f64 = 0.0;
        for z in dirs {
            let z: Vec<f64> = z.iter().map(|c| c * r).collect();
            let v = metric.from_orthonormal(&z);
            let (a, b) = self.phi(p, &v)?;
            worst = worst.max(ft(&a, &b).norm());
        }
        if worst > SUPPORT_EPS {
            return Err(Error::SupportEscapes { value: worst });
        }
        Ok(())
    }

    fn fiber_product(&self, p: &[f64], f: FieldFn, g: FieldFn) -> Result<WarpedElement> {
        let engine = self.engine_at(p)?;
        let a = engine.element_from_fn(f)?;
        let b = engine.element_from_fn(g)?;
        engine.multiply(&a, &b)
    }

    /// The product on M x M at the given points: conjugation by Phi on V, pointwise elsewhere.
    pub fn star_mxm(&self, ft: &PairFn, gt: &PairFn, points: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<Complex64>> {
        let fp = self.pullback_phi(ft);
        let gp = self.pullback_phi(gt);
        let mut cache: HashMap<Vec<u64>, WarpedElement> = HashMap::new();
        let mut out = Vec::with_capacity(points.len());
        for (a, b) in points {
            let (p, v) = self.phi_inverse(a, b)?;
            if !self.in_u(&p, &v)? {
                out.push(ft(a, b) * gt(a, b));
                continue;
            }
            let p = self.snap(&p);
            let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
            if !cache.contains_key(&key) {
                self.check_support_in_v(ft, &p)?;
                self.check_support_in_v(gt, &p)?;
                let (fq, gq, pp) = (fp.clone(), gp.clone(), p.clone());
                let pp2 = pp.clone();
                let fe: FieldFn = Arc::new(move |v| fq(&pp, v));
                let ge: FieldFn = Arc::new(move |v| gq(&pp2, v));
                cache.insert(key.clone(), self.fiber_product(&p, fe, ge)?);
            }
            out.push(cache[&key].eval(&v));
        }
        Ok(out)
    }

    /// Relative sup over the fibre grid at p of |Phi^*(f * g) - Phi^* f *_p Phi^* g| on U_p.
    pub fn phi_homomorphism_residual(&self, ft: &PairFn, gt: &PairFn, p: &[f64]) -> Result<f64> {
        let grid = self.fiber_grid(p)?;
        let keep: Vec<usize> = (0..grid.len()).filter(|k| self.in_u(p, &grid.point(*k)).unwrap_or(false)).collect();
        let mut points = Vec::with_capacity(keep.len());
        for k in &keep {
            points.push(self.phi(p, &grid.point(*k))?);
        }
        let lhs = self.star_mxm(ft, gt, &points)?;
        let (fp, gp) = (self.pullback_phi(ft), self.pullback_phi(gt));
        let (p1, p2) = (p.to_vec(), p.to_vec());
        let fg = GriddedFunction::from_closure(grid.clone(), move |v| fp(&p1, v));
        let gg = GriddedFunction::from_closure(grid.clone(), move |v| gp(&p2, v));
        let rhs = self.engine_at(p)?.deformed_product(&fg, &gg)?;
        let diff = keep.iter().zip(&lhs).map(|(k, l)| (l - rhs.values()[*k]).norm()).fold(0.0, f64::max);
        let scale = keep.iter().map(|k| rhs.values()[*k].norm()).fold(0.0, f64::max);
        Ok(relative(diff, scale))
    }

    /// Relative sup over U_p of |Phi^*(alpha~_v f) - alpha_v Phi^* f| with alpha~ = Phi alpha Phi^{-1}.
    pub fn phi_equivariance_residual(&self, ft: &PairFn, p: &[f64], v: &[f64]) -> Result<f64> {
        let grid = self.fiber_grid(p)?;
        let action = self.action_at(p)?;
        let fp = self.pullback_phi(ft);
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..grid.len() {
            let w = grid.point(k);
            if !self.in_u(p, &w)? {
                continue;
            }
            let (a, b) = self.phi(p, &w)?;
            let (q, u) = self.phi_inverse(&a, &b)?;
            let moved = self.action_at(&q)?.fields().flow(v, &u);
            let lhs = if self.in_u(&q, &moved)? {
                let (a2, b2) = self.phi(&q, &moved)?;
                ft(&a2, &b2)
            } else {
                Complex64::new(0.0, 0.0)
            };
            let rhs = fp(p, &action.fields().flow(v, &w));
            diff = diff.max((lhs - rhs).norm());
            scale = scale.max(rhs.norm());
        }
        Ok(relative(diff, scale))
    }

    /// The local product f *~_p g on M evaluated at the given points.
    pub fn star_p_on_m(&self, p: &[f64], f: &FieldFn, g: &FieldFn, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        let geometry = self.geometry.clone();
        let pull = |h: &FieldFn| -> FieldFn {
            let (geometry, h, p) = (geometry.clone(), h.clone(), p.to_vec());
            Arc::new(move |v: &[f64]| match geometry.exp(&p, v) {
                Ok(m) => h(&m),
                Err(_) => Complex64::new(0.0, 0.0),
            })
        };
        let mut product: Option<WarpedElement> = None;
        let mut out = Vec::with_capacity(points.len());
        for m in points {
            let inside = match self.geometry.log(p, m) {
                Ok(v) if self.in_u(p, &v)? => Some(v),
                _ => None,
            };
            match inside {
                None => out.push(f(m) * g(m)),
                Some(v) => {
                    if product.is_none() {
                        product = Some(self.fiber_product(p, pull(f), pull(g))?);
                    }
                    out.push(product.as_ref().expect("product").eval(&v));
                }
            }
        }
        Ok(out)
    }

    /// Relative sup over U_p of |exp_p^*(f *~_p g) - exp_p^* f *_p exp_p^* g|.
    pub fn residual_expp(&self, p: &[f64], f: &FieldFn, g: &FieldFn) -> Result<f64> {
        let grid = self.fiber_grid(p)?;
        let keep: Vec<usize> = (0..grid.len()).filter(|k| self.in_u(p, &grid.point(*k)).unwrap_or(false)).collect();
        let mut points = Vec::with_capacity(keep.len());
        for k in &keep {
            points.push(self.geometry.exp(p, &grid.point(*k))?);
        }
        let lhs = self.star_p_on_m(p, f, g, &points)?;
        let pull = |h: &FieldFn| {
            let (geometry, h, p) = (self.geometry.clone(), h.clone(), p.to_vec());
            GriddedFunction::from_closure(grid.clone(), move |v| h(&geometry.exp(&p, v).expect("exp")))
        };
        let rhs = self.engine_at(p)?.deformed_product(&pull(f), &pull(g))?;
        let diff = keep.iter().zip(&lhs).map(|(k, l)| (l - rhs.values()[*k]).norm()).fold(0.0, f64::max);
        let scale = keep.iter().map(|k| rhs.values()[*k].norm()).fold(0.0, f64::max);
        Ok(relative(diff, scale))
    }

    /// max |f *~_p g - g *~_p f| over the points outside V_p, with the number of such points.
    pub fn commutator_outside_vp(&self, p: &[f64], f: &FieldFn, g: &FieldFn, points: &[Vec<f64>]) -> Result<(f64, usize)> {
        let outside: Vec<Vec<f64>> = points
            .iter()
            .filter(|m| match self.geometry.log(p, m) {
                Ok(v) => !self.in_u(p, &v).unwrap_or(false),
                Err(_) => true,
            })
            .cloned()
            .collect();
        let fg = self.star_p_on_m(p, f, g, &outside)?;
        let gf = self.star_p_on_m(p, g, f, &outside)?;
        let worst = fg.iter().zip(&gf).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        Ok((worst, outside.len()))
    }

    /// max over the fibre grid at p0 of |(f*g)(q) - f(q) g(q)|, for sections vanishing at p0.
    pub fn delta_state_along_fiber(&self, p0: &[f64], f: &GriddedFunction, g: &GriddedFunction) -> Result<f64> {
        let engine = self.engine_at(p0)?;
        let grid = f.grid();
        let mut worst: f64 = 0.0;
        for k in 0..grid.len() {
            let q = grid.point(k);
            worst = worst.max(crate::starproduct::checks::delta_state_residual(&engine, &q, f, g)?);
        }
        Ok(worst)
    }
}

/// Unit vectors spread over the sphere S^{n-1}.
fn sphere_samples(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let per = 5usize;
            let mut out = Vec::new();
            for p in crate::action::lattice(&vec![-1.0; n], &vec![1.0; n], per) {
                let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                if p.iter().any(|x| x.abs() == 1.0) && r > 0.0 {
                    out.push(p.iter().map(|x| x / r).collect());
                }
            }
            out
        }
    }
}
