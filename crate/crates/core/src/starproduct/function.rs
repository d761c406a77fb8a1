use crate::error::{Error, Result};
use crate::starproduct::engine::WarpedElement;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::{Arc, OnceLock};

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

pub const SUPPORT_THRESHOLD: f64 = 1e-14;

/// Regular box grid including both end points; row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
}

impl BoxGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != shape.len() || lo.is_empty() {
            return Err(Error::Dimension("grid axes disagree".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || shape.iter().any(|&s| s < 2) {
            return Err(Error::Domain("grid needs lo < hi and at least 2 points per axis".into()));
        }
        Ok(Self { lo, hi, shape })
    }

    pub fn cube(n: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(vec![-half_width; n], vec![half_width; n], vec![points; n])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.shape[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.shape[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.step(axis)
        }
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.shape[axis]).map(|i| self.coord(axis, i)).collect()
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, v)| *v >= self.lo[a] && *v <= self.hi[a])
    }

    pub fn covers_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        (0..self.dim()).all(|a| self.lo[a] <= lo[a] && self.hi[a] >= hi[a])
    }
}

#[derive(Clone)]
pub enum Provenance {
    ClosedForm(FieldFn),
    Element(Arc<WarpedElement>),
    Resampled,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::ClosedForm(_) => "closed-form",
            Provenance::Element(_) => "engine",
            Provenance::Resampled => "resampled",
        }
    }
}

impl fmt::Debug for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Complex samples on a box grid together with a way of evaluating off-grid.
#[derive(Clone)]
pub struct GriddedFunction {
    grid: BoxGrid,
    values: Vec<Complex64>,
    provenance: Provenance,
    spline: OnceLock<Arc<Spline>>,
}

impl fmt::Debug for GriddedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GriddedFunction")
            .field("grid", &self.grid)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl GriddedFunction {
    pub fn from_fn(grid: BoxGrid, f: FieldFn) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.point(k)))
            .collect();
        Self {
            grid,
            values,
            provenance: Provenance::ClosedForm(f),
            spline: OnceLock::new(),
        }
    }

    pub fn from_closure<F>(grid: BoxGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self::from_fn(grid, Arc::new(f))
    }

    pub fn constant(grid: BoxGrid, c: Complex64) -> Self {
        Self::from_closure(grid, move |_| c)
    }

    pub fn from_samples(grid: BoxGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension("sample count differs from grid size".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("samples must be finite".into()));
        }
        Ok(Self {
            grid,
            values,
            provenance: Provenance::Resampled,
            spline: OnceLock::new(),
        })
    }

    pub(crate) fn from_parts(grid: BoxGrid, values: Vec<Complex64>, provenance: Provenance) -> Self {
        Self {
            grid,
            values,
            provenance,
            spline: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_resampled(&self) -> bool {
        matches!(self.provenance, Provenance::Resampled)
    }

    /// Off-grid evaluation: exact for closed forms and engine elements, cubic spline otherwise.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match &self.provenance {
            Provenance::ClosedForm(f) => f(x),
            Provenance::Element(e) => e.eval(x),
            Provenance::Resampled => self.spline().eval(x),
        }
    }

    /// Evaluator usable after `self` is dropped.
    pub fn evaluator(&self) -> FieldFn {
        match &self.provenance {
            Provenance::ClosedForm(f) => f.clone(),
            Provenance::Element(e) => {
                let e = e.clone();
                Arc::new(move |x| e.eval(x))
            }
            Provenance::Resampled => {
                let s = self.spline().clone();
                Arc::new(move |x| s.eval(x))
            }
        }
    }

    pub fn spline(&self) -> &Arc<Spline> {
        self.spline
            .get_or_init(|| Arc::new(Spline::new(self.grid.clone(), &self.values)))
    }

    pub fn support_box(&self) -> Option<SupportBox> {
        self.support_box_above(SUPPORT_THRESHOLD)
    }

    pub fn support_box_above(&self, threshold: f64) -> Option<SupportBox> {
        let n = self.grid.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut any = false;
        for (k, v) in self.values.iter().enumerate() {
            if v.norm() > threshold {
                any = true;
                let x = self.grid.point(k);
                for a in 0..n {
                    lo[a] = lo[a].min(x[a]);
                    hi[a] = hi[a].max(x[a]);
                }
            }
        }
        any.then_some(SupportBox { lo, hi })
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        if let Provenance::Element(e) = &self.provenance {
            if !e.is_inner_zero() {
                return false;
            }
        }
        self.values.iter().all(|v| *v == self.values[0])
    }

    pub fn conj(&self) -> Self {
        let values = self.values.iter().map(|v| v.conj()).collect();
        let provenance = match &self.provenance {
            Provenance::ClosedForm(f) => {
                let f = f.clone();
                Provenance::ClosedForm(Arc::new(move |x| f(x).conj()))
            }
            Provenance::Element(e) => Provenance::Element(Arc::new(e.conj())),
            Provenance::Resampled => Provenance::Resampled,
        };
        Self::from_parts(self.grid.clone(), values, provenance)
    }

    /// Pointwise product; stays exactly evaluable unless either factor is resampled.
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        let provenance = if self.is_resampled() || other.is_resampled() {
            Provenance::Resampled
        } else {
            let (f, g) = (self.evaluator(), other.evaluator());
            Provenance::ClosedForm(Arc::new(move |x| f(x) * g(x)))
        };
        Ok(Self::from_parts(self.grid.clone(), values, provenance))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let values = self.values.iter().map(|v| v * c).collect();
        let provenance = if self.is_resampled() {
            Provenance::Resampled
        } else {
            let f = self.evaluator();
            Provenance::ClosedForm(Arc::new(move |x| f(x) * c))
        };
        Self::from_parts(self.grid.clone(), values, provenance)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        let provenance = if self.is_resampled() || other.is_resampled() {
            Provenance::Resampled
        } else {
            let (f, g) = (self.evaluator(), other.evaluator());
            Provenance::ClosedForm(Arc::new(move |x| f(x) - g(x)))
        };
        Ok(Self::from_parts(self.grid.clone(), values, provenance))
    }

    /// Keeps samples where `keep` holds and zeroes the rest.
    pub fn masked<F>(&self, keep: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        let keep = Arc::new(keep);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| if keep(&self.grid.point(k)) { *v } else { Complex64::new(0.0, 0.0) })
            .collect();
        let provenance = if self.is_resampled() {
            Provenance::Resampled
        } else {
            let f = self.evaluator();
            Provenance::ClosedForm(Arc::new(move |x| if keep(x) { f(x) } else { Complex64::new(0.0, 0.0) }))
        };
        Self::from_parts(self.grid.clone(), values, provenance)
    }
}

/// Tensor-product cubic B-spline interpolant with mirror boundary conditions.
#[derive(Debug, Clone)]
pub struct Spline {
    grid: BoxGrid,
    coeffs: Vec<Complex64>,
}

const POLE: f64 = -0.267_949_192_431_122_7;

fn prefilter_line(c: &mut [Complex64]) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in c.iter_mut() {
        *v *= gain;
    }
    let horizon = 30usize;
    c[0] = if horizon < n {
        let mut zn = z;
        let mut sum = c[0];
        for v in c.iter().take(horizon).skip(1) {
            sum += v * zn;
            zn *= z;
        }
        sum
    } else {
        let mut zn = z;
        let iz = 1.0 / z;
        let mut z2n = z.powi(n as i32 - 1);
        let mut sum = c[0] + c[n - 1] * z2n;
        z2n *= z2n * iz;
        for v in c.iter().take(n - 1).skip(1) {
            sum += v * (zn + z2n);
            zn *= z;
            z2n *= iz;
        }
        sum / (1.0 - zn * zn)
    };
    for k in 1..n {
        let prev = c[k - 1];
        c[k] += prev * z;
    }
    c[n - 1] = (c[n - 2] * z + c[n - 1]) * (z / (z * z - 1.0));
    for k in (0..n - 1).rev() {
        c[k] = (c[k + 1] - c[k]) * z;
    }
}

fn mirror(k: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = k.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}

impl Spline {
    pub fn new(grid: BoxGrid, values: &[Complex64]) -> Self {
        let mut coeffs = values.to_vec();
        let n = grid.dim();
        for axis in 0..n {
            let len = grid.shape[axis];
            let stride: usize = grid.shape[axis + 1..].iter().product();
            let outer = grid.len() / (len * stride);
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * len * stride + s;
                    for k in 0..len {
                        line[k] = coeffs[base + k * stride];
                    }
                    prefilter_line(&mut line);
                    for k in 0..len {
                        coeffs[base + k * stride] = line[k];
                    }
                }
            }
        }
        Self { grid, coeffs }
    }

    /// Zero outside the grid box.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let n = self.grid.dim();
        if !self.grid.contains(x) {
            return Complex64::new(0.0, 0.0);
        }
        let mut base = vec![0i64; n];
        let mut w = vec![[0.0; 4]; n];
        for a in 0..n {
            let u = (x[a] - self.grid.lo[a]) / self.grid.step(a);
            let f = u.floor();
            base[a] = f as i64 - 1;
            w[a] = bspline_weights(u - f);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let combos = 4usize.pow(n as u32);
        for c in 0..combos {
            let mut weight = 1.0;
            let mut flat = 0usize;
            let mut rest = c;
            for a in 0..n {
                let o = rest % 4;
                rest /= 4;
                weight *= w[a][o];
                let idx = mirror(base[a] + o as i64, self.grid.shape[a]);
                flat = flat * self.grid.shape[a] + idx;
            }
            if weight != 0.0 {
                acc += self.coeffs[flat] * weight;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn grid_indexing() {
        let g = BoxGrid::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(7), vec![0.5, 0.0]);
        assert_eq!(g.ravel(&g.unravel(11)), 11);
        assert!(BoxGrid::new(vec![0.0], vec![0.0], vec![4]).is_err());
    }

    #[test]
    fn spline_interpolates_and_reproduces_smooth_data() {
        let g = BoxGrid::cube(2, 2.0, 81).unwrap();
        let f = |x: &[f64]| c((-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp());
        let gf = GriddedFunction::from_samples(g.clone(), g.points().iter().map(|p| f(p)).collect()).unwrap();
        for k in (0..g.len()).step_by(37) {
            let p = g.point(k);
            assert!((gf.eval(&p) - f(&p)).norm() < 1e-12);
        }
        let mut err: f64 = 0.0;
        for k in 0..200 {
            let p = [-1.7 + 0.017 * k as f64, 1.3 - 0.011 * k as f64];
            err = err.max((gf.eval(&p) - f(&p)).norm());
        }
        assert!(err < 2e-5, "spline error {err}");
    }

    #[test]
    fn support_and_conjugation() {
        let g = BoxGrid::cube(1, 1.0, 21).unwrap();
        let f = GriddedFunction::from_closure(g, |x| if x[0].abs() < 0.25 { Complex64::new(1.0, 2.0) } else { c(0.0) });
        let s = f.support_box().unwrap();
        assert!((s.lo[0] + 0.2).abs() < 1e-12 && (s.hi[0] - 0.2).abs() < 1e-12);
        let back = f.conj().conj();
        assert_eq!(back.values(), f.values());
        assert_eq!(f.conj().eval(&[0.0]), Complex64::new(1.0, -2.0));
    }
}
