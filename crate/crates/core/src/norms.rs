//! Estimates of the deformed C*-seminorms through the left-regular operator on L^2(V).

use crate::action::{AdmissibleAction, Compactum};
use crate::error::{Error, Result};
use crate::starproduct::engine::ProductEngine;
use crate::starproduct::function::GriddedFunction;
use crate::starproduct::spectral::{samples_to_modes, twisted_convolution_truncated, ModeArray};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest Gram condition number accepted for a basis.
pub const GRAM_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BasisKind {
    /// Plane waves on the torus box of V.
    Fourier,
    /// Products of Hermite functions scaled to the box.
    Hermite,
}

/// Truncated basis of L^2(V): `per_axis` functions along each of the d axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleVectorBasis {
    pub kind: BasisKind,
    pub per_axis: usize,
    pub d: usize,
}

impl ModuleVectorBasis {
    pub fn fourier(d: usize, per_axis: usize) -> Self {
        Self {
            kind: BasisKind::Fourier,
            per_axis,
            d,
        }
    }

    pub fn hermite(d: usize, per_axis: usize) -> Self {
        Self {
            kind: BasisKind::Hermite,
            per_axis,
            d,
        }
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_per_axis(&self, per_axis: usize) -> Self {
        Self { per_axis, ..self.clone() }
    }
}

/// Samples of v -> a(orbit_q(v)) on a periodic grid of a box in V.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSymbol {
    pub q: Vec<f64>,
    pub centre: Vec<f64>,
    pub periods: Vec<f64>,
    pub points: usize,
    pub samples: Vec<Complex64>,
    /// Set when the symbol is constant (q fixed, or a constant).
    pub constant: Option<Complex64>,
}

impl OrbitSymbol {
    /// Sample point j (flat index) of the periodic grid.
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let d = self.periods.len();
        let mut v = vec![0.0; d];
        for a in (0..d).rev() {
            let j = flat % self.points;
            flat /= self.points;
            v[a] = self.centre[a] - 0.5 * self.periods[a] + self.periods[a] * j as f64 / self.points as f64;
        }
        v
    }

    pub fn modes(&self) -> ModeArray {
        samples_to_modes(&self.samples, self.points, &self.periods)
    }

    pub fn sup_abs(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Value of a far out along every orbit: the mean over the sphere |x|_h = 1 - 1e-3.
fn value_at_boundary(action: &AdmissibleAction, a: &GriddedFunction) -> Complex64 {
    let eval = a.evaluator();
    let n = action.n();
    let metric = action.metric();
    let dirs: Vec<Vec<f64>> = if n == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..64)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                let mut z = vec![0.0; n];
                z[0] = t.cos();
                z[1] = t.sin();
                z
            })
            .collect()
    };
    let r = 1.0 - 1e-3;
    let sum: Complex64 = dirs.iter().map(|z| eval(&metric.from_orthonormal(&z.iter().map(|c| c * r).collect::<Vec<_>>()))).sum();
    sum / dirs.len() as f64
}

/// phi(a) at q: v -> a(phi_v(q)), sampled on `points` per axis over a box holding its non-constant part.
pub fn orbit_symbol(action: &AdmissibleAction, a: &GriddedFunction, q: &[f64], points: usize) -> Result<OrbitSymbol> {
    let d = action.d();
    if q.len() != action.n() {
        return Err(Error::Dimension("q must be a fiber point".into()));
    }
    let constant_symbol = |c: Complex64| OrbitSymbol {
        q: q.to_vec(),
        centre: vec![0.0; d],
        periods: vec![1.0; d],
        points,
        samples: vec![c; points.pow(d as u32)],
        constant: Some(c),
    };
    let fields = action.fields();
    if a.is_constant() {
        return Ok(constant_symbol(a.values()[0]));
    }
    if !fields.in_ball(q) {
        return Ok(constant_symbol(a.eval(q)));
    }
    let far = value_at_boundary(action, a);
    let peak = a.values().iter().map(|v| (v - far).norm()).fold(0.0, f64::max);
    let e = &fields.directions;
    let pinv = e.clone().pseudo_inverse(1e-12).map_err(|m| Error::Conditioning { condition: m.len() as f64 })?;
    let yq = DVector::from_vec(fields.warp(q)?);
    let grid = a.grid();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (k, v) in a.values().iter().enumerate() {
        if (v - far).norm() <= 1e-13 * peak {
            continue;
        }
        let x = grid.point(k);
        if !fields.in_ball(&x) {
            continue;
        }
        let Ok(y) = fields.warp(&x) else { continue };
        let w = &pinv * (DVector::from_vec(y) - &yq);
        for i in 0..d {
            lo[i] = lo[i].min(w[i]);
            hi[i] = hi[i].max(w[i]);
        }
    }
    if lo[0] > hi[0] {
        return Ok(constant_symbol(far));
    }
    let step = (0..grid.dim()).map(|i| grid.step(i)).fold(0.0, f64::max) * pinv.norm();
    let centre: Vec<f64> = (0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect();
    let periods: Vec<f64> = (0..d).map(|i| hi[i] - lo[i] + 2.0 * step).collect();
    let mut sym = OrbitSymbol {
        q: q.to_vec(),
        centre,
        periods,
        points,
        samples: Vec::new(),
        constant: None,
    };
    let eval = a.evaluator();
    sym.samples = (0..points.pow(d as u32))
        .into_par_iter()
        .map(|k| eval(&fields.flow(&sym.point(k), q)))
        .collect();
    Ok(sym)
}

/// Compression of the left-regular operator F -> S * F onto the Fourier modes |k_a| < per_axis/2.
#[derive(Debug, Clone)]
pub struct LeftOperator {
    symbol: ModeArray,
    adjoint: ModeArray,
    theta: DMatrix<f64>,
    lo: Vec<i64>,
    shape: Vec<usize>,
}

impl LeftOperator {
    pub fn new(sym: &OrbitSymbol, theta: &DMatrix<f64>, per_axis: usize) -> Result<Self> {
        let d = sym.periods.len();
        if per_axis < 1 || 2 * per_axis > sym.points {
            return Err(Error::Domain(format!("truncation {per_axis} needs at least {} symbol samples per axis", 2 * per_axis)));
        }
        let full = sym.modes();
        let reach = per_axis as i64 - 1;
        let slo = vec![-reach; d];
        let sshape = vec![2 * per_axis - 1; d];
        let symbol = full.restricted(&slo, &sshape);
        let mut adjoint = symbol.clone();
        for (flat, v) in adjoint.data.iter_mut().enumerate() {
            let k: Vec<i64> = symbol.mode_of(flat).iter().map(|x| -x).collect();
            *v = symbol.get(&k).conj();
        }
        Ok(Self {
            symbol,
            adjoint,
            theta: theta.clone(),
            lo: vec![-(per_axis as i64 / 2); d],
            shape: vec![per_axis; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn wrap(&self, x: &[Complex64]) -> ModeArray {
        let mut m = ModeArray::zeros(self.lo.clone(), self.shape.clone(), self.symbol.periods.clone());
        m.data.copy_from_slice(x);
        m
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(twisted_convolution_truncated(&self.symbol, &self.wrap(x), &self.theta, &self.lo, &self.shape)?.data)
    }

    pub fn apply_adjoint(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(twisted_convolution_truncated(&self.adjoint, &self.wrap(x), &self.theta, &self.lo, &self.shape)?.data)
    }

    /// Dense matrix of the compression; column j is the image of basis vector j.
    pub fn matrix(&self) -> Result<DMatrix<Complex64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![ZERO; n];
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(&e)?;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative change of the top Ritz value over the last iteration.
    pub last_change: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value through Lanczos on A*A with full reorthogonalization.
pub fn largest_singular_value(op: &LeftOperator, max_iter: usize, tol: f64) -> Result<SpectralEstimate> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut basis: Vec<Vec<Complex64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev = 0.0;
    let mut change = f64::INFINITY;
    let steps = max_iter.min(n).max(1);
    for it in 0..steps {
        let cur = basis.last().expect("basis").clone();
        let mut w = op.apply_adjoint(&op.apply(&cur)?)?;
        let a = dot(&cur, &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let top = tridiagonal_max(&alpha, &beta);
        change = if top == 0.0 { 0.0 } else { (top - prev).abs() / top };
        prev = top;
        let bn = norm(&w);
        if change <= tol && it >= 2 || bn <= 1e-14 * top.max(1e-300) || it + 1 == steps {
            return Ok(SpectralEstimate {
                value: top.max(0.0).sqrt(),
                iterations: it + 1,
                last_change: change,
            });
        }
        beta.push(bn);
        basis.push(w.iter().map(|x| x / bn).collect());
    }
    Ok(SpectralEstimate {
        value: prev.max(0.0).sqrt(),
        iterations: steps,
        last_change: change,
    })
}

fn tridiagonal_max(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Orthonormal Hermite functions h_0..h_{m-1} at x / scale, normalised on R.
fn hermite_functions(m: usize, x: f64, scale: f64) -> Vec<f64> {
    let t = x / scale;
    let mut out = Vec::with_capacity(m);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * t * t).exp();
    out.push(h0);
    if m > 1 {
        out.push(std::f64::consts::SQRT_2 * t * h0);
    }
    for n in 1..m.saturating_sub(1) {
        let next = (2.0 / (n as f64 + 1.0)).sqrt() * t * out[n] - (n as f64 / (n as f64 + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    let norm = scale.sqrt();
    out.iter().map(|v| v / norm).collect()
}

/// Gram matrix and left-operator matrix of a Hermite basis, by quadrature on the symbol grid.
pub fn hermite_matrices(sym: &OrbitSymbol, theta: &DMatrix<f64>, per_axis: usize) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let d = sym.periods.len();
    let count = per_axis.pow(d as u32);
    let total = sym.points.pow(d as u32);
    let scale: Vec<f64> = sym.periods.iter().map(|l| l / (2.0 * (2.0 * per_axis as f64 + 1.0).sqrt() + 8.0)).collect();
    let mut funcs: Vec<Vec<Complex64>> = vec![vec![ZERO; total]; count];
    for k in 0..total {
        let v = sym.point(k);
        let per: Vec<Vec<f64>> = (0..d).map(|a| hermite_functions(per_axis, v[a] - sym.centre[a], scale[a])).collect();
        for (j, f) in funcs.iter_mut().enumerate() {
            let mut rest = j;
            let mut val = 1.0;
            for a in (0..d).rev() {
                val *= per[a][rest % per_axis];
                rest /= per_axis;
            }
            f[k] = Complex64::new(val, 0.0);
        }
    }
    let modes: Vec<ModeArray> = funcs.iter().map(|f| samples_to_modes(f, sym.points, &sym.periods)).collect();
    let s = sym.modes();
    let volume: f64 = sym.periods.iter().product();
    let images: Vec<ModeArray> = modes
        .par_iter()
        .map(|m| twisted_convolution_truncated(&s, m, theta, &m.lo, &m.shape))
        .collect::<Result<Vec<_>>>()?;
    let mut gram = DMatrix::zeros(count, count);
    let mut mat = DMatrix::zeros(count, count);
    for i in 0..count {
        for j in 0..count {
            gram[(i, j)] = dot(&modes[i].data, &modes[j].data) * volume;
            mat[(i, j)] = dot(&modes[i].data, &images[j].data) * volume;
        }
    }
    Ok((gram, mat))
}

/// Condition number of a Hermitian positive Gram matrix; errors above the limit.
pub fn gram_condition(gram: &DMatrix<Complex64>) -> Result<f64> {
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= GRAM_CONDITION_LIMIT) {
        return Err(Error::Conditioning { condition });
    }
    Ok(condition)
}

/// Largest singular value of the compressed operator in the basis with Gram matrix G: ||G^{-1/2} M G^{-1/2}||.
fn dense_norm(gram: &DMatrix<Complex64>, mat: &DMatrix<Complex64>) -> Result<f64> {
    gram_condition(gram)?;
    let eig = gram.clone().symmetric_eigen();
    let inv_sqrt = eig.eigenvalues.map(|l| Complex64::new(1.0 / l.sqrt(), 0.0));
    let u = &eig.eigenvectors;
    let w = u * DMatrix::from_diagonal(&inv_sqrt) * u.adjoint();
    let a = &w * mat * &w;
    Ok(a.singular_values().iter().copied().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormConfig {
    /// Points per axis on which the sup over q in L is sampled.
    pub density: usize,
    /// Symbol samples per axis.
    pub symbol_points: usize,
    pub lanczos_iterations: usize,
    pub lanczos_tolerance: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            density: 5,
            symbol_points: 256,
            lanczos_iterations: 200,
            lanczos_tolerance: 1e-12,
        }
    }
}

/// Operator-norm estimate for the symbol at one point.
pub fn symbol_norm(sym: &OrbitSymbol, theta: &DMatrix<f64>, basis: &ModuleVectorBasis, cfg: &NormConfig) -> Result<f64> {
    if let Some(c) = sym.constant {
        return Ok(c.norm());
    }
    match basis.kind {
        BasisKind::Fourier => {
            let op = LeftOperator::new(sym, theta, basis.per_axis)?;
            Ok(largest_singular_value(&op, cfg.lanczos_iterations, cfg.lanczos_tolerance)?.value)
        }
        BasisKind::Hermite => {
            let (g, m) = hermite_matrices(sym, theta, basis.per_axis)?;
            dense_norm(&g, &m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub samples: usize,
    /// (per-axis truncation, estimate at argmax) for growing truncations.
    pub truncation_curve: Vec<(usize, f64)>,
}

/// Truncations per_axis/4, per_axis/2, per_axis (those >= 2).
fn ladder(per_axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [per_axis / 4, per_axis / 2, per_axis].into_iter().filter(|k| *k >= 2).collect();
    out.dedup();
    out
}

/// Spread of the last two truncations, the resolution to which an estimate is trusted.
pub fn estimator_tolerance(est: &SeminormEstimate) -> f64 {
    match est.truncation_curve.as_slice() {
        [.., a, b] => (b.1 - a.1).abs(),
        _ => 0.0,
    }
}

/// max over sampled q in L of ||L_{phi(a)(q)}||; a lower-bound estimate of ||a||_{Theta,L}.
pub fn deformed_seminorm(action: &AdmissibleAction, a: &GriddedFunction, l: &Compactum, basis: &ModuleVectorBasis, cfg: &NormConfig) -> Result<SeminormEstimate> {
    if basis.d != action.d() {
        return Err(Error::Dimension("basis dimension must equal d".into()));
    }
    let theta = action.theta0() * action.hbar();
    let qs = l.sample(cfg.density);
    let values = qs
        .iter()
        .map(|q| {
            let sym = orbit_symbol(action, a, q, cfg.symbol_points)?;
            symbol_norm(&sym, &theta, basis, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (best, value) = values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let argmax = qs[best].clone();
    let sym = orbit_symbol(action, a, &argmax, cfg.symbol_points)?;
    let truncation_curve = ladder(basis.per_axis)
        .into_iter()
        .map(|k| {
            if k == basis.per_axis {
                return Ok((k, value));
            }
            Ok((k, symbol_norm(&sym, &theta, &basis.with_per_axis(k), cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeminormEstimate {
        value,
        argmax,
        samples: qs.len(),
        truncation_curve,
    })
}

/// | ||a* a||_{Theta,L} - ||a||^2 | / ||a||^2 with the product taken by the engine.
pub fn cstar_identity_residual(engine: &ProductEngine, a: &GriddedFunction, l: &Compactum, basis: &ModuleVectorBasis, cfg: &NormConfig) -> Result<f64> {
    let action = engine.action();
    let na = deformed_seminorm(action, a, l, basis, cfg)?.value;
    if na < 1e-12 {
        return Err(Error::Degenerate(na));
    }
    let square = engine.deformed_product(&a.conj(), a)?;
    let ns = deformed_seminorm(action, &square, l, basis, cfg)?.value;
    Ok((ns - na * na).abs() / (na * na))
}

/// Residual between the seminorm on L of a restricted to L' (zero outside) and ||a||_{Theta,L}.
pub fn restriction_compatibility(action: &AdmissibleAction, a: &GriddedFunction, l: &Compactum, l_outer: &Compactum, basis: &ModuleVectorBasis, cfg: &NormConfig) -> Result<f64> {
    if !l_outer.contains_compactum(l) {
        return Err(Error::Domain("L must be contained in L'".into()));
    }
    let outer = l_outer.clone();
    let restricted = a.masked(move |x| outer.contains(x));
    let full = deformed_seminorm(action, a, l, basis, cfg)?.value;
    let part = deformed_seminorm(action, &restricted, l, basis, cfg)?.value;
    Ok((full - part).abs())
}

/// Seminorm estimates on a nested chain of boxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormFamily {
    pub boxes: Vec<(Vec<f64>, Vec<f64>)>,
    pub estimates: Vec<f64>,
}

impl SeminormFamily {
    pub fn compute(action: &AdmissibleAction, a: &GriddedFunction, chain: &[Compactum], basis: &ModuleVectorBasis, cfg: &NormConfig) -> Result<Self> {
        for w in chain.windows(2) {
            if !w[1].contains_compactum(&w[0]) {
                return Err(Error::Domain("compacta must be nested".into()));
            }
        }
        let estimates = chain
            .iter()
            .map(|l| Ok(deformed_seminorm(action, a, l, basis, cfg)?.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            boxes: chain.iter().map(|l| (l.lo.clone(), l.hi.clone())).collect(),
            estimates,
        })
    }

    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.estimates.windows(2).all(|w| w[0] <= w[1] + tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::starproduct::function::BoxGrid;

    fn plane_symbol(points: usize, k: [i64; 2], periods: f64) -> OrbitSymbol {
        let mut sym = OrbitSymbol {
            q: vec![0.0, 0.0],
            centre: vec![0.0, 0.0],
            periods: vec![periods; 2],
            points,
            samples: Vec::new(),
            constant: None,
        };
        sym.samples = (0..points * points)
            .map(|j| {
                let v = sym.point(j);
                let ph = 2.0 * std::f64::consts::PI * (k[0] as f64 * v[0] + k[1] as f64 * v[1]) / periods;
                Complex64::from_polar(1.0, ph)
            })
            .collect();
        sym
    }

    #[test]
    fn plane_wave_symbol_is_unitary() {
        let sym = plane_symbol(32, [0, 0], 3.0);
        let theta = crate::action::symplectic(1) * 0.3;
        let m = LeftOperator::new(&sym, &theta, 8).unwrap().matrix().unwrap();
        let id = DMatrix::<Complex64>::identity(64, 64);
        assert!((&m - &id).norm() < 1e-12);
        let sym = plane_symbol(32, [1, -2], 3.0);
        let m = LeftOperator::new(&sym, &theta, 8).unwrap().matrix().unwrap();
        let sv = m.singular_values();
        let ones = sv.iter().filter(|s| (**s - 1.0).abs() < 1e-12).count();
        // the shift moves some modes out of the truncation box
        assert_eq!(ones, (8 - 1) * (8 - 2));
        assert!(sv.iter().all(|s| *s < 1.0 + 1e-12));
    }

    #[test]
    fn adjoint_matches_dense() {
        let mut sym = plane_symbol(32, [0, 0], 2.5);
        for (j, s) in sym.samples.iter_mut().enumerate() {
            *s = Complex64::new((j as f64 * 0.37).sin(), (j as f64 * 0.11).cos());
        }
        let theta = crate::action::symplectic(1) * 0.2;
        let op = LeftOperator::new(&sym, &theta, 6).unwrap();
        let m = op.matrix().unwrap();
        let x: Vec<Complex64> = (0..36).map(|i| Complex64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let y = op.apply_adjoint(&x).unwrap();
        let dense = m.adjoint() * DVector::from_vec(x);
        let err = y.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        let lanczos = largest_singular_value(&op, 60, 1e-14).unwrap().value;
        let exact = m.singular_values().iter().copied().fold(0.0, f64::max);
        assert!((lanczos - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn unit_has_norm_one() {
        let action = AdmissibleAction::standard_plane(5.0, 0.1).unwrap();
        let grid = BoxGrid::cube(2, 6.0, 65).unwrap();
        let one = GriddedFunction::constant(grid, Complex64::new(1.0, 0.0));
        let est = deformed_seminorm(&action, &one, &Compactum::cube(2, 6.0), &ModuleVectorBasis::fourier(2, 16), &NormConfig::default()).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn hermite_gram_is_well_conditioned() {
        let sym = plane_symbol(64, [0, 0], 8.0);
        let (g, m) = hermite_matrices(&sym, &DMatrix::zeros(2, 2), 4).unwrap();
        assert!(gram_condition(&g).unwrap() < 1.0 + 1e-8);
        assert!((dense_norm(&g, &m).unwrap() - 1.0).abs() < 1e-8);
    }
}
