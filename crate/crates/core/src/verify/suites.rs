use super::fixtures::{random_bump, random_overlapping_pair, rk45, windowed_gaussian, Bump, WINDOW};
use super::Recorder;
use crate::action::{symplectic, AdmissibleAction, Compactum};
use crate::error::Result;
use crate::geometry::{overflow_radius, RadialDiffeo};
use crate::norms::{cstar_identity_residual, deformed_seminorm, estimator_tolerance, restriction_compatibility, ModuleVectorBasis, NormConfig, SeminormFamily};
use crate::poisson::{FiberFields, FiberMetric, MatrixField};
use crate::spacetime::{FiberedProductFamily, Flat, HyperbolicDisk, PairFn, TmFn, TowerConfig};
use crate::starproduct::checks::{delta_state_residual, derive_semiclassical_constant, observed_order, semiclassical_residual, support_inclusion_check, SEMICLASSICAL_CONSTANT};
use crate::starproduct::engine::{EngineConfig, ProductEngine};
use crate::starproduct::function::{BoxGrid, FieldFn, GriddedFunction};
use crate::starproduct::quadrature::{oscillatory_quadrature, QuadratureConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

const RADIUS: f64 = 5.0;
const HBAR: f64 = 0.1;
/// Bumps stay inside this fraction of K, where the torus represents them.
const REACH: f64 = 0.55;

fn plane_grid() -> Result<BoxGrid> {
    BoxGrid::cube(2, 6.0, 128)
}

fn plane_engine(hbar: f64) -> Result<ProductEngine> {
    ProductEngine::new(AdmissibleAction::standard_plane(RADIUS, hbar)?, EngineConfig::default())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(&dist_vec(a, b))
}

fn norm(a: &[f64]) -> f64 {
    let m = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * a.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = norm(&v);
        if r > 0.1 && r <= 1.0 {
            return v.iter().map(|x| x / r).collect();
        }
    }
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

fn random_spd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
    (&a * a.transpose() + DMatrix::identity(n, n)) * scale
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum()).collect()
}

/// Beyond this radius the relative condition number of Psi exceeds 4e4.
const PSI_SAMPLE_RADIUS: f64 = 0.995;

pub fn psi(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(1));
    let r_max = overflow_radius();
    let mut round = 0.0f64;
    let mut equi = 0.0f64;
    let mut round_h = 0.0f64;
    let mut equi_h = 0.0f64;
    let mut equi_edge = 0.0f64;
    for (n, count) in [(2usize, 4000usize), (3, 3000), (4, 3000)] {
        let psi = RadialDiffeo::new(n)?;
        let metric = FiberMetric::new(random_spd(&mut rng, n, 0.3))?;
        let fields = FiberFields::new(metric.clone(), DMatrix::identity(n, n))?;
        for _ in 0..count {
            let r = PSI_SAMPLE_RADIUS * rng.gen_range(0.0f64..1.0);
            let x: Vec<f64> = random_unit(&mut rng, n).iter().map(|c| c * r).collect();
            let y = psi.apply(&x)?;
            let back = psi.apply_inverse(&y)?;
            round = round.max(dist(&back, &x));
            let o = random_orthogonal(&mut rng, n);
            let lhs = psi.apply(&mat_vec(&o, &x))?;
            let rhs = mat_vec(&o, &y);
            equi = equi.max(dist(&lhs, &rhs) / norm(&y).max(1e-300));
            // the metric version: x in the h-ball, equivariance under h-orthogonal maps
            let xh = metric.from_orthonormal(&x);
            let yh = fields.warp(&xh)?;
            let back = fields.unwarp(&yh)?;
            round_h = round_h.max(metric.norm(&dist_vec(&back, &xh)));
            let oh = |v: &[f64]| metric.from_orthonormal(&mat_vec(&o, &metric.to_orthonormal(v)));
            let lhs = fields.warp(&oh(&xh))?;
            let rhs = oh(&yh);
            equi_h = equi_h.max(metric.norm(&dist_vec(&lhs, &rhs)) / metric.norm(&yh).max(1e-300));
            let edge: Vec<f64> = random_unit(&mut rng, n).iter().map(|c| c * rng.gen_range(PSI_SAMPLE_RADIUS..r_max)).collect();
            let y = psi.apply(&edge)?;
            equi_edge = equi_edge.max(dist(&psi.apply(&mat_vec(&o, &edge))?, &mat_vec(&o, &y)) / norm(&y));
        }
    }
    rec.upper("round-trip", round, 1e-10);
    rec.upper("equivariance", equi, 1e-10);
    rec.upper("round-trip-metric", round_h, 1e-10);
    rec.upper("equivariance-metric", equi_h, 1e-10);
    rec.info("equivariance-near-overflow", equi_edge);
    Ok(())
}

fn dist_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn flows(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(2));
    let metric = FiberMetric::new(random_spd(&mut rng, 2, 0.1))?;
    let raw = DMatrix::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 } + rng.gen_range(-0.25..0.25));
    let cols: Vec<Vec<f64>> = (0..2).map(|j| metric.from_orthonormal(&[raw[(0, j)], raw[(1, j)]])).collect();
    let directions = DMatrix::from_fn(2, 2, |i, j| cols[j][i]);
    let fields = FiberFields::new(metric.clone(), directions)?;
    let action = AdmissibleAction::from_fields(&fields, &symplectic(1), HBAR)?;
    let rel = |a: &[f64], b: &[f64]| metric.norm(&dist_vec(a, b)) / metric.norm(b).max(1e-3);
    let (mut group, mut comm, mut ode, mut fixed) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let r = 0.95 * rng.gen_range(0.0f64..1.0).sqrt();
        let x = metric.from_orthonormal(&random_unit(&mut rng, 2).iter().map(|c| c * r).collect::<Vec<_>>());
        let (s, t) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let i = rng.gen_range(0..2);
        let a = action.flow(i, s, &action.flow(i, t, &x));
        let b = action.flow(i, s + t, &x);
        group = group.max(rel(&a, &b));
        let a = action.flow(0, s, &action.flow(1, t, &x));
        let b = action.flow(1, t, &action.flow(0, s, &x));
        comm = comm.max(rel(&a, &b));
        let field = |y: &[f64]| action.field(i, y);
        let oracle = rk45(&field, &x, t, 1e-12);
        ode = ode.max(rel(&action.flow(i, t, &x), &oracle));
        let outside = metric.from_orthonormal(&random_unit(&mut rng, 2).iter().map(|c| c * 1.5).collect::<Vec<_>>());
        fixed = fixed.max(dist(&action.flow(i, t, &outside), &outside));
    }
    rec.upper("group-law", group, 1e-6);
    rec.upper("commutation", comm, 1e-6);
    rec.upper("ode-oracle", ode, 1e-6);
    rec.upper("fixed-outside-K", fixed, 0.0);
    Ok(())
}

pub fn engine_oracle(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(3));
    let action = AdmissibleAction::standard_plane(RADIUS, HBAR)?;
    let engine = ProductEngine::new(action.clone(), EngineConfig::default())?;
    let grid = plane_grid()?;
    let cfg = QuadratureConfig::resolved(7.5, 11.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut worst = 0.0f64;
    let mut worst_trend = 0.0f64;
    for pair in 0..20 {
        let (a, b) = random_overlapping_pair(&mut rng, RADIUS, REACH, 0.1);
        let (f, g) = (a.function(), b.function());
        let fg = GriddedFunction::from_fn(grid.clone(), f.clone());
        let gg = GriddedFunction::from_fn(grid.clone(), g.clone());
        let product = engine.deformed_product(&fg, &gg)?;
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|x, y| product.values()[*y].norm().total_cmp(&product.values()[*x].norm()).then(x.cmp(y)));
        let mut points: Vec<Vec<f64>> = order.iter().step_by(40).take(8).map(|k| grid.point(*k)).collect();
        for _ in 0..6 {
            let r = 0.58 * RADIUS * rng.gen_range(0.0f64..1.0).sqrt();
            let u = random_unit(&mut rng, 2);
            points.push(vec![r * u[0], r * u[1]]);
        }
        let oracle = oscillatory_quadrature(&action, &f, &g, (zero, zero), &points, &cfg)?;
        let err = points.iter().zip(&oracle.values).map(|(x, o)| (product.eval(x) - o).norm()).fold(0.0, f64::max);
        let scale = oracle.values.iter().map(|o| o.norm()).fold(0.0, f64::max);
        let relative = err / scale;
        rec.upper(&format!("pair-{pair:02}"), relative, 1e-5);
        worst = worst.max(relative);
        worst_trend = worst_trend.max(oracle.trend.last().copied().unwrap_or(0.0));
    }
    rec.info("worst-relative-error", worst);
    rec.info("oracle-extrapolation-trend", worst_trend);
    Ok(())
}

/// A bump entirely outside K.
fn outside_bump<R: Rng>(rng: &mut R) -> Bump {
    let sigma = rng.gen_range(0.08..0.1);
    let angle = rng.gen_range(0.0..2.0 * PI);
    let r = RADIUS + WINDOW * sigma + rng.gen_range(0.1..0.4);
    Bump {
        centre: vec![r * angle.cos(), r * angle.sin()],
        sigma,
        rho: WINDOW * sigma,
        amp: Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)),
    }
}

pub fn support_inclusion(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(4));
    let grid = plane_grid()?;
    let hbars = [0.05, 0.1, 0.2];
    let engines = hbars.iter().map(|h| plane_engine(*h)).collect::<Result<Vec<_>>>()?;
    let mut offending = 0usize;
    let mut checked = 0usize;
    for _ in 0..50 {
        let engine = &engines[rng.gen_range(0..engines.len())];
        let pick = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.7) { random_bump(rng, RADIUS, REACH) } else { outside_bump(rng) };
        let a = pick(&mut rng);
        let b = pick(&mut rng);
        let f = GriddedFunction::from_fn(grid.clone(), a.function());
        let g = GriddedFunction::from_fn(grid.clone(), b.function());
        let report = support_inclusion_check(engine, &f, &g)?;
        offending += report.offending.len();
        checked += report.checked;
    }
    rec.upper("offending-points", offending as f64, 0.0);
    rec.info("points-above-threshold", checked as f64);
    Ok(())
}

pub fn fixed_functions(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(5));
    let grid = plane_grid()?;
    let engine = plane_engine(HBAR)?;
    let mut worst = 0.0f64;
    for k in 0..10 {
        let g = GriddedFunction::from_fn(grid.clone(), random_bump(&mut rng, RADIUS, REACH).function());
        let f = if k % 2 == 0 {
            GriddedFunction::constant(grid.clone(), Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
        } else {
            GriddedFunction::from_fn(grid.clone(), outside_bump(&mut rng).function())
        };
        let pointwise = f.pointwise_mul(&g)?;
        worst = worst.max(engine.deformed_product(&f, &g)?.max_abs_diff(&pointwise));
        worst = worst.max(engine.deformed_product(&g, &f)?.max_abs_diff(&pointwise));
    }
    rec.upper("fixed-function-residual", worst, 0.0);
    Ok(())
}

pub fn delta_state(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(6));
    let p0 = vec![0.3, -0.2];
    let p1 = vec![1.3, -0.2];
    let anchor = p0[0];
    let sections: MatrixField = Arc::new(move |p: &[f64]| DMatrix::identity(2, 2) * (p[0] - anchor));
    let family = FiberedProductFamily::new(Arc::new(Flat { m: 2 }), vec![p0.clone(), p1.clone()], Some(sections), TowerConfig::standard(RADIUS, HBAR))?;
    let grid = family.fiber_grid(&p0)?;
    let (mut at_zero, mut elsewhere) = (0.0f64, 0.0f64);
    let moving = family.engine_at(&p1)?;
    for _ in 0..10 {
        let (a, b) = random_overlapping_pair(&mut rng, RADIUS, REACH, 0.1);
        let f = GriddedFunction::from_fn(grid.clone(), a.function());
        let g = GriddedFunction::from_fn(grid.clone(), b.function());
        at_zero = at_zero.max(family.delta_state_along_fiber(&p0, &f, &g)?);
        let q = a.centre.clone();
        let e = moving.element(&f)?;
        let h = moving.multiply(&e, &*moving.element(&g)?)?;
        elsewhere = elsewhere.max((h.eval(&q) - f.eval(&q) * g.eval(&q)).norm());
        let outside = vec![0.0, 1.2 * RADIUS];
        at_zero = at_zero.max(delta_state_residual(&moving, &outside, &f, &g)?);
    }
    rec.upper("delta-state-residual", at_zero, 1e-6);
    rec.info("deviation-where-sections-do-not-vanish", elsewhere);
    Ok(())
}

/// Triple products of the standard bumps are not resolved on the torus to 1e-8, so this suite uses wider ones.
pub fn algebra(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(7));
    let grid = plane_grid()?;
    let engine = plane_engine(HBAR)?;
    let (mut assoc, mut invol) = (0.0f64, 0.0f64);
    let bump = |rng: &mut ChaCha8Rng| GriddedFunction::from_fn(grid.clone(), centred_bump(rng, (0.25, 0.3), 0.2).function());
    for _ in 0..10 {
        let (f, g, h) = (bump(&mut rng), bump(&mut rng), bump(&mut rng));
        let left = engine.deformed_product(&engine.deformed_product(&f, &g)?, &h)?;
        let right = engine.deformed_product(&f, &engine.deformed_product(&g, &h)?)?;
        assoc = assoc.max(left.max_abs_diff(&right) / right.sup_abs());
        let fg = engine.deformed_product(&f, &g)?;
        let swapped = engine.deformed_product(&g.conj(), &f.conj())?;
        invol = invol.max(fg.conj().max_abs_diff(&swapped) / swapped.sup_abs());
    }
    rec.upper("associativity", assoc, 1e-8);
    rec.upper("involution", invol, 1e-10);
    Ok(())
}

/// Euclidean radius of the unit fibre ball at p for a disk family of base radius 1.
fn disk_scale(p: &[f64]) -> f64 {
    (1.0 - p[0] * p[0] - p[1] * p[1]) / 2.0
}

struct TowerCase {
    name: &'static str,
    family: FiberedProductFamily,
    scale: fn(&[f64]) -> f64,
    tolerance: f64,
    /// Chart points used to probe the complement of V_p.
    probe: fn(&mut ChaCha8Rng, &[f64]) -> Vec<f64>,
}

fn flat_scale(_p: &[f64]) -> f64 {
    RADIUS
}

fn flat_probe(rng: &mut ChaCha8Rng, p: &[f64]) -> Vec<f64> {
    let u = random_unit(rng, 2);
    let r = rng.gen_range(0.0..4.0 * RADIUS);
    vec![p[0] + r * u[0], p[1] + r * u[1]]
}

fn disk_probe(rng: &mut ChaCha8Rng, _p: &[f64]) -> Vec<f64> {
    let u = random_unit(rng, 2);
    let r = 0.98 * rng.gen_range(0.0f64..1.0).sqrt();
    vec![r * u[0], r * u[1]]
}

/// A bump given in unit-fibre coordinates, placed at p + c in the chart of M.
fn chart_bump(b: &Bump, p: &[f64], s: f64, sign: f64) -> FieldFn {
    let c = vec![p[0] + sign * b.centre[0] * s, p[1] + sign * b.centre[1] * s];
    windowed_gaussian(c, b.sigma * s, b.rho * s, b.amp)
}

pub fn tower(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(8));
    let cases = vec![
        TowerCase {
            name: "flat",
            family: FiberedProductFamily::new(Arc::new(Flat { m: 2 }), vec![vec![0.0, 0.0], vec![1.0, 0.5]], None, TowerConfig::standard(RADIUS, HBAR))?,
            scale: flat_scale,
            tolerance: 1e-6,
            probe: flat_probe,
        },
        TowerCase {
            name: "hyperbolic",
            family: FiberedProductFamily::new(Arc::new(HyperbolicDisk), vec![vec![0.1, -0.2], vec![-0.25, 0.15]], None, TowerConfig::standard(1.0, HBAR / (RADIUS * RADIUS)))?,
            scale: disk_scale,
            tolerance: 1e-5,
            probe: disk_probe,
        },
    ];
    let reach = 0.45;
    for case in &cases {
        let fam = &case.family;
        let (mut ip, mut phi, mut expp, mut equi, mut restrict) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut comm = 0.0f64;
        let mut outside = 0usize;
        for pair in 0..10 {
            let p = fam.base_points()[pair % 2].clone();
            let s = (case.scale)(&p);
            let (a, b) = random_overlapping_pair(&mut rng, 1.0, reach, 0.1);
            let scale = case.scale;
            let tm = |bump: &Bump| -> TmFn {
                let f = bump.function();
                Arc::new(move |q: &[f64], v: &[f64]| {
                    let s = scale(q);
                    f(&[v[0] / s, v[1] / s])
                })
            };
            let (ft, gt) = (fam.sample_tm(&tm(&a))?, fam.sample_tm(&tm(&b))?);
            ip = ip.max(fam.homomorphism_residual_ip(&ft, &gt, &p)?);
            if pair < 2 {
                restrict = restrict.max(fam.restriction_homomorphism_check(&ft, &gt)?);
            }
            let pair_fn = |bump: &Bump| -> PairFn {
                let left = chart_bump(bump, &p, s, -1.0);
                let right = chart_bump(bump, &p, s, 1.0);
                Arc::new(move |x: &[f64], y: &[f64]| left(x) * right(y))
            };
            let (fp, gp) = (pair_fn(&a), pair_fn(&b));
            phi = phi.max(fam.phi_homomorphism_residual(&fp, &gp, &p)?);
            let v = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            equi = equi.max(fam.phi_equivariance_residual(&fp, &p, &v)?);
            let (fm, gm) = (chart_bump(&a, &p, s, 1.0), chart_bump(&b, &p, s, 1.0));
            expp = expp.max(fam.residual_expp(&p, &fm, &gm)?);
            let wide = |c: f64| -> FieldFn { Arc::new(move |m: &[f64]| Complex64::new(0.0, (m[0] - c) * 3.0).exp() * (-(m[1] * m[1])).exp()) };
            let points: Vec<Vec<f64>> = (0..400).map(|_| (case.probe)(&mut rng, &p)).collect();
            let (worst, count) = fam.commutator_outside_vp(&p, &wide(0.2), &wide(-0.7), &points)?;
            comm = comm.max(worst);
            outside += count;
        }
        rec.upper(&format!("{}-ip-homomorphism", case.name), ip, case.tolerance);
        rec.upper(&format!("{}-phi-homomorphism", case.name), phi, case.tolerance);
        rec.upper(&format!("{}-expp-homomorphism", case.name), expp, case.tolerance);
        rec.upper(&format!("{}-phi-equivariance", case.name), equi, case.tolerance);
        rec.upper(&format!("{}-restriction-homomorphism", case.name), restrict, case.tolerance);
        rec.upper(&format!("{}-commutator-outside-V", case.name), comm, 0.0);
        rec.info(&format!("{}-points-outside-V", case.name), outside as f64);
    }
    Ok(())
}

/// Least-squares slope of log r against log hbar.

/// K for the semiclassical suite; large enough that hbar / sigma^2 stays below 1/2 at hbar = 0.2.
const BROAD_RADIUS: f64 = 10.0;

/// A bump with width in `sigma` centred within `room` of the origin.
fn centred_bump(rng: &mut ChaCha8Rng, sigma: (f64, f64), room: f64) -> Bump {
    let sigma = rng.gen_range(sigma.0..sigma.1);
    let r = room * rng.gen_range(0.0f64..1.0).sqrt();
    let angle = rng.gen_range(0.0..2.0 * PI);
    Bump {
        centre: vec![r * angle.cos(), r * angle.sin()],
        sigma,
        rho: WINDOW * sigma,
        amp: Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)),
    }
}

pub fn semiclassical(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(9));
    let grid = BoxGrid::cube(2, 1.2 * BROAD_RADIUS, 128)?;
    let c = derive_semiclassical_constant(1e-6)?;
    rec.upper("constant-vs-i/pi", (c - SEMICLASSICAL_CONSTANT).norm(), 1e-8);
    let hbars = [0.2, 0.1, 0.05];
    let engines = hbars
        .iter()
        .map(|h| ProductEngine::new(AdmissibleAction::standard_plane(BROAD_RADIUS, *h)?, EngineConfig::default()))
        .collect::<Result<Vec<_>>>()?;
    for pair in 0..3 {
        let f = GriddedFunction::from_fn(grid.clone(), centred_bump(&mut rng, (0.62, 0.64), 0.2).function());
        let g = GriddedFunction::from_fn(grid.clone(), centred_bump(&mut rng, (0.62, 0.64), 0.2).function());
        let r = engines.iter().map(|e| semiclassical_residual(e, &f, &g, c)).collect::<Result<Vec<f64>>>()?;
        for (h, v) in hbars.iter().zip(&r) {
            rec.info(&format!("pair-{pair}-residual-hbar-{h}"), *v);
        }
        for k in 0..2 {
            rec.info(&format!("pair-{pair}-step-order-{}-{}", hbars[k], hbars[k + 1]), (r[k] / r[k + 1]).log2());
        }
        rec.lower(&format!("pair-{pair}-observed-order"), observed_order(&hbars, &r), 1.9);
    }
    Ok(())
}

pub fn norms(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(rec.seed(10));
    let grid = plane_grid()?;
    let cfg = NormConfig {
        density: 3,
        ..NormConfig::default()
    };
    let l = Compactum::cube(2, 5.5);
    let basis = ModuleVectorBasis::fourier(2, 64);
    let classical = AdmissibleAction::standard_plane(RADIUS, 0.0)?;
    let mut sup_err = 0.0f64;
    for _ in 0..3 {
        let bump = random_bump(&mut rng, RADIUS, REACH);
        let a = GriddedFunction::from_fn(grid.clone(), bump.function());
        let est = deformed_seminorm(&classical, &a, &l, &basis, &cfg)?;
        // the peak value of a windowed Gaussian is |amp|
        let sup = bump.amp.norm();
        sup_err = sup_err.max((est.value - sup).abs() / sup);
    }
    rec.upper("classical-sup-recovery", sup_err, 0.02);
    let engine = plane_engine(HBAR)?;
    let action = engine.action().clone();
    let a = GriddedFunction::from_fn(grid.clone(), random_bump(&mut rng, RADIUS, REACH).function());
    let mut residuals = Vec::new();
    for k in [16, 32, 64] {
        let r = cstar_identity_residual(&engine, &a, &l, &ModuleVectorBasis::fourier(2, k), &cfg)?;
        rec.info(&format!("cstar-residual-{k}"), r);
        residuals.push(r);
    }
    let increases = residuals.windows(2).filter(|w| !(w[1] < w[0])).count();
    rec.upper("cstar-non-decreasing-steps", increases as f64, 0.0);
    let est = deformed_seminorm(&action, &a, &l, &basis, &cfg)?;
    let tol = estimator_tolerance(&est);
    rec.info("estimator-tolerance", tol);
    let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let moved = action.act(&v, &a)?;
    let est_moved = deformed_seminorm(&action, &moved, &l, &basis, &cfg)?;
    rec.upper("cofinal-isometry", (est_moved.value - est.value).abs(), tol);
    let outer = Compactum::cube(2, 6.0);
    rec.upper("restriction-compatibility", restriction_compatibility(&action, &a, &l, &outer, &basis, &cfg)?, tol);
    let chain = [Compactum::cube(2, 1.0), Compactum::cube(2, 3.0), l.clone()];
    let family = SeminormFamily::compute(&action, &a, &chain, &basis, &cfg)?;
    let drops = family.estimates.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max);
    rec.upper("monotone-in-L", drops, tol);
    Ok(())
}
