//! Structural checks on the deformed product.

use crate::error::{Error, Result};
use crate::starproduct::engine::ProductEngine;
use crate::starproduct::function::{FieldFn, GriddedFunction, SUPPORT_THRESHOLD};
use crate::starproduct::spectral::{moyal_twisted_convolution, ModeArray};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const INCLUSION_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionReport {
    pub holds: bool,
    pub offending: Vec<Vec<f64>>,
    pub checked: usize,
}

/// Samples of f*g above 1e-9 must lie in (supp f ∩ supp g) ∪ K.
pub fn support_inclusion_check(engine: &ProductEngine, f: &GriddedFunction, g: &GriddedFunction) -> Result<InclusionReport> {
    let product = engine.deformed_product(f, g)?;
    let action = engine.action();
    let grid = product.grid();
    let mut offending = Vec::new();
    let mut checked = 0;
    for (k, v) in product.values().iter().enumerate() {
        if v.norm() <= INCLUSION_THRESHOLD {
            continue;
        }
        checked += 1;
        let x = grid.point(k);
        let in_both = f.values()[k].norm() > SUPPORT_THRESHOLD && g.values()[k].norm() > SUPPORT_THRESHOLD;
        if !in_both && !action.in_support(&x) {
            offending.push(x);
        }
    }
    Ok(InclusionReport {
        holds: offending.is_empty(),
        offending,
        checked,
    })
}

/// |(f*g)(q) - f(q) g(q)| for a point q where every field vanishes, or q outside K.
pub fn delta_state_residual(engine: &ProductEngine, q: &[f64], f: &GriddedFunction, g: &GriddedFunction) -> Result<f64> {
    let action = engine.action();
    if q.len() != action.n() {
        return Err(Error::Dimension("q must be a fiber point".into()));
    }
    let vanishing = (0..action.d()).all(|i| action.field(i, q).iter().all(|c| *c == 0.0));
    if !vanishing && action.in_support(q) {
        return Err(Error::Precondition(format!("a field does not vanish at {q:?}")));
    }
    let fq = f.eval(q);
    let gq = g.eval(q);
    if engine.skew().iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let a = engine.element(f)?;
    let b = engine.element(g)?;
    let h = engine.multiply(&a, &b)?;
    Ok((h.eval(q) - fq * gq).norm())
}

/// c such that (e_p * e_q - e_q * e_p)/hbar = c (2 pi i)^2 (p.Theta0 q) e_(p+q) + O(hbar^2), obtained numerically
/// from the twisted convolution of two plane waves.
pub fn derive_semiclassical_constant(hbar: f64) -> Result<Complex64> {
    let periods = vec![1.0, 1.0];
    let theta0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let theta = &theta0 * hbar;
    let (p, q) = ([1i64, 0], [0i64, 1]);
    let lo = vec![-2, -2];
    let shape = vec![5, 5];
    let one = Complex64::new(1.0, 0.0);
    let ep = ModeArray::single(lo.clone(), shape.clone(), periods.clone(), &p, one);
    let eq = ModeArray::single(lo, shape, periods, &q, one);
    let k = [p[0] + q[0], p[1] + q[1]];
    let comm = moyal_twisted_convolution(&ep, &eq, &theta)?.get(&k) - moyal_twisted_convolution(&eq, &ep, &theta)?.get(&k);
    let s: f64 = (0..2).map(|a| (0..2).map(|b| p[a] as f64 * theta0[(a, b)] * q[b] as f64).sum::<f64>()).sum();
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    Ok(comm / hbar / (two_pi_i * two_pi_i * s))
}

/// The constant obtained from the plane-wave expansion; `derive_semiclassical_constant` converges to it.
pub const SEMICLASSICAL_CONSTANT: Complex64 = Complex64::new(0.0, 1.0 / PI);

fn field_derivative(engine: &ProductEngine, i: usize, f: &FieldFn, x: &[f64], t: f64) -> Complex64 {
    let action = engine.action();
    let at = |s: f64| f(&action.flow(i, s, x));
    (at(-2.0 * t) - at(-t) * 8.0 + at(t) * 8.0 - at(2.0 * t)) / (12.0 * t)
}

/// sup over the grid of |(f*g - g*f)/hbar - c sum Theta0^{jk} X_j(f) X_k(g)|.
pub fn semiclassical_residual(engine: &ProductEngine, f: &GriddedFunction, g: &GriddedFunction, c: Complex64) -> Result<f64> {
    let action = engine.action();
    let hbar = action.hbar();
    if hbar == 0.0 {
        return Ok(0.0);
    }
    let fg = engine.deformed_product(f, g)?;
    let gf = engine.deformed_product(g, f)?;
    let theta0 = action.theta0().clone();
    let d = action.d();
    let (fe, ge) = (f.evaluator(), g.evaluator());
    let grid = f.grid();
    let step = 1e-3;
    let worst = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            let comm = (fg.values()[k] - gf.values()[k]) / hbar;
            let mut classical = Complex64::new(0.0, 0.0);
            if action.fields().in_ball(&x) {
                let xf: Vec<Complex64> = (0..d).map(|j| field_derivative(engine, j, &fe, &x, step)).collect();
                let xg: Vec<Complex64> = (0..d).map(|j| field_derivative(engine, j, &ge, &x, step)).collect();
                for j in 0..d {
                    for l in 0..d {
                        classical += xf[j] * xg[l] * theta0[(j, l)];
                    }
                }
            }
            (comm - c * classical).norm()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Least-squares slope of log r against log hbar.
pub fn observed_order(hbars: &[f64], r: &[f64]) -> f64 {
    let xs: Vec<f64> = hbars.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_from_plane_waves() {
        let mut prev = f64::INFINITY;
        for k in 0..5 {
            let hbar = 0.1 / 2f64.powi(k);
            let c = derive_semiclassical_constant(hbar).unwrap();
            let err = (c - SEMICLASSICAL_CONSTANT).norm();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn plane_wave_residual_is_second_order() {
        let residual = |hbar: f64| {
            let s = 0.37;
            let comm = Complex64::new(0.0, -2.0 * (2.0 * PI * hbar * s).sin()) / hbar;
            let two_pi_i = Complex64::new(0.0, 2.0 * PI);
            (comm - SEMICLASSICAL_CONSTANT * two_pi_i * two_pi_i * s).norm()
        };
        let r = [residual(0.2), residual(0.1), residual(0.05)];
        assert!((r[0] / r[1]).log2() >= 1.9 && (r[1] / r[2]).log2() >= 1.9);
    }
}
