//! Direct evaluation of the regularized oscillatory integral with extrapolation in the regulator.

use crate::action::{lattice, FlowAction};
use crate::error::{Error, Result};
use crate::starproduct::function::{FieldFn, GriddedFunction, Provenance};
use crate::starproduct::spectral::contract_axis;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureConfig {
    /// Half-width of the u box (frequency side).
    pub u_half: f64,
    pub u_step: f64,
    /// Half-width of the box searched for the support of the v integrand.
    pub v_half: f64,
    pub v_step: f64,
    /// Coarse samples per axis used to locate that support.
    pub locate_points: usize,
    /// Regulators eps0, eps0/2, eps0/4, ...
    pub eps0: f64,
    pub levels: usize,
    /// Largest accepted final difference of the extrapolation table, relative to max(1, |value|).
    pub convergence_tol: f64,
    /// Largest accepted truncation residue on the box boundaries, relative.
    pub boundary_tol: f64,
}

impl QuadratureConfig {
    /// Steps chosen so that neither trapezoid sum aliases: the v sum sees frequencies up to 2 u_half,
    /// the u sum frequencies up to v_half + u_half.
    pub fn resolved(u_half: f64, v_half: f64) -> Self {
        let guard = 1.25;
        Self {
            u_half,
            u_step: 1.0 / (guard * (v_half + u_half)),
            v_half,
            v_step: 1.0 / (guard * 2.0 * u_half),
            locate_points: 65,
            eps0: 2.5e-5,
            levels: 3,
            convergence_tol: 1e-8,
            boundary_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub values: Vec<Complex64>,
    /// max over points of |T_kk - T_(k-1)(k-1)| along the extrapolation diagonal.
    pub trend: Vec<f64>,
}

fn axis_nodes(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).ceil() as usize + 1;
    let count = count.max(3);
    let h = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + i as f64 * h).collect()
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn on_boundary(flat: usize, shape: &[usize]) -> bool {
    let mut rest = flat;
    for len in shape.iter().rev() {
        let i = rest % len;
        rest /= len;
        if i == 0 || i + 1 == *len {
            return true;
        }
    }
    false
}

struct PointOutcome {
    diagonal: Vec<Complex64>,
}

fn one_point(action: &dyn FlowAction, f: &FieldFn, g: &FieldFn, shells: (Complex64, Complex64), x: &[f64], cfg: &QuadratureConfig) -> Result<PointOutcome> {
    let d = action.group_dim();
    let theta = action.theta();
    let (cf, cg) = shells;
    let b_at = |v: &[f64]| g(&action.flow_v(v, x)) - cg;
    let coarse = lattice(&vec![-cfg.v_half; d], &vec![cfg.v_half; d], cfg.locate_points);
    let coarse_vals: Vec<Complex64> = coarse.iter().map(|v| b_at(v)).collect();
    let cmax = coarse_vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cshape = vec![cfg.locate_points; d];
    let cedge = coarse_vals
        .iter()
        .enumerate()
        .filter(|(k, _)| on_boundary(*k, &cshape))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    if cmax > 0.0 && cedge > cfg.boundary_tol * cmax {
        return Err(Error::Domain(format!(
            "integrand is not compactly supported inside the v box (edge/max = {:e})",
            cedge / cmax
        )));
    }
    let coarse_step = 2.0 * cfg.v_half / (cfg.locate_points - 1) as f64;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (v, z) in coarse.iter().zip(&coarse_vals) {
        if z.norm() > 1e-17 * cmax {
            for a in 0..d {
                lo[a] = lo[a].min(v[a] - 2.0 * coarse_step);
                hi[a] = hi[a].max(v[a] + 2.0 * coarse_step);
            }
        }
    }
    if cmax == 0.0 {
        return Ok(PointOutcome {
            diagonal: vec![Complex64::new(0.0, 0.0); cfg.levels],
        });
    }
    let v_axes: Vec<Vec<f64>> = (0..d)
        .map(|a| axis_nodes(lo[a].max(-cfg.v_half), hi[a].min(cfg.v_half), cfg.v_step))
        .collect();
    let u_axes: Vec<Vec<f64>> = (0..d).map(|_| axis_nodes(-cfg.u_half, cfg.u_half, cfg.u_step)).collect();
    let vs = tensor(&v_axes);
    let us = tensor(&u_axes);
    let u_shape: Vec<usize> = u_axes.iter().map(|a| a.len()).collect();
    let a: Vec<Complex64> = us
        .iter()
        .map(|u| {
            let tu: Vec<f64> = (0..d).map(|i| (0..d).map(|j| theta[(i, j)] * u[j]).sum()).collect();
            f(&action.flow_v(&tu, x)) - cf
        })
        .collect();
    let b: Vec<Complex64> = vs.iter().map(|v| b_at(v)).collect();
    let kernels: Vec<Vec<Vec<Complex64>>> = (0..d)
        .map(|ax| {
            let dv = v_axes[ax][1] - v_axes[ax][0];
            u_axes[ax]
                .iter()
                .map(|u| v_axes[ax].iter().map(|v| Complex64::from_polar(dv, 2.0 * PI * u * v)).collect())
                .collect()
        })
        .collect();
    let cell: f64 = u_axes.iter().map(|ax| ax[1] - ax[0]).product();
    let mut diagonal = Vec::with_capacity(cfg.levels);
    let mut table: Vec<Vec<Complex64>> = Vec::new();
    for level in 0..cfg.levels {
        let eps = cfg.eps0 / 2f64.powi(level as i32);
        let weighted: Vec<Complex64> = b
            .iter()
            .zip(&vs)
            .map(|(z, v)| z * (-PI * eps * v.iter().map(|t| t * t).sum::<f64>()).exp())
            .collect();
        let mut data = weighted;
        let mut shape: Vec<usize> = v_axes.iter().map(|a| a.len()).collect();
        for axis in 0..d {
            let (nd, ns) = contract_axis(&data, &shape, axis, &kernels[axis]);
            data = nd;
            shape = ns;
        }
        if level == 0 {
            let tmax = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let tedge = data
                .iter()
                .enumerate()
                .filter(|(k, _)| on_boundary(*k, &u_shape))
                .map(|(_, z)| z.norm())
                .fold(0.0, f64::max);
            if tmax > 0.0 && tedge > cfg.boundary_tol * tmax {
                return Err(Error::Domain(format!(
                    "transform has not decayed on the u box (edge/max = {:e})",
                    tedge / tmax
                )));
            }
        }
        let value: Complex64 = a
            .iter()
            .zip(&data)
            .zip(&us)
            .map(|((p, q), u)| p * q * (-PI * eps * u.iter().map(|t| t * t).sum::<f64>()).exp())
            .sum::<Complex64>()
            * cell;
        let mut row = vec![value];
        for j in 1..=level {
            let prev = table[level - 1][j - 1];
            let cur = row[j - 1];
            row.push(cur + (cur - prev) / (2f64.powi(j as i32) - 1.0));
        }
        diagonal.push(row[level]);
        table.push(row);
    }
    Ok(PointOutcome { diagonal })
}

/// Oracle values of the deformed product at `points`; `shells` are the constants subtracted from f and g.
pub fn oscillatory_quadrature(
    action: &dyn FlowAction,
    f: &FieldFn,
    g: &FieldFn,
    shells: (Complex64, Complex64),
    points: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if cfg.levels == 0 || !(cfg.u_step > 0.0 && cfg.v_step > 0.0) || cfg.locate_points < 3 {
        return Err(Error::Domain("quadrature needs at least one level, positive steps and three locating points".into()));
    }
    let (cf, cg) = shells;
    let outcomes: Vec<Result<Option<PointOutcome>>> = points
        .par_iter()
        .map(|x| {
            if !action.moves(x) {
                return Ok(None);
            }
            one_point(action, f, g, shells, x, cfg).map(Some)
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    let mut trend = vec![0.0; cfg.levels.saturating_sub(1)];
    for (x, o) in points.iter().zip(outcomes) {
        match o? {
            None => values.push(f(x) * g(x)),
            Some(o) => {
                let fx = f(x);
                let gx = g(x);
                let value = cf * cg + cf * (gx - cg) + cg * (fx - cf) + o.diagonal[cfg.levels - 1];
                for k in 1..cfg.levels {
                    let dk = (o.diagonal[k] - o.diagonal[k - 1]).norm() / value.norm().max(1.0);
                    trend[k - 1] = f64::max(trend[k - 1], dk);
                }
                values.push(value);
            }
        }
    }
    if let Some(last) = trend.last() {
        if *last > cfg.convergence_tol {
            return Err(Error::Extrapolation { trend });
        }
    }
    Ok(QuadratureResult { values, trend })
}

/// Oracle evaluated at every grid point of f.
pub fn oscillatory_quadrature_grid(
    action: &dyn FlowAction,
    f: &GriddedFunction,
    g: &GriddedFunction,
    shells: (Complex64, Complex64),
    cfg: &QuadratureConfig,
) -> Result<GriddedFunction> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let points = f.grid().points();
    let r = oscillatory_quadrature(action, &f.evaluator(), &g.evaluator(), shells, &points, cfg)?;
    Ok(GriddedFunction::from_parts(f.grid().clone(), r.values, Provenance::Resampled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::TranslationAction;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    /// e^{-a|x|^2} * e^{-b|x|^2} under the Moyal product with Theta = hbar J.
    fn centred_moyal(a: f64, b: f64, hbar: f64, x: &[f64]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let alpha = a * hbar * hbar + PI * PI / b;
        (-a * r2).exp() * (PI / b) * (PI / alpha) * ((a * a * hbar * hbar - PI * PI) * r2 / alpha).exp()
    }

    #[test]
    fn gaussian_moyal_closed_form() {
        let hbar = 0.3;
        let action = TranslationAction {
            directions: DMatrix::identity(2, 2),
            theta: DMatrix::from_row_slice(2, 2, &[0.0, hbar, -hbar, 0.0]),
        };
        let (a, b) = (2.0, 3.0);
        let f: FieldFn = Arc::new(move |x: &[f64]| Complex64::new((-a * (x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let g: FieldFn = Arc::new(move |x: &[f64]| Complex64::new((-b * (x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let pts = vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![0.6, 0.5]];
        let cfg = QuadratureConfig::resolved(4.5, 4.0);
        let r = oscillatory_quadrature(&action, &f, &g, (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), &pts, &cfg).unwrap();
        for (p, v) in pts.iter().zip(&r.values) {
            let exact = centred_moyal(a, b, hbar, p);
            assert!((v - exact).norm() < 1e-9, "{p:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn truncated_box_is_reported() {
        let action = TranslationAction {
            directions: DMatrix::identity(1, 1),
            theta: DMatrix::zeros(1, 1),
        };
        let f: FieldFn = Arc::new(|_x: &[f64]| Complex64::new(1.0, 0.0));
        let g: FieldFn = Arc::new(|x: &[f64]| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let cfg = QuadratureConfig::resolved(3.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        assert!(oscillatory_quadrature(&action, &f, &g, (z, z), &[vec![0.0]], &cfg).is_err());
    }
}
