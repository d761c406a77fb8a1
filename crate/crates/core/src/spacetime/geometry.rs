//! Base manifolds with closed-form exponential maps.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

pub trait BaseGeometry: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn contains(&self, p: &[f64]) -> bool;
    /// Riemannian metric at p in the chart coordinates.
    fn metric(&self, p: &[f64]) -> DMatrix<f64>;
    fn exp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>>;
    /// Inverse of exp_p on its injectivity domain.
    fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flat {
    pub m: usize,
}

impl BaseGeometry for Flat {
    fn dim(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        "flat"
    }
    fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.m && p.iter().all(|v| v.is_finite())
    }
    fn metric(&self, _p: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.m, self.m)
    }
    fn exp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(p.iter().zip(v).map(|(a, b)| a + b).collect())
    }
    fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        Ok(q.iter().zip(p).map(|(a, b)| a - b).collect())
    }
}

/// Poincaré disk of curvature -1, metric 4|dz|^2 / (1 - |z|^2)^2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperbolicDisk;

type C = num_complex::Complex64;

fn to_c(p: &[f64]) -> C {
    C::new(p[0], p[1])
}

/// z -> (z + p)/(1 + conj(p) z), an isometry taking 0 to p.
fn mobius(p: C, z: C) -> C {
    (z + p) / (C::new(1.0, 0.0) + p.conj() * z)
}

fn mobius_inv(p: C, z: C) -> C {
    (z - p) / (C::new(1.0, 0.0) - p.conj() * z)
}

impl BaseGeometry for HyperbolicDisk {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "hyperbolic"
    }
    fn contains(&self, p: &[f64]) -> bool {
        p.len() == 2 && p[0] * p[0] + p[1] * p[1] < 1.0
    }
    fn metric(&self, p: &[f64]) -> DMatrix<f64> {
        let s = 1.0 - p[0] * p[0] - p[1] * p[1];
        DMatrix::identity(2, 2) * (4.0 / (s * s))
    }
    fn exp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(p) {
            return Err(Error::Domain(format!("{p:?} is not in the disk")));
        }
        let pc = to_c(p);
        let w = to_c(v) / (1.0 - pc.norm_sqr());
        let r = w.norm();
        let z0 = if r == 0.0 { C::new(0.0, 0.0) } else { w * (r.tanh() / r) };
        let z = mobius(pc, z0);
        Ok(vec![z.re, z.im])
    }
    fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(p) || !self.contains(q) {
            return Err(Error::Domain("log needs both points in the disk".into()));
        }
        let pc = to_c(p);
        let z = mobius_inv(pc, to_c(q));
        let r = z.norm();
        if r == 0.0 {
            return Ok(vec![0.0, 0.0]);
        }
        let w = z * ((1.0 - pc.norm_sqr()) * r.atanh() / r);
        Ok(vec![w.re, w.im])
    }
}

pub type ExpFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// User-supplied exp/log pair, accepted after a round-trip check.
#[derive(Clone)]
pub struct UserGeometry {
    m: usize,
    name: String,
    exp: ExpFn,
    log: ExpFn,
    metric: MetricFn,
}

impl UserGeometry {
    pub fn new(m: usize, name: &str, exp: ExpFn, log: ExpFn, metric: MetricFn, samples: &[(Vec<f64>, Vec<f64>)], tolerance: f64) -> Result<Self> {
        for (p, v) in samples {
            let q = exp(p, v);
            let back = log(p, &q);
            let err = back.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if !(err <= tolerance) {
                return Err(Error::Domain(format!("exp/log round trip error {err:e} at p = {p:?}")));
            }
        }
        Ok(Self {
            m,
            name: name.to_string(),
            exp,
            log,
            metric,
        })
    }
}

impl BaseGeometry for UserGeometry {
    fn dim(&self) -> usize {
        self.m
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.m
    }
    fn metric(&self, p: &[f64]) -> DMatrix<f64> {
        (self.metric)(p)
    }
    fn exp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok((self.exp)(p, v))
    }
    fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        Ok((self.log)(p, q))
    }
}

/// Phi(v_p) = (exp_p(-v), exp_p(v)).
pub fn phi(geometry: &dyn BaseGeometry, p: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let minus: Vec<f64> = v.iter().map(|x| -x).collect();
    Ok((geometry.exp(p, &minus)?, geometry.exp(p, v)?))
}

/// (a, b) -> (p, v) with p the geodesic midpoint and v = log_p(b).
pub fn phi_inverse(geometry: &dyn BaseGeometry, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let half: Vec<f64> = geometry.log(a, b)?.iter().map(|x| 0.5 * x).collect();
    let p = geometry.exp(a, &half)?;
    let v = geometry.log(&p, b)?;
    Ok((p, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_phi() {
        let g = Flat { m: 2 };
        let (a, b) = phi(&g, &[1.0, 2.0], &[0.5, -0.25]).unwrap();
        assert_eq!(a, vec![0.5, 2.25]);
        assert_eq!(b, vec![1.5, 1.75]);
        let (p, v) = phi_inverse(&g, &a, &b).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(v, vec![0.5, -0.25]);
    }

    #[test]
    fn hyperbolic_exp_log() {
        let g = HyperbolicDisk;
        let p = [0.3, -0.2];
        let v = [0.15, 0.1];
        let q = g.exp(&p, &v).unwrap();
        let back = g.log(&p, &q).unwrap();
        assert!((back[0] - v[0]).abs() < 1e-14 && (back[1] - v[1]).abs() < 1e-14);
        // distance from the origin: 2 artanh |z| equals the metric length 2 |v|
        let z = g.exp(&[0.0, 0.0], &[0.4, 0.0]).unwrap();
        assert!((2.0 * z[0].atanh() - 0.8).abs() < 1e-14);
        let (a, b) = phi(&g, &p, &v).unwrap();
        let (pp, vv) = phi_inverse(&g, &a, &b).unwrap();
        assert!((pp[0] - p[0]).abs() < 1e-12 && (pp[1] - p[1]).abs() < 1e-12);
        assert!((vv[0] - v[0]).abs() < 1e-12 && (vv[1] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_geodesic_speed() {
        let g = HyperbolicDisk;
        let p = [0.2, 0.4];
        let v = [0.05, -0.03];
        let h = 1e-5;
        let q1 = g.exp(&p, &v.map(|x| x * h)).unwrap();
        let q0 = g.exp(&p, &v.map(|x| -x * h)).unwrap();
        let vel = [(q1[0] - q0[0]) / (2.0 * h), (q1[1] - q0[1]) / (2.0 * h)];
        assert!((vel[0] - v[0]).abs() < 1e-8 && (vel[1] - v[1]).abs() < 1e-8);
    }

    #[test]
    fn user_geometry_round_trip() {
        let exp: ExpFn = Arc::new(|p: &[f64], v: &[f64]| vec![p[0] + 2.0 * v[0]]);
        let log: ExpFn = Arc::new(|p: &[f64], q: &[f64]| vec![(q[0] - p[0]) / 2.0]);
        let metric: MetricFn = Arc::new(|_p: &[f64]| DMatrix::identity(1, 1) * 0.25);
        let ok = UserGeometry::new(1, "scaled", exp.clone(), log, metric.clone(), &[(vec![0.0], vec![1.0])], 1e-12);
        assert!(ok.is_ok());
        let bad_log: ExpFn = Arc::new(|p: &[f64], q: &[f64]| vec![q[0] - p[0]]);
        assert!(UserGeometry::new(1, "broken", exp, bad_log, metric, &[(vec![0.0], vec![1.0])], 1e-12).is_err());
    }
}
