//! Random test inputs and an adaptive ODE integrator used as a flow oracle.

use crate::geometry::smooth_step;
use crate::starproduct::function::FieldFn;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// Radius of the window, in units of sigma. The Gaussian is below 1e-12 where the window starts to fall.
pub const WINDOW: f64 = 8.5;

/// amp * exp(-|x-c|^2 / (2 sigma^2)), switched off smoothly over rho - sigma < |x-c| < rho.
pub fn windowed_gaussian(c: Vec<f64>, sigma: f64, rho: f64, amp: Complex64) -> FieldFn {
    Arc::new(move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        let w = smooth_step((rho - r2.sqrt()) / sigma);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        amp * ((-r2 / (2.0 * sigma * sigma)).exp() * w)
    })
}

/// Parameters of a random windowed Gaussian, in units where K is the ball of radius `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub centre: Vec<f64>,
    pub sigma: f64,
    pub rho: f64,
    pub amp: Complex64,
}

impl Bump {
    pub fn function(&self) -> FieldFn {
        windowed_gaussian(self.centre.clone(), self.sigma, self.rho, self.amp)
    }

    pub fn support_radius(&self) -> f64 {
        self.rho
    }
}

fn random_disk_point<R: Rng>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
    let a = rng.gen_range(0.0..2.0 * PI);
    [r * a.cos(), r * a.sin()]
}

/// A bump in the plane whose support stays inside |x| <= reach * scale.
pub fn random_bump<R: Rng>(rng: &mut R, scale: f64, reach: f64) -> Bump {
    let sigma = scale * rng.gen_range(0.036..0.05);
    let rho = WINDOW * sigma;
    let room = (reach * scale - rho).max(0.0);
    let c = random_disk_point(rng, room);
    Bump {
        centre: c.to_vec(),
        sigma,
        rho,
        amp: Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)),
    }
}

/// Two bumps with centres at most `spread * scale` apart, so their product is substantial.
pub fn random_overlapping_pair<R: Rng>(rng: &mut R, scale: f64, reach: f64, spread: f64) -> (Bump, Bump) {
    loop {
        let a = random_bump(rng, scale, reach);
        let mut b = random_bump(rng, scale, reach);
        let off = random_disk_point(rng, spread * scale);
        let c = vec![a.centre[0] + off[0], a.centre[1] + off[1]];
        let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
        if r + b.support_radius() <= reach * scale {
            b.centre = c;
            return (a, b);
        }
    }
}

/// Dormand-Prince 5(4) integration of x' = field(x) from 0 to t.
pub fn rk45(field: &dyn Fn(&[f64]) -> Vec<f64>, x0: &[f64], t: f64, tol: f64) -> Vec<f64> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = x0.len();
    let dir = t.signum();
    let total = t.abs();
    let mut x = x0.to_vec();
    let mut s = 0.0;
    let mut h = (total / 100.0).max(1e-12);
    while s < total {
        h = h.min(total - s);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for stage in 0..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate() {
                for i in 0..n {
                    y[i] += dir * h * A[stage][j] * kj[i];
                }
            }
            k.push(field(&y));
        }
        let mut err: f64 = 0.0;
        let mut next = x.clone();
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for j in 0..7 {
                hi += B5[j] * k[j][i];
                lo += B4[j] * k[j][i];
            }
            next[i] += dir * h * hi;
            err = err.max((h * (hi - lo)).abs() / (1.0 + x[i].abs()));
        }
        if err <= tol {
            s += h;
            x = next;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk45_rotation() {
        let field = |x: &[f64]| vec![-x[1], x[0]];
        let y = rk45(&field, &[1.0, 0.0], PI / 2.0, 1e-12);
        assert!(y[0].abs() < 1e-10 && (y[1] - 1.0).abs() < 1e-10);
        let back = rk45(&field, &y, -PI / 2.0, 1e-12);
        assert!((back[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bump_support() {
        let f = windowed_gaussian(vec![0.0, 0.0], 0.2, 1.5, Complex64::new(1.0, 0.0));
        assert_eq!(f(&[1.5, 0.0]).norm(), 0.0);
        assert!(f(&[1.49, 0.0]).norm() > 0.0);
        assert!((f(&[0.0, 1.3]).norm() / (-1.3f64 * 1.3 / 0.08).exp() - 1.0).abs() < 1e-12);
        assert_eq!(f(&[0.0, 0.0]).re, 1.0);
    }
}
