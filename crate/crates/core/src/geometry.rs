//! Cutoff profile, radial profile and the equivariant radial diffeomorphism
//! of the open unit ball onto the whole space.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Largest radius at which `exp(1/(1-t))` is still a finite double.
pub fn overflow_radius() -> f64 {
    1.0 - 1.0 / f64::MAX.ln()
}

fn sigma(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

fn sigma_prime(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        sigma(s) / (s * s)
    }
}

/// Smooth step that is 0 for s <= 0 and 1 for s >= 1.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = sigma(s);
        let b = sigma(1.0 - s);
        a / (a + b)
    }
}

pub fn smooth_step_prime(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let a = sigma(s);
    let b = sigma(1.0 - s);
    let den = a + b;
    (sigma_prime(s) * b + a * sigma_prime(1.0 - s)) / (den * den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub plateau_end: f64,
    pub support_end: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self {
            plateau_end: 0.5,
            support_end: 0.75,
        }
    }
}

impl CutoffProfile {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("cutoff needs t >= 0, got {t}")));
        }
        Ok(self.value(t))
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.plateau_end {
            1.0
        } else if t >= self.support_end {
            0.0
        } else {
            1.0 - smooth_step((t - self.plateau_end) / (self.support_end - self.plateau_end))
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.plateau_end || t >= self.support_end {
            return 0.0;
        }
        let w = self.support_end - self.plateau_end;
        -smooth_step_prime((t - self.plateau_end) / w) / w
    }
}

/// psi(t) = t chi(t) + (1 - chi(t)) exp(1/(1-t)).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub cutoff: CutoffProfile,
    min_slope: f64,
}

impl Default for RadialProfile {
    fn default() -> Self {
        Self::new(CutoffProfile::default()).expect("default profile is monotone")
    }
}

impl RadialProfile {
    /// Builds the profile and checks strict monotonicity on a 10^5-point grid.
    pub fn new(cutoff: CutoffProfile) -> Result<Self> {
        if !(0.0 < cutoff.plateau_end && cutoff.plateau_end < cutoff.support_end && cutoff.support_end < 1.0) {
            return Err(Error::Domain("cutoff needs 0 < plateau_end < support_end < 1".into()));
        }
        let mut p = Self {
            cutoff,
            min_slope: f64::INFINITY,
        };
        let n = 100_000usize;
        let t_max = overflow_radius() - 1e-6;
        let mut prev = p.value(0.0);
        let mut min_slope = f64::INFINITY;
        for k in 1..=n {
            let t = t_max * k as f64 / n as f64;
            let v = p.value(t);
            let s = p.derivative(t);
            if !(v > prev) || !(s > 0.0) {
                return Err(Error::NotMonotone { at: t, slope: s });
            }
            if t > cutoff.plateau_end && t < cutoff.support_end {
                min_slope = min_slope.min(s);
            }
            prev = v;
        }
        p.min_slope = min_slope;
        Ok(p)
    }

    /// Smallest sampled psi' on the blending interval.
    pub fn min_observed_slope(&self) -> f64 {
        self.min_slope
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t >= 1.0 {
            return Err(Error::Domain(format!("psi needs 0 <= t < 1, got {t}")));
        }
        Ok(self.value(t))
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.cutoff.plateau_end {
            return t;
        }
        let e = (1.0 / (1.0 - t)).exp();
        if t >= self.cutoff.support_end {
            return e;
        }
        let c = self.cutoff.value(t);
        t * c + (1.0 - c) * e
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.cutoff.plateau_end {
            return 1.0;
        }
        let u = 1.0 / (1.0 - t);
        let e = u.exp();
        if t >= self.cutoff.support_end {
            return e * u * u;
        }
        let c = self.cutoff.value(t);
        let dc = self.cutoff.derivative(t);
        c + dc * (t - e) + (1.0 - c) * e * u * u
    }

    /// Unique t in [0, 1) with psi(t) = s.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("psi inverse needs finite s >= 0, got {s}")));
        }
        let a = self.cutoff.plateau_end;
        let b = self.cutoff.support_end;
        if s <= a {
            return Ok(s);
        }
        let top = (1.0 / (1.0 - b)).exp();
        if s >= top {
            return Ok(1.0 - 1.0 / s.ln());
        }
        let (mut lo, mut hi) = (a, b);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = self.value(t) - s;
            if r.abs() <= 2.0 * f64::EPSILON * s {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if hi - lo <= 4.0 * f64::EPSILON {
                break;
            }
            let newton = t - r / self.derivative(t);
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(t)
    }
}

/// Scaled so that points near the overflow radius keep a finite norm.
fn norm(x: &[f64]) -> f64 {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

/// Psi(x) = x/|x| psi(|x|) on the open unit ball of R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDiffeo {
    pub n: usize,
    pub profile: RadialProfile,
}

impl RadialDiffeo {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_profile(n, RadialProfile::default())
    }

    pub fn with_profile(n: usize, profile: RadialProfile) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("fiber dimension must be positive".into()));
        }
        Ok(Self { n, profile })
    }

    fn identity_radius(&self) -> f64 {
        self.profile.cutoff.plateau_end
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let r = norm(x);
        if r >= 1.0 || r.is_nan() {
            return Err(Error::OutsideUnitBall { radius: r });
        }
        if r <= self.identity_radius() || r < 1e-300 {
            return Ok(x.to_vec());
        }
        let scale = self.profile.value(r) / r;
        if !scale.is_finite() {
            return Err(Error::Overflow { radius: r });
        }
        Ok(x.iter().map(|v| v * scale).collect())
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let s = norm(y);
        if !s.is_finite() {
            return Err(Error::Domain("non-finite point".into()));
        }
        if s <= self.identity_radius() {
            return Ok(y.to_vec());
        }
        let t = self.profile.inverse(s)?;
        let scale = t / s;
        Ok(y.iter().map(|v| v * scale).collect())
    }

    /// D Psi = psi'(r) P_r + (psi(r)/r) P_perp.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let r = norm(x);
        if r >= 1.0 {
            return Err(Error::OutsideUnitBall { radius: r });
        }
        let n = self.n;
        if r <= self.identity_radius() {
            return Ok(DMatrix::identity(n, n));
        }
        let dp = self.profile.derivative(r);
        let q = self.profile.value(r) / r;
        let mut j = DMatrix::identity(n, n) * q;
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] += (dp - q) * x[a] * x[b] / (r * r);
            }
        }
        Ok(j)
    }

    /// (D Psi(x))^{-1} w for |x| < 1 and 0 otherwise.
    pub fn inverse_jacobian_apply(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r >= 1.0 {
            return vec![0.0; w.len()];
        }
        if r <= self.identity_radius() {
            return w.to_vec();
        }
        let radial = 1.0 / self.profile.derivative(r);
        let tangential = r / self.profile.value(r);
        let radial = if radial.is_finite() { radial } else { 0.0 };
        let tangential = if tangential.is_finite() { tangential } else { 0.0 };
        let proj: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / (r * r);
        x.iter()
            .zip(w)
            .map(|(xa, wa)| {
                let par = proj * xa;
                radial * par + tangential * (wa - par)
            })
            .collect()
    }

    /// X_i = Psi^* e_i, extended by zero outside the unit ball; `i` is zero-based.
    pub fn frame_field(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if i >= self.n {
            return Err(Error::Dimension(format!("axis {i} out of range for n = {}", self.n)));
        }
        let mut e = vec![0.0; self.n];
        e[i] = 1.0;
        Ok(self.inverse_jacobian_apply(x, &e))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.n, x.len())));
        }
        Ok(())
    }
}

pub fn eval_chi(t: f64) -> Result<f64> {
    CutoffProfile::default().eval(t)
}

pub fn eval_psi(t: f64) -> Result<f64> {
    RadialProfile::default().eval(t)
}

pub fn psi_inverse(s: f64) -> Result<f64> {
    RadialProfile::default().inverse(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_plateau_and_support() {
        assert_eq!(eval_chi(0.3).unwrap(), 1.0);
        assert_eq!(eval_chi(0.8).unwrap(), 0.0);
        assert!(eval_chi(-0.1).is_err());
        let v = eval_chi(0.625).unwrap();
        assert!(v > 0.0 && v < 1.0);
        // symmetric smooth step
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi_monotone_dense() {
        let c = CutoffProfile::default();
        let mut prev = 1.0;
        for k in 0..=10_000 {
            let t = 0.4 + 0.5 * k as f64 / 10_000.0;
            let v = c.value(t);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn chi_flat_at_ends() {
        let c = CutoffProfile::default();
        let mut last = f64::INFINITY;
        for k in 2..7 {
            let h = 10f64.powi(-k) * 2.0;
            let d = ((c.value(0.5 + h) - c.value(0.5)) / h).abs();
            let e = ((c.value(0.75) - c.value(0.75 - h)) / h).abs();
            assert!(d.max(e) <= last);
            last = d.max(e);
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(eval_psi(0.25).unwrap(), 0.25);
        assert_eq!(eval_psi(0.5).unwrap(), 0.5);
        assert!((eval_psi(0.9).unwrap() - 22026.465794806718).abs() < 1e-9);
        assert!(eval_psi(1.0).is_err());
    }

    #[test]
    fn psi_derivative_matches_difference_quotient() {
        let p = RadialProfile::default();
        for k in 1..50 {
            let t = 0.5 + 0.25 * k as f64 / 50.0;
            let h = 1e-6;
            let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-6 * p.derivative(t).max(1.0));
        }
        assert!(p.min_observed_slope() >= 1.0 - 1e-12);
    }

    #[test]
    fn psi_inverse_examples() {
        assert_eq!(psi_inverse(0.25).unwrap(), 0.25);
        assert!((psi_inverse(10f64.exp()).unwrap() - 0.9).abs() < 1e-14);
        let t = psi_inverse(1000.0).unwrap();
        assert!((t - (1.0 - 1.0 / 1000f64.ln())).abs() < 1e-15);
        assert!((t - 0.855_235_2).abs() < 1e-7);
        assert_eq!(CutoffProfile::default().value(t), 0.0);
        assert!(psi_inverse(-1.0).is_err());
    }

    #[test]
    fn psi_inverse_blend_region() {
        let p = RadialProfile::default();
        for k in 0..=200 {
            let t = 0.5 + 0.25 * k as f64 / 200.0;
            let s = p.value(t);
            let back = p.inverse(s).unwrap();
            assert!((p.value(back) - s).abs() <= 1e-14 * s);
            assert!((back - t).abs() < 1e-13);
        }
    }

    #[test]
    fn psi_map_examples() {
        let d = RadialDiffeo::new(2).unwrap();
        assert_eq!(d.apply(&[0.2, 0.1]).unwrap(), vec![0.2, 0.1]);
        let y = d.apply(&[0.9, 0.0]).unwrap();
        assert!((y[0] - 10f64.exp()).abs() < 1e-9 && y[1] == 0.0);
        assert!(d.apply(&[1.0, 0.0]).is_err());
        assert_eq!(d.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let (c, s) = (37f64.to_radians().cos(), 37f64.to_radians().sin());
        let x = [0.63, 0.21];
        let rx = [c * x[0] - s * x[1], s * x[0] + c * x[1]];
        let a = d.apply(&rx).unwrap();
        let b = d.apply(&x).unwrap();
        let rb = [c * b[0] - s * b[1], s * b[0] + c * b[1]];
        assert!((a[0] - rb[0]).abs() < 1e-12 && (a[1] - rb[1]).abs() < 1e-12);
    }

    #[test]
    fn frame_field_examples() {
        let d = RadialDiffeo::new(2).unwrap();
        assert_eq!(d.frame_field(0, &[0.1, 0.3]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(d.frame_field(0, &[1.2, 0.0]).unwrap(), vec![0.0, 0.0]);
        let v = d.frame_field(0, &[0.99, 0.0]).unwrap();
        assert!(norm(&v) < 1e-3);
        let mut last = f64::INFINITY;
        for k in 1..=8 {
            let r = 1.0 - 10f64.powi(-k);
            let m = norm(&d.frame_field(1, &[r, 0.0]).unwrap()) + norm(&d.frame_field(0, &[r, 0.0]).unwrap());
            assert!(m < last || (m == 0.0 && last == 0.0));
            last = m;
        }
    }

    #[test]
    fn jacobian_matches_inverse_apply() {
        let d = RadialDiffeo::new(3).unwrap();
        let x = [0.3, -0.4, 0.35];
        let j = d.jacobian(&x).unwrap();
        let w = [0.2, 1.0, -0.7];
        let u = d.inverse_jacobian_apply(&x, &w);
        let back = &j * nalgebra::DVector::from_column_slice(&u);
        for a in 0..3 {
            assert!((back[a] - w[a]).abs() < 1e-12);
        }
    }
}
