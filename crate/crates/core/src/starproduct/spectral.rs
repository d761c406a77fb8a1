//! Mode lattices, n-dimensional FFT helpers and twisted convolutions.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficients c_k of sum_k c_k exp(2 pi i sum_a k_a y_a / L_a) for k in a box of integers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeArray {
    pub lo: Vec<i64>,
    pub shape: Vec<usize>,
    pub periods: Vec<f64>,
    pub data: Vec<Complex64>,
}

impl ModeArray {
    pub fn zeros(lo: Vec<i64>, shape: Vec<usize>, periods: Vec<f64>) -> Self {
        let len = shape.iter().product();
        Self {
            lo,
            shape,
            periods,
            data: vec![ZERO; len],
        }
    }

    /// Symmetric lattice -N/2 .. N/2-1 on every axis.
    pub fn centered(n_axes: usize, points: usize, periods: Vec<f64>) -> Self {
        Self::zeros(vec![-(points as i64) / 2; n_axes], vec![points; n_axes], periods)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..self.dim() {
            let i = k[a] - self.lo[a];
            if i < 0 || i >= self.shape[a] as i64 {
                return None;
            }
            flat = flat * self.shape[a] + i as usize;
        }
        Some(flat)
    }

    pub fn mode_of(&self, mut flat: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.dim()];
        for a in (0..self.dim()).rev() {
            k[a] = self.lo[a] + (flat % self.shape[a]) as i64;
            flat /= self.shape[a];
        }
        k
    }

    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.index_of(k).map(|i| self.data[i]).unwrap_or(ZERO)
    }

    pub fn set(&mut self, k: &[i64], v: Complex64) {
        if let Some(i) = self.index_of(k) {
            self.data[i] = v;
        }
    }

    pub fn single(lo: Vec<i64>, shape: Vec<usize>, periods: Vec<f64>, k: &[i64], v: Complex64) -> Self {
        let mut m = Self::zeros(lo, shape, periods);
        m.set(k, v);
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Copy onto another index box; entries outside it are dropped.
    pub fn restricted(&self, lo: &[i64], shape: &[usize]) -> Self {
        let mut out = Self::zeros(lo.to_vec(), shape.to_vec(), self.periods.clone());
        for (flat, v) in self.data.iter().enumerate() {
            if *v != ZERO {
                let k = self.mode_of(flat);
                out.set(&k, *v);
            }
        }
        out
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        let n = self.dim();
        let factors: Vec<Vec<Complex64>> = (0..n)
            .map(|a| axis_exponentials(self.lo[a], self.shape[a], self.periods[a], y[a]))
            .collect();
        let mut acc = ZERO;
        if n == 2 {
            let (s0, s1) = (self.shape[0], self.shape[1]);
            for i in 0..s0 {
                let row = &self.data[i * s1..(i + 1) * s1];
                let mut inner = ZERO;
                for (c, e) in row.iter().zip(&factors[1]) {
                    inner += c * e;
                }
                acc += inner * factors[0][i];
            }
            return acc;
        }
        for (flat, c) in self.data.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let mut rest = flat;
            let mut w = Complex64::new(1.0, 0.0);
            for a in (0..n).rev() {
                w *= factors[a][rest % self.shape[a]];
                rest /= self.shape[a];
            }
            acc += c * w;
        }
        acc
    }

    /// Values on the tensor grid with coordinates `coords[a]` along axis a.
    pub fn eval_tensor(&self, coords: &[Vec<f64>]) -> Vec<Complex64> {
        let mut data = self.data.clone();
        let mut shape = self.shape.clone();
        for a in 0..self.dim() {
            let e: Vec<Vec<Complex64>> = coords[a]
                .iter()
                .map(|y| axis_exponentials(self.lo[a], self.shape[a], self.periods[a], *y))
                .collect();
            let (d, s) = contract_axis(&data, &shape, a, &e);
            data = d;
            shape = s;
        }
        data
    }

    /// f(y) -> f(y + s): multiplies c_k by exp(2 pi i k.s/L).
    pub fn translated(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for (flat, v) in out.data.iter_mut().enumerate() {
            if *v == ZERO {
                continue;
            }
            let k = self.mode_of(flat);
            let phase: f64 = (0..k.len()).map(|a| 2.0 * PI * k[a] as f64 * s[a] / self.periods[a]).sum();
            *v *= Complex64::from_polar(1.0, phase);
        }
        out
    }

    pub fn axpy(&mut self, c: Complex64, other: &ModeArray) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Largest |k_a|/L_a among coefficients above `rel * max`.
    pub fn bandwidth(&self, rel: f64) -> Vec<f64> {
        let m = self.max_abs();
        let mut bw = vec![0.0; self.dim()];
        if m == 0.0 {
            return bw;
        }
        for (flat, v) in self.data.iter().enumerate() {
            if v.norm() > rel * m {
                let k = self.mode_of(flat);
                for a in 0..self.dim() {
                    bw[a] = f64::max(bw[a], k[a].unsigned_abs() as f64 / self.periods[a]);
                }
            }
        }
        bw
    }
}

fn axis_exponentials(lo: i64, len: usize, period: f64, y: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * y / period;
    (0..len)
        .map(|i| Complex64::from_polar(1.0, w * (lo + i as i64) as f64))
        .collect()
}

/// out[.., m, ..] = sum_k data[.., k, ..] e[m][k] along `axis`.
pub fn contract_axis(data: &[Complex64], shape: &[usize], axis: usize, e: &[Vec<Complex64>]) -> (Vec<Complex64>, Vec<usize>) {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let m = e.len();
    let mut out = vec![ZERO; outer * m * stride];
    for o in 0..outer {
        for (j, row) in e.iter().enumerate() {
            let dst = &mut out[(o * m + j) * stride..(o * m + j + 1) * stride];
            for (k, w) in row.iter().enumerate().take(len) {
                let src = &data[(o * len + k) * stride..(o * len + k + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * w;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = m;
    (out, new_shape)
}

/// Unnormalized in-place FFT along every axis.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..shape.len() {
        let len = shape[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut line = vec![ZERO; len];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * len * stride + s;
                for k in 0..len {
                    line[k] = data[base + k * stride];
                }
                fft.process(&mut line);
                for k in 0..len {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }
}

/// Coefficients (origin at the box centre) of samples taken at y_j = -L/2 + j L/N.
pub fn samples_to_modes(samples: &[Complex64], points: usize, periods: &[f64]) -> ModeArray {
    let n = periods.len();
    let shape = vec![points; n];
    let mut data = samples.to_vec();
    fft_nd(&mut data, &shape, false);
    let total = data.len() as f64;
    let mut out = ModeArray::centered(n, points, periods.to_vec());
    let half = (points / 2) as i64;
    for (flat, v) in data.iter().enumerate() {
        let mut rest = flat;
        let mut k = vec![0i64; n];
        for a in (0..n).rev() {
            let j = (rest % points) as i64;
            rest /= points;
            k[a] = if j < half { j } else { j - points as i64 };
        }
        let sign = if k.iter().sum::<i64>().rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        out.set(&k, v * (sign / total));
    }
    out
}

/// Inverse of `samples_to_modes` for a centred lattice of the same size.
pub fn modes_to_samples(modes: &ModeArray, points: usize) -> Vec<Complex64> {
    let n = modes.dim();
    let shape = vec![points; n];
    let mut data = vec![ZERO; points.pow(n as u32)];
    for (flat, v) in modes.data.iter().enumerate() {
        if *v == ZERO {
            continue;
        }
        let k = modes.mode_of(flat);
        let mut idx = 0usize;
        for a in 0..n {
            idx = idx * points + k[a].rem_euclid(points as i64) as usize;
        }
        let sign = if k.iter().sum::<i64>().rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        data[idx] = v * sign;
    }
    fft_nd(&mut data, &shape, true);
    data
}

fn twist_phase(p: &[i64], q: &[i64], theta: &DMatrix<f64>, periods: &[f64]) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for a in 0..n {
        if p[a] == 0 {
            continue;
        }
        for b in 0..n {
            s += (p[a] as f64 / periods[a]) * theta[(a, b)] * (q[b] as f64 / periods[b]);
        }
    }
    -2.0 * PI * s
}

/// (f * g)^(k) = sum_{p+q=k} f(p) g(q) exp(-2 pi i p.Theta q) on the full sum lattice.
pub fn moyal_twisted_convolution(f: &ModeArray, g: &ModeArray, theta: &DMatrix<f64>) -> Result<ModeArray> {
    let n = f.dim();
    if g.dim() != n || f.periods != g.periods {
        return Err(Error::LatticeMismatch);
    }
    if theta.nrows() != n || theta.ncols() != n {
        return Err(Error::Dimension("Theta must match the lattice dimension".into()));
    }
    if crate::poisson::skew_defect(theta) != 0.0 {
        return Err(Error::NotSkew {
            defect: crate::poisson::skew_defect(theta),
        });
    }
    let lo: Vec<i64> = (0..n).map(|a| f.lo[a] + g.lo[a]).collect();
    let shape: Vec<usize> = (0..n).map(|a| f.shape[a] + g.shape[a] - 1).collect();
    let mut out = ModeArray::zeros(lo, shape, f.periods.clone());
    let fnz: Vec<(Vec<i64>, Complex64)> = f
        .data
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != ZERO)
        .map(|(i, v)| (f.mode_of(i), *v))
        .collect();
    let gnz: Vec<(Vec<i64>, Complex64)> = g
        .data
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != ZERO)
        .map(|(i, v)| (g.mode_of(i), *v))
        .collect();
    for (p, a) in &fnz {
        for (q, b) in &gnz {
            let k: Vec<i64> = p.iter().zip(q).map(|(x, y)| x + y).collect();
            let idx = out.index_of(&k).expect("sum lattice contains p + q");
            out.data[idx] += a * b * Complex64::from_polar(1.0, twist_phase(p, q, theta, &f.periods));
        }
    }
    Ok(out)
}

/// Twisted convolution restricted to the output box (`out_lo`, `out_shape`).
pub fn twisted_convolution_truncated(f: &ModeArray, g: &ModeArray, theta: &DMatrix<f64>, out_lo: &[i64], out_shape: &[usize]) -> Result<ModeArray> {
    let n = f.dim();
    if g.dim() != n || f.periods != g.periods {
        return Err(Error::LatticeMismatch);
    }
    if n == 2 {
        let w = theta[(0, 1)];
        if theta[(0, 0)] != 0.0 || theta[(1, 1)] != 0.0 || theta[(1, 0)] != -w {
            return Err(Error::NotSkew {
                defect: crate::poisson::skew_defect(theta),
            });
        }
        return Ok(twisted_conv_2d(f, g, w, out_lo, out_shape));
    }
    let full = moyal_twisted_convolution(f, g, theta)?;
    Ok(full.restricted(out_lo, out_shape))
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Planar case theta = [[0, w], [-w, 0]]: one padded 1-D FFT convolution per (k1, p1) pair.
fn twisted_conv_2d(f: &ModeArray, g: &ModeArray, w: f64, out_lo: &[i64], out_shape: &[usize]) -> ModeArray {
    let periods = f.periods.clone();
    let beta = -2.0 * PI * w / (periods[0] * periods[1]);
    let (f0, f1) = (f.shape[0], f.shape[1]);
    let (g0, g1) = (g.shape[0], g.shape[1]);
    let (o0, o1) = (out_shape[0], out_shape[1]);
    let pad = (f1 + g1 - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let plans = Plans {
        forward: planner.plan_fft_forward(pad),
        inverse: planner.plan_fft_inverse(pad),
    };
    let f_rows: Vec<bool> = (0..f0).map(|i| f.data[i * f1..(i + 1) * f1].iter().any(|v| *v != ZERO)).collect();
    let g_spectra: Vec<Option<Vec<Complex64>>> = (0..g0)
        .into_par_iter()
        .map(|i| {
            let row = &g.data[i * g1..(i + 1) * g1];
            if row.iter().all(|v| *v == ZERO) {
                return None;
            }
            let mut buf = vec![ZERO; pad];
            buf[..g1].copy_from_slice(row);
            plans.forward.process(&mut buf);
            Some(buf)
        })
        .collect();
    let conv_lo = f.lo[1] + g.lo[1];
    let rows: Vec<Vec<Complex64>> = (0..o0)
        .into_par_iter()
        .map(|i0| {
            let k1 = out_lo[0] + i0 as i64;
            let mut acc = vec![ZERO; o1];
            let mut buf = vec![ZERO; pad];
            let pre: Vec<Complex64> = (0..f1)
                .map(|j| Complex64::from_polar(1.0, -beta * (f.lo[1] + j as i64) as f64 * k1 as f64))
                .collect();
            for a in 0..f0 {
                if !f_rows[a] {
                    continue;
                }
                let p1 = f.lo[0] + a as i64;
                let q1 = k1 - p1;
                let b = q1 - g.lo[0];
                if b < 0 || b >= g0 as i64 {
                    continue;
                }
                let Some(gs) = &g_spectra[b as usize] else {
                    continue;
                };
                let row = &f.data[a * f1..(a + 1) * f1];
                for j in 0..pad {
                    buf[j] = if j < f1 { row[j] * pre[j] } else { ZERO };
                }
                plans.forward.process(&mut buf);
                for (x, y) in buf.iter_mut().zip(gs) {
                    *x *= y;
                }
                plans.inverse.process(&mut buf);
                let scale = 1.0 / pad as f64;
                for (i1, slot) in acc.iter_mut().enumerate() {
                    let k2 = out_lo[1] + i1 as i64;
                    let j = k2 - conv_lo;
                    if j < 0 || j >= (f1 + g1 - 1) as i64 {
                        continue;
                    }
                    let phase = Complex64::from_polar(scale, beta * p1 as f64 * k2 as f64);
                    *slot += buf[j as usize] * phase;
                }
            }
            acc
        })
        .collect();
    let mut out = ModeArray::zeros(out_lo.to_vec(), out_shape.to_vec(), periods);
    for (i0, row) in rows.into_iter().enumerate() {
        out.data[i0 * o1..(i0 + 1) * o1].copy_from_slice(&row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_modes(rng: &mut ChaCha8Rng, lo: Vec<i64>, shape: Vec<usize>, periods: Vec<f64>) -> ModeArray {
        let mut m = ModeArray::zeros(lo, shape, periods);
        for v in m.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        m
    }

    fn j(w: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0])
    }

    #[test]
    fn plane_waves() {
        let periods = vec![2.0, 3.0];
        let theta = j(0.37);
        let p = [2i64, -1];
        let q = [-3i64, 3];
        let ep = ModeArray::single(vec![-4, -4], vec![8, 8], periods.clone(), &p, Complex64::new(1.0, 0.0));
        let eq = ModeArray::single(vec![-4, -4], vec![8, 8], periods.clone(), &q, Complex64::new(1.0, 0.0));
        let pq = moyal_twisted_convolution(&ep, &eq, &theta).unwrap();
        let qp = moyal_twisted_convolution(&eq, &ep, &theta).unwrap();
        let s = (p[0] as f64 / 2.0) * 0.37 * (q[1] as f64 / 3.0) - (p[1] as f64 / 3.0) * 0.37 * (q[0] as f64 / 2.0);
        let k = [p[0] + q[0], p[1] + q[1]];
        let expect = Complex64::from_polar(1.0, -2.0 * PI * s);
        assert!((pq.get(&k) - expect).norm() < 1e-14);
        let comm = pq.get(&k) - qp.get(&k);
        let closed = Complex64::new(0.0, -2.0 * (2.0 * PI * s).sin());
        assert!((comm - closed).norm() < 1e-14);
    }

    #[test]
    fn zero_theta_is_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_modes(&mut rng, vec![-2], vec![5], vec![1.0]);
        let g = random_modes(&mut rng, vec![-1], vec![3], vec![1.0]);
        let h = moyal_twisted_convolution(&f, &g, &DMatrix::zeros(1, 1)).unwrap();
        for k in -3i64..=3 {
            let mut s = ZERO;
            for p in -2i64..=2 {
                s += f.get(&[p]) * g.get(&[k - p]);
            }
            assert!((h.get(&[k]) - s).norm() < 1e-13);
        }
    }

    #[test]
    fn full_lattice_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let periods = vec![1.5, 2.5];
        let a = random_modes(&mut rng, vec![-2, -2], vec![4, 4], periods.clone());
        let b = random_modes(&mut rng, vec![-2, -2], vec![4, 4], periods.clone());
        let c = random_modes(&mut rng, vec![-2, -2], vec![4, 4], periods.clone());
        let t = j(0.8);
        let ab = moyal_twisted_convolution(&a, &b, &t).unwrap();
        let bc = moyal_twisted_convolution(&b, &c, &t).unwrap();
        let left = moyal_twisted_convolution(&ab, &c, &t).unwrap();
        let right = moyal_twisted_convolution(&a, &bc, &t).unwrap();
        let diff = left.data.iter().zip(&right.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12 * left.max_abs());
    }

    #[test]
    fn fast_path_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let periods = vec![3.0, 2.0];
        let f = random_modes(&mut rng, vec![-8, -8], vec![16, 16], periods.clone());
        let g = random_modes(&mut rng, vec![-8, -8], vec![16, 16], periods.clone());
        let t = j(0.45);
        let fast = twisted_convolution_truncated(&f, &g, &t, &[-8, -8], &[16, 16]).unwrap();
        let direct = moyal_twisted_convolution(&f, &g, &t).unwrap().restricted(&[-8, -8], &[16, 16]);
        let diff = fast.data.iter().zip(&direct.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-11, "diff {diff}");
        let off = twisted_convolution_truncated(&f, &g, &t, &[-3, -20], &[7, 40]).unwrap();
        let direct_off = moyal_twisted_convolution(&f, &g, &t).unwrap().restricted(&[-3, -20], &[7, 40]);
        let diff = off.data.iter().zip(&direct_off.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-11);
    }

    #[test]
    fn sampling_round_trip_and_eval() {
        let n = 16;
        let periods = vec![4.0, 4.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = ModeArray::centered(2, n, periods.clone());
        for k0 in -3i64..=3 {
            for k1 in -3i64..=3 {
                m.set(&[k0, k1], Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        let s = modes_to_samples(&m, n);
        let idx = 5 * n + 11;
        let y = [-2.0 + 5.0 * 4.0 / n as f64, -2.0 + 11.0 * 4.0 / n as f64];
        assert!((s[idx] - m.eval(&y)).norm() < 1e-12);
        let back = samples_to_modes(&s, n, &periods);
        let diff = back.data.iter().zip(&m.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
        let coords = vec![vec![0.3, -1.1], vec![0.7, 1.9, -0.2]];
        let t = m.eval_tensor(&coords);
        assert!((t[1 * 3 + 2] - m.eval(&[-1.1, -0.2])).norm() < 1e-12);
        let shifted = m.translated(&[0.25, -0.5]);
        assert!((shifted.eval(&[0.1, 0.2]) - m.eval(&[0.35, -0.3])).norm() < 1e-12);
    }
}
