use localstar::spacetime::*;
use localstar::verify::fixtures::*;
use localstar::FieldFn;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn hyperbolic_family(points: Vec<Vec<f64>>) -> FiberedProductFamily {
    FiberedProductFamily::new(Arc::new(HyperbolicDisk), points, None, TowerConfig::standard(1.0, 0.004)).unwrap()
}

fn chart_scale(p: &[f64]) -> f64 {
    (1.0 - p[0] * p[0] - p[1] * p[1]) / 2.0
}

fn shifted(b: &Bump, p: &[f64], scale: f64) -> FieldFn {
    let c = vec![p[0] + b.centre[0] * scale, p[1] + b.centre[1] * scale];
    windowed_gaussian(c, b.sigma * scale, b.rho * scale, b.amp)
}

#[test]
fn hyperbolic_expp_residual() {
    let p = vec![0.1, -0.2];
    let fam = hyperbolic_family(vec![p.clone()]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = chart_scale(&p);
    for _ in 0..2 {
        let (a, b) = random_overlapping_pair(&mut rng, 1.0, 0.45, 0.1);
        let r = fam.residual_expp(&p, &shifted(&a, &p, s), &shifted(&b, &p, s)).unwrap();
        assert!(r <= 1e-5, "{r:e}");
    }
}

#[test]
fn phi_round_trip_on_the_disk() {
    let fam = hyperbolic_family(vec![vec![0.0, 0.0]]);
    for (p, v) in [([0.1, -0.2], [0.05, 0.02]), ([-0.3, 0.4], [-0.01, 0.03])] {
        let (a, b) = fam.phi(&p, &v).unwrap();
        let (q, w) = fam.phi_inverse(&a, &b).unwrap();
        let err = q.iter().zip(&p).chain(w.iter().zip(&v)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err:e}");
    }
}

#[test]
fn flat_commutator_vanishes_outside_v() {
    let p = vec![0.0, 0.0];
    let fam = FiberedProductFamily::new(Arc::new(Flat { m: 2 }), vec![p.clone()], None, TowerConfig::standard(5.0, 0.1)).unwrap();
    let f = windowed_gaussian(vec![0.1, 0.0], 0.3, 2.55, Complex64::new(1.0, 0.0));
    let g = windowed_gaussian(vec![-0.1, 0.1], 0.3, 2.55, Complex64::new(0.0, 1.0));
    let points: Vec<Vec<f64>> = (0..40).map(|k| vec![-10.0 + 0.5 * k as f64, 0.05 * k as f64 - 1.0]).collect();
    let (worst, outside) = fam.commutator_outside_vp(&p, &f, &g, &points).unwrap();
    assert!(outside > 0);
    assert_eq!(worst, 0.0);
    let inside = fam.star_p_on_m(&p, &f, &g, &[vec![0.0, 0.0]]).unwrap()[0];
    let reversed = fam.star_p_on_m(&p, &g, &f, &[vec![0.0, 0.0]]).unwrap()[0];
    assert!((inside - reversed).norm() > 1e-4);
}
