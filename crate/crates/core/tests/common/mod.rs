#![allow(dead_code)]

use ctdiff::operator::{ImageShape, LinearOperator, Projector, ProjectionGeometry};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn projector(n: usize, views: usize) -> Projector {
    let shape = ImageShape::square(n);
    Projector::new(shape, ProjectionGeometry::covering(shape, views).unwrap()).unwrap()
}

/// Column-by-column materialization of the operator.
pub fn dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let (m, n) = (op.range_len(), op.domain_len());
    let mut a = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..m {
            a[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    a
}

pub fn vec_of(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 { num } else { num / den }
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
