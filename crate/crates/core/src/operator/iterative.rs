//! SIRT, the Tikhonov-style CG solve used by decomposed diffusion sampling,
//! and power iteration for the spectral norm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::grid::{ImageGrid, ImageShape, Sinogram};
use super::projector::{LinearOperator, Projector};
use crate::error::{invalid, Error, Result};
use crate::linalg::{conjugate_gradient, dot, norm, sub, CgSettings};

/// SIRT with inverse row-sum (`R`) and column-sum (`C`) weights. Rays that
/// miss the image and pixels no ray touches get weight zero.
pub struct Sirt<'a> {
    projector: &'a Projector,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
}

fn inverse_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        0.0
    }
}

impl<'a> Sirt<'a> {
    pub fn new(projector: &'a Projector) -> Self {
        let row_weights = projector.row_sums().into_iter().map(inverse_or_zero).collect();
        let col_weights = projector
            .column_sums()
            .into_iter()
            .map(inverse_or_zero)
            .collect();
        Self {
            projector,
            row_weights,
            col_weights,
        }
    }

    /// One update `x += C A^T R (y - A x)`, optionally clamped at zero.
    pub fn step(&self, x: &mut [f64], y: &[f64], nonneg: bool) {
        let residual: Vec<f64> = self
            .projector
            .apply(x)
            .iter()
            .zip(y)
            .zip(&self.row_weights)
            .map(|((ax, yv), r)| r * (yv - ax))
            .collect();
        let back = self.projector.adjoint(&residual);
        for ((xi, b), c) in x.iter_mut().zip(&back).zip(&self.col_weights) {
            *xi += c * b;
            if nonneg && *xi < 0.0 {
                *xi = 0.0;
            }
        }
    }

    pub fn run(&self, init: &[f64], y: &[f64], iterations: usize, nonneg: bool) -> Vec<f64> {
        let mut x = init.to_vec();
        for _ in 0..iterations {
            self.step(&mut x, y, nonneg);
        }
        x
    }

    /// The linear map `y -> x_k` of `k` unclamped iterations from zero.
    pub fn apply_linear(&self, y: &[f64], iterations: usize) -> Vec<f64> {
        self.run(&vec![0.0; self.projector.domain_len()], y, iterations, false)
    }

    /// Transpose of [`Sirt::apply_linear`].
    ///
    /// With `G = C A^T R` and `M = I - G A`, `x_k = sum_{j<k} M^j G y`, so the
    /// transpose is `R A C sum_{j<k} (M^T)^j v`.
    pub fn apply_linear_transpose(&self, v: &[f64], iterations: usize) -> Vec<f64> {
        let mut w = v.to_vec();
        for _ in 1..iterations {
            // w <- v + M^T w,  M^T w = w - A^T R A C w
            let cw: Vec<f64> = w.iter().zip(&self.col_weights).map(|(a, c)| a * c).collect();
            let rac: Vec<f64> = self
                .projector
                .apply(&cw)
                .iter()
                .zip(&self.row_weights)
                .map(|(a, r)| a * r)
                .collect();
            let back = self.projector.adjoint(&rac);
            for ((wi, vi), bi) in w.iter_mut().zip(v).zip(&back) {
                *wi = vi + *wi - bi;
            }
        }
        let cw: Vec<f64> = w.iter().zip(&self.col_weights).map(|(a, c)| a * c).collect();
        self.projector
            .apply(&cw)
            .iter()
            .zip(&self.row_weights)
            .map(|(a, r)| a * r)
            .collect()
    }
}

pub fn sirt_reconstruct(
    sino: &Sinogram,
    shape: ImageShape,
    iterations: usize,
    nonneg: bool,
) -> Result<ImageGrid> {
    if iterations == 0 {
        return Err(invalid("SIRT needs at least one iteration"));
    }
    let projector = Projector::new(shape, sino.geometry.clone())?;
    let sirt = Sirt::new(&projector);
    let values = sirt.run(&vec![0.0; shape.len()], &sino.values, iterations, nonneg);
    Ok(ImageGrid { shape, values })
}

/// Solves `(γ AᵀRA + I) x = anchor + γ AᵀR y` by conjugate gradient, starting
/// from `anchor`. `weights` is the diagonal of `R` (identity when absent).
pub fn cg_solve_regularized(
    projector: &Projector,
    y: &[f64],
    anchor: &[f64],
    gamma: f64,
    weights: Option<&[f64]>,
    settings: CgSettings,
) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma must be finite and >= 0"));
    }
    if y.len() != projector.range_len() || anchor.len() != projector.domain_len() {
        return Err(Error::ShapeMismatch("cg_solve_regularized inputs".into()));
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::ShapeMismatch("one weight per sinogram bin".into()));
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("weights must be strictly positive"));
        }
    }
    if gamma == 0.0 {
        return Ok(anchor.to_vec());
    }
    let weigh = |v: &mut Vec<f64>| {
        if let Some(w) = weights {
            v.iter_mut().zip(w).for_each(|(a, b)| *a *= b);
        }
    };
    let mut ry = y.to_vec();
    weigh(&mut ry);
    let aty = projector.adjoint(&ry);
    let rhs: Vec<f64> = anchor.iter().zip(&aty).map(|(a, b)| a + gamma * b).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut av = projector.apply(v);
        weigh(&mut av);
        let back = projector.adjoint(&av);
        for ((o, vi), bi) in out.iter_mut().zip(v).zip(&back) {
            *o = vi + gamma * bi;
        }
    };
    Ok(conjugate_gradient(apply, &rhs, anchor, settings)?.solution)
}

/// Estimates the largest eigenvalue of `AᵀA` by power iteration from a
/// standard-normal start drawn with `seed`, returning the final Rayleigh
/// quotient.
pub fn spectral_norm_sq_seeded<O: LinearOperator + ?Sized>(
    op: &O,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    if iterations < 10 {
        return Err(invalid("power iteration needs at least 10 iterations"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..op.domain_len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = op.normal(&v);
        estimate = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Ok(estimate)
}

/// [`spectral_norm_sq_seeded`] with seed 0.
pub fn spectral_norm_sq<O: LinearOperator + ?Sized>(op: &O, iterations: usize) -> Result<f64> {
    spectral_norm_sq_seeded(op, iterations, 0)
}

/// `||A x - y||₂`
pub fn data_fit(projector: &Projector, x: &[f64], y: &[f64]) -> f64 {
    norm(&sub(&projector.apply(x), y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::grid::ProjectionGeometry;
    use crate::operator::projector::Scaled;

    fn setup(n: usize, views: usize) -> Projector {
        let shape = ImageShape::square(n);
        Projector::new(shape, ProjectionGeometry::covering(shape, views).unwrap()).unwrap()
    }

    fn blob(n: usize) -> Vec<f64> {
        (0..n * n)
            .map(|p| {
                let (i, j) = ((p % n) as f64, (p / n) as f64);
                let c = (n as f64 - 1.0) / 2.0;
                (-((i - c).powi(2) + (j - c * 0.8).powi(2)) / 6.0).exp()
            })
            .collect()
    }

    #[test]
    fn sirt_fixed_point_on_consistent_data() {
        let p = setup(10, 12);
        let x = blob(10);
        let y = p.apply(&x);
        let sirt = Sirt::new(&p);
        let out = sirt.run(&x, &y, 1, false);
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sirt_zero_iterations_rejected() {
        let p = setup(6, 4);
        let s = Sinogram::zeros(p.geometry().clone());
        assert!(sirt_reconstruct(&s, p.shape(), 0, false).is_err());
    }

    #[test]
    fn sirt_data_fit_monotone() {
        let p = setup(16, 20);
        let x = blob(16);
        let y = p.apply(&x);
        let sirt = Sirt::new(&p);
        let mut cur = vec![0.0; 256];
        let mut prev = data_fit(&p, &cur, &y);
        for _ in 0..60 {
            sirt.step(&mut cur, &y, false);
            let f = data_fit(&p, &cur, &y);
            assert!(f <= prev * (1.0 + 1e-12));
            prev = f;
        }
    }

    #[test]
    fn sirt_nonneg_clamps() {
        let p = setup(8, 6);
        let y = vec![-1.0; p.range_len()];
        let sirt = Sirt::new(&p);
        let x = sirt.run(&vec![0.0; 64], &y, 3, true);
        assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sirt_linear_transpose_dot_test() {
        let p = setup(8, 5);
        let sirt = Sirt::new(&p);
        let y: Vec<f64> = (0..p.range_len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x: Vec<f64> = (0..64).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        for k in [1, 2, 5] {
            let lhs = dot(&sirt.apply_linear(&y, k), &x);
            let rhs = dot(&y, &sirt.apply_linear_transpose(&x, k));
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn cg_gamma_zero_returns_anchor() {
        let p = setup(8, 6);
        let anchor = blob(8);
        let y = vec![1.0; p.range_len()];
        let x = cg_solve_regularized(&p, &y, &anchor, 0.0, None, CgSettings::default()).unwrap();
        assert_eq!(x, anchor);
    }

    #[test]
    fn cg_unit_weights_match_unweighted() {
        let p = setup(8, 6);
        let anchor = blob(8);
        let y = p.apply(&vec![0.3; 64]);
        let ones = vec![1.0; y.len()];
        let a = cg_solve_regularized(&p, &y, &anchor, 2.0, None, CgSettings::default()).unwrap();
        let b = cg_solve_regularized(&p, &y, &anchor, 2.0, Some(&ones), CgSettings::default())
            .unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn cg_rejects_bad_weights() {
        let p = setup(6, 4);
        let y = vec![0.0; p.range_len()];
        let mut w = vec![1.0; y.len()];
        w[3] = 0.0;
        let r = cg_solve_regularized(&p, &y, &vec![0.0; 36], 1.0, Some(&w), CgSettings::default());
        assert!(r.is_err());
        assert!(cg_solve_regularized(&p, &y, &vec![0.0; 36], -1.0, None, CgSettings::default())
            .is_err());
    }

    #[test]
    fn cg_reports_residual_on_non_convergence() {
        let p = setup(12, 10);
        let y = p.apply(&blob(12));
        let settings = CgSettings {
            tolerance: 1e-14,
            max_iterations: 2,
            truncate: false,
        };
        match cg_solve_regularized(&p, &y, &vec![0.0; 144], 50.0, None, settings) {
            Err(Error::CgNotConverged { residual, .. }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spectral_estimate_scales_quadratically_and_is_monotone() {
        let p = setup(10, 8);
        let mu = spectral_norm_sq(&p, 100).unwrap();
        let scaled = spectral_norm_sq(&Scaled { inner: &p, factor: 2.5 }, 100).unwrap();
        assert!((scaled / mu - 6.25).abs() < 1e-9);
        let mut prev = 0.0;
        for it in [10, 20, 40, 80] {
            let est = spectral_norm_sq(&p, it).unwrap();
            assert!(est >= prev * (1.0 - 1e-12));
            prev = est;
        }
        assert!(spectral_norm_sq(&p, 5).is_err());
    }
}
