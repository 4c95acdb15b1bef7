mod common;

use common::*;
use ctdiff::analysis::*;
use ctdiff::harness::phantom::{generate_phantom, PhantomKind};
use ctdiff::operator::*;
use ctdiff::prior::{analytic_posterior, GaussianPrior};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn patient() -> LandweberSettings {
    LandweberSettings {
        relative_eps: 1e-6,
        max_iterations: 400_000,
        ..Default::default()
    }
}

fn dense_null(p: &Projector, x: &[f64]) -> Vec<f64> {
    let a = dense(p);
    let pinv = a.clone().pseudo_inverse(1e-8).unwrap();
    let n = x.len();
    let proj = DMatrix::<f64>::identity(n, n) - &pinv * &a;
    (proj * vec_of(x)).as_slice().to_vec()
}

#[test]
fn matches_dense_pseudoinverse() {
    for (views, seed) in [(2, 1), (3, 2), (3, 3)] {
        let p = projector(8, views);
        let x = ImageGrid::from_values(p.shape(), randn(64, &mut rng(seed))).unwrap();
        let d = null_space_component_with(&p, &x, patient()).unwrap();
        let want = dense_null(&p, &x.values);
        let err: Vec<f64> = d.x_null.values.iter().zip(&want).map(|(a, b)| a - b).collect();
        assert!(norm_of(&err) / norm_of(&x.values) < 1e-4, "{views}: {}", norm_of(&err));
        assert!(norm_of(&want) > 0.1 * norm_of(&x.values));
        let ax = norm_of(&p.apply(&x.values));
        assert!(norm_of(&p.apply(&d.x_null.values)) / ax < 1e-4);
        let sum: Vec<f64> = d.x_range.values.iter().zip(&d.x_null.values).map(|(a, b)| a + b).collect();
        assert!(rel(&sum, &x.values) < 1e-12);
        assert!((0.0..=1.0).contains(&d.null_energy_fraction));
    }
}

fn norm_of(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn row_space_has_no_null_part() {
    let p = projector(8, 10);
    let y = randn(p.range_len(), &mut rng(5));
    let x = ImageGrid::from_values(p.shape(), p.adjoint(&y)).unwrap();
    let d = null_space_component_with(&p, &x, patient()).unwrap();
    assert!(d.null_energy_fraction < 1e-6, "{}", d.null_energy_fraction);
}

#[test]
fn zero_image_and_iteration_cap() {
    let p = projector(8, 10);
    let zero = ImageGrid::zeros(p.shape());
    let d = null_space_component_with(&p, &zero, LandweberSettings::default()).unwrap();
    assert!(d.x_null.values.iter().all(|v| *v == 0.0));
    assert_eq!(d.iterations_used, 0);
    assert_eq!(d.null_energy_fraction, 0.0);

    let x = ImageGrid::from_values(p.shape(), randn(64, &mut rng(6))).unwrap();
    let capped = LandweberSettings {
        max_iterations: 3,
        ..Default::default()
    };
    match null_space_component_with(&p, &x, capped) {
        Err(ctdiff::Error::LandweberNotConverged { iterations, residual }) => {
            assert_eq!(iterations, 3);
            assert!(residual > 0.0);
        }
        other => panic!("unexpected {other:?}"),
    }
    let geom = p.geometry().clone();
    assert!(null_space_component(&x, &geom, LandweberSettings { alpha: Some(-1.0), ..Default::default() }).is_err());
}

#[test]
fn psnr_closed_form_and_sentinel() {
    let reference = generate_phantom(&PhantomKind::ModifiedSheppLogan, 16).unwrap();
    let (lo, hi) = reference.min_max();
    let d = 0.05;
    let shifted = reference.map(|v| v + d);
    let got = psnr(&shifted, &reference).unwrap();
    assert!((got - 20.0 * ((hi - lo) / d).log10()).abs() < 1e-9);
    assert_eq!(psnr(&reference, &reference).unwrap(), PSNR_IDENTICAL);
    assert!(psnr(&reference, &ImageGrid::filled(reference.shape, 1.0)).is_err());
    let other = generate_phantom(&PhantomKind::SheppLogan, 32).unwrap();
    assert!(psnr(&other, &reference).is_err());
}

#[test]
fn psnr_falls_with_noise_amplitude() {
    let reference = generate_phantom(&PhantomKind::SheppLogan, 16).unwrap();
    let noise = randn(256, &mut rng(2));
    let mut last = f64::INFINITY;
    for amp in [1e-3, 1e-2, 0.1, 1.0] {
        let noisy = ImageGrid::from_values(
            reference.shape,
            reference.values.iter().zip(&noise).map(|(a, e)| a + amp * e).collect(),
        )
        .unwrap();
        let v = psnr(&noisy, &reference).unwrap();
        assert!(v < last);
        last = v;
    }
}

#[test]
fn ssim_of_shifted_image() {
    // For a constant shift, variances and covariance agree in every window, so
    // only the luminance term remains.
    let reference = generate_phantom(&PhantomKind::ModifiedSheppLogan, 16).unwrap();
    assert!((ssim(&reference, &reference).unwrap() - 1.0).abs() < 1e-12);
    let d = 0.1;
    let shifted = reference.map(|v| v + d);
    let (lo, hi) = reference.min_max();
    let c1 = (0.01 * (hi - lo)).powi(2);
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let mut total = 0.0;
    for j0 in 0..=5 {
        for i0 in 0..=5 {
            let mut m = 0.0;
            for dj in 0..11 {
                for di in 0..11 {
                    m += g[dj] * g[di] / (gs * gs) * reference.get(i0 + di, j0 + dj);
                }
            }
            total += (2.0 * m * (m + d) + c1) / (m * m + (m + d) * (m + d) + c1);
        }
    }
    assert!((ssim(&shifted, &reference).unwrap() - total / 36.0).abs() < 1e-12);
}

#[test]
fn metrics_report_fields() {
    let reference = generate_phantom(&PhantomKind::ModifiedSheppLogan, 16).unwrap();
    let p = projector(16, 20);
    let clean = p.forward(&reference).unwrap();
    let noisy = clean.with_values(clean.values.iter().zip(randn(clean.values.len(), &mut rng(1))).map(|(a, e)| a + 0.01 * e).collect());
    let m = compute_metrics(&reference, &reference, &noisy).unwrap();
    assert_eq!(m.ssim, 1.0);
    assert!((m.data_fit - rel_abs(&clean.values, &noisy.values)).abs() < 1e-12);
    let m = compute_metrics(&reference, &reference, &clean).unwrap();
    assert!(m.data_fit < 1e-12);
    let (lo, hi) = reference.min_max();
    assert_eq!(m.value_range_used, hi - lo);
}

fn rel_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn uncertainty_closed_forms() {
    let shape = ImageShape::new(4, 3);
    let a = ImageGrid::from_values(shape, (0..12).map(|k| k as f64).collect()).unwrap();
    let (mean, std) = uncertainty_map(&[a.clone(), a.clone(), a.clone()]).unwrap();
    assert_eq!(mean, a);
    assert!(std.values.iter().all(|v| *v == 0.0));
    let c = 0.75;
    let (_, std) = uncertainty_map(&[a.clone(), a.map(|v| v + 2.0 * c)]).unwrap();
    assert!(std.values.iter().all(|v| (v - c).abs() < 1e-12));
    assert!(uncertainty_map(std::slice::from_ref(&a)).is_err());
    let other = ImageGrid::zeros(ImageShape::new(3, 4));
    assert!(uncertainty_map(&[a, other]).is_err());
}

#[test]
fn posterior_samples_give_marginal_spread() {
    // Exact posterior draws by perturbing the prior mean and the data, then
    // solving for the posterior mean.
    let n = 16;
    let p = projector(n, 30);
    let mut g = rng(21);
    let mean = randn(n * n, &mut g).iter().map(|v| 0.2 * v).collect::<Vec<_>>();
    let prior = GaussianPrior::isotropic(mean.clone(), 0.3).unwrap();
    let noise_var = 0.5;
    let y0 = p.apply(&randn(n * n, &mut g));
    let y = Sinogram::from_values(p.geometry().clone(), y0.clone()).unwrap();
    let post = analytic_posterior(&prior, &p, &y, noise_var).unwrap();
    let samples: Vec<ImageGrid> = (0..10)
        .map(|_| {
            let m: Vec<f64> = mean.iter().zip(randn(n * n, &mut g)).map(|(a, e)| a + 0.3f64.sqrt() * e).collect();
            let yp: Vec<f64> = y0.iter().zip(randn(y0.len(), &mut g)).map(|(a, e)| a + noise_var.sqrt() * e).collect();
            let pr = GaussianPrior::isotropic(m, 0.3).unwrap();
            let ys = Sinogram::from_values(p.geometry().clone(), yp).unwrap();
            analytic_posterior(&pr, &p, &ys, noise_var).unwrap().mean
        })
        .collect();
    let (_, std) = uncertainty_map(&samples).unwrap();
    let want: f64 = post.marginal_variances().unwrap().iter().map(|v| v.sqrt()).sum::<f64>() / (n * n) as f64;
    let got: f64 = std.values.iter().sum::<f64>() / (n * n) as f64;
    assert!((got - want).abs() < 0.25 * want, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_never_exceeds_one(seed in 0u64..1000, amp in 0.0f64..2.0) {
        let reference = ImageGrid::from_values(ImageShape::square(12), randn(144, &mut rng(seed))).unwrap();
        let other = ImageGrid::from_values(
            reference.shape,
            reference.values.iter().zip(randn(144, &mut rng(seed + 1))).map(|(a, e)| a + amp * e).collect(),
        ).unwrap();
        let s = ssim(&other, &reference).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }
}
