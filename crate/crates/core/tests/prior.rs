mod common;

use common::*;
use ctdiff::operator::{ImageGrid, ImageShape, Sinogram};
use ctdiff::prior::*;
use proptest::prelude::*;
use rand::Rng;

fn schedule() -> NoiseSchedule {
    NoiseSchedule::default()
}

fn gaussian(n: usize, seed: u64) -> GaussianPrior {
    let mut r = rng(seed);
    let mean = randn(n, &mut r);
    let var = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
    GaussianPrior::new(mean, var).unwrap()
}

fn mixture(n: usize, seed: u64) -> GaussianMixture {
    let mut r = rng(seed);
    let comps = [0.3, 0.5, 0.2]
        .iter()
        .map(|&w| MixtureComponent {
            weight: w,
            mean: randn(n, &mut r).iter().map(|v| 1.5 * v).collect(),
            variance: (0..n).map(|_| r.random_range(0.1..1.0)).collect(),
        })
        .collect();
    GaussianMixture::new(comps).unwrap()
}

#[test]
fn gaussian_score_zero_at_scaled_mean() {
    let s = schedule();
    let g = GaussianPrior::isotropic(vec![0.3, -0.2, 1.1, 0.0], 0.5).unwrap();
    for t in [1, 10, 500, 1000] {
        let x: Vec<f64> = g.mean.iter().map(|m| s.alpha_bar(t).sqrt() * m).collect();
        let sc = ScorePrior::Gaussian(g.clone()).score(&x, t, &s).unwrap();
        assert!(sc.iter().all(|v| v.abs() < 1e-15));
    }
}

#[test]
fn unit_variance_score_is_negative_offset() {
    let s = schedule();
    let g = GaussianPrior::isotropic(vec![0.5, -1.0, 2.0, 0.25], 1.0).unwrap();
    let x = [0.1, 0.2, -0.3, 0.4];
    for t in [1, 77, 999] {
        let sq = s.alpha_bar(t).sqrt();
        let sc = ScorePrior::Gaussian(g.clone()).score(&x, t, &s).unwrap();
        for i in 0..4 {
            let want = -(x[i] - sq * g.mean[i]);
            assert!((sc[i] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn scores_match_log_density_differences() {
    let s = schedule();
    let mut r = rng(3);
    for prior in [
        ScorePrior::Gaussian(gaussian(4, 1)),
        ScorePrior::Mixture(mixture(4, 2)),
    ] {
        for _ in 0..20 {
            let t = r.random_range(1..=1000);
            let x = randn(4, &mut r);
            let sc = prior.score(&x, t, &s).unwrap();
            let fd = fd_gradient(|z| prior.log_density(z, t, &s).unwrap(), &x, 1e-5);
            assert!(rel(&sc, &fd) < 1e-6, "t={t} {sc:?} {fd:?}");
        }
    }
}

#[test]
fn single_component_mixture_matches_gaussian() {
    let s = schedule();
    let g = gaussian(6, 9);
    let m = GaussianMixture::new(vec![MixtureComponent {
        weight: 1.0,
        mean: g.mean.clone(),
        variance: g.variance.clone(),
    }])
    .unwrap();
    let x = randn(6, &mut rng(4));
    let a = ScorePrior::Gaussian(g).score(&x, 300, &s).unwrap();
    let b = ScorePrior::Mixture(m).score(&x, 300, &s).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() <= 1e-12);
    }
}

#[test]
fn symmetric_mixture_midpoint_has_zero_score_on_axis() {
    let s = schedule();
    let m = GaussianMixture::new(vec![
        MixtureComponent { weight: 0.5, mean: vec![2.0, 0.0], variance: vec![0.3, 0.3] },
        MixtureComponent { weight: 0.5, mean: vec![-2.0, 0.0], variance: vec![0.3, 0.3] },
    ])
    .unwrap();
    let sc = ScorePrior::Mixture(m).score(&[0.0, 0.7], 200, &s).unwrap();
    assert!(sc[0].abs() < 1e-15);
}

#[test]
fn mixture_rejects_bad_weights() {
    let c = |w| MixtureComponent { weight: w, mean: vec![0.0], variance: vec![1.0] };
    assert!(GaussianMixture::new(vec![c(0.5), c(0.4)]).is_err());
    assert!(GaussianMixture::new(vec![c(1.2), c(-0.2)]).is_err());
    assert!(GaussianMixture::new(vec![]).is_err());
}

#[test]
fn tweedie_is_gaussian_conditional_mean() {
    let s = schedule();
    let g = GaussianPrior::isotropic(vec![0.4, -0.7, 1.3], 1.0).unwrap();
    let shape = ImageShape::new(3, 1);
    let x = ImageGrid::from_values(shape, vec![0.9, 0.1, -0.5]).unwrap();
    for t in [1, 250, 1000] {
        let ab = s.alpha_bar(t);
        let sc = ScorePrior::Gaussian(g.clone()).score(&x.values, t, &s).unwrap();
        let est = tweedie_estimate(&x, &sc, t, &s).unwrap();
        for i in 0..3 {
            let want = ab.sqrt() * x.values[i] + (1.0 - ab) * g.mean[i];
            assert!((est.values[i] - want).abs() < 1e-13);
        }
    }
}

#[test]
fn tweedie_near_zero_noise_returns_input() {
    let s = linear_beta_schedule(10, 1e-10, 1e-10).unwrap();
    let g = GaussianPrior::isotropic(vec![5.0, -5.0], 0.1).unwrap();
    let x = ImageGrid::from_values(ImageShape::new(2, 1), vec![0.3, 0.2]).unwrap();
    let sc = ScorePrior::Gaussian(g).score(&x.values, 1, &s).unwrap();
    let est = tweedie_estimate(&x, &sc, 1, &s).unwrap();
    assert!(rel(&est.values, &x.values) < 1e-7);
}

#[test]
fn tweedie_matches_quadrature_for_mixture() {
    let s = schedule();
    let m = GaussianMixture::new(vec![
        MixtureComponent { weight: 0.35, mean: vec![-1.2], variance: vec![0.25] },
        MixtureComponent { weight: 0.65, mean: vec![0.8], variance: vec![0.6] },
    ])
    .unwrap();
    let prior_pdf = |x0: f64| {
        m.components()
            .iter()
            .map(|c| {
                let v = c.variance[0];
                c.weight * (-(x0 - c.mean[0]).powi(2) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
            })
            .sum::<f64>()
    };
    for (t, xt) in [(50, 0.4), (400, -0.9), (900, 1.7)] {
        let ab = s.alpha_bar(t);
        let (mut num, mut den) = (0.0, 0.0);
        let (lo, hi, n) = (-12.0, 12.0, 400_000);
        let h = (hi - lo) / n as f64;
        for k in 0..=n {
            let x0 = lo + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let lik = (-(xt - ab.sqrt() * x0).powi(2) / (2.0 * (1.0 - ab))).exp();
            let p = w * prior_pdf(x0) * lik;
            num += x0 * p;
            den += p;
        }
        let x = ImageGrid::from_values(ImageShape::new(1, 1), vec![xt]).unwrap();
        let sc = ScorePrior::Mixture(m.clone()).score(&x.values, t, &s).unwrap();
        let est = tweedie_estimate(&x, &sc, t, &s).unwrap();
        assert!((est.values[0] - num / den).abs() < 1e-6, "t={t}");
    }
}

#[test]
fn ddpm_estimator_cases() {
    let s = schedule();
    let shape = ImageShape::new(4, 1);
    let x0 = [0.5, -0.25, 1.0, 0.0];
    let eps = [0.3, -1.1, 0.7, 2.0];
    let t = 321;
    let ab = s.alpha_bar(t);
    let xt: Vec<f64> = x0.iter().zip(&eps).map(|(a, e)| ab.sqrt() * a + (1.0 - ab).sqrt() * e).collect();
    let xt = ImageGrid::from_values(shape, xt).unwrap();

    let zero = ddpm_estimate(&xt, &[0.0; 4], t, &s).unwrap();
    for i in 0..4 {
        assert_eq!(zero.values[i], xt.values[i] / ab.sqrt());
    }
    let rec = ddpm_estimate(&xt, &eps, t, &s).unwrap();
    assert!(rel(&rec.values, &x0) < 1e-12);

    let prior = ScorePrior::Mixture(mixture(4, 5));
    let sc = prior.score(&xt.values, t, &s).unwrap();
    let a = ddpm_estimate(&xt, &eps_from_score(&sc, t, &s), t, &s).unwrap();
    let b = tweedie_estimate(&xt, &sc, t, &s).unwrap();
    for i in 0..4 {
        assert!((a.values[i] - b.values[i]).abs() < 1e-12);
    }
    assert!(ddpm_estimate(&xt, &eps, 0, &s).is_err());
}

#[test]
fn denoise_vjp_matches_finite_differences() {
    let s = schedule();
    let mut r = rng(11);
    for prior in [
        ScorePrior::Gaussian(gaussian(5, 6)),
        ScorePrior::Mixture(mixture(5, 7)),
    ] {
        for t in [20, 300, 800] {
            let x = randn(5, &mut r);
            let v = randn(5, &mut r);
            let (g, mode) = prior.denoise_vjp(&x, t, &s, &v, JacobianMode::Exact).unwrap();
            assert_eq!(mode, JacobianMode::Exact);
            let fd = fd_gradient(
                |z| {
                    let d = prior.denoise(z, t, &s).unwrap();
                    d.iter().zip(&v).map(|(a, b)| a * b).sum()
                },
                &x,
                1e-5,
            );
            assert!(rel(&g, &fd) < 1e-6, "t={t}");
        }
    }
}

#[test]
fn identity_mode_is_passthrough() {
    let s = schedule();
    let prior = ScorePrior::external(3, |x, _| x.iter().map(|v| -v).collect());
    let v = [1.0, 2.0, 3.0];
    let (g, mode) = prior.denoise_vjp(&[0.0; 3], 5, &s, &v, JacobianMode::Exact).unwrap();
    assert_eq!(mode, JacobianMode::Identity);
    assert_eq!(g, v);
    assert!(prior.log_density(&[0.0; 3], 5, &s).is_none());
}

fn posterior_problem(n: usize, views: usize) -> (ctdiff::operator::Projector, GaussianPrior, Sinogram) {
    let p = projector(n, views);
    let prior = gaussian(n * n, 21);
    let mut r = rng(22);
    let y = Sinogram::from_values(p.geometry().clone(), randn(p.geometry().len(), &mut r)).unwrap();
    (p, prior, y)
}

#[test]
fn posterior_matches_dense_solve() {
    let (p, prior, y) = posterior_problem(8, 12);
    let sigma2 = 0.3;
    let post = analytic_posterior(&prior, &p, &y, sigma2).unwrap();
    let a = dense(&p);
    let mut h = a.transpose() * &a / sigma2;
    let mut rhs = a.transpose() * vec_of(&y.values) / sigma2;
    for i in 0..prior.mean.len() {
        h[(i, i)] += 1.0 / prior.variance[i];
        rhs[i] += prior.mean[i] / prior.variance[i];
    }
    let want = h.clone().cholesky().unwrap().solve(&rhs);
    assert!(rel(&post.mean.values, want.as_slice()) < 1e-8);

    let cov = h.try_inverse().unwrap();
    let var = post.marginal_variances().unwrap();
    for i in 0..var.len() {
        assert!((var[i] - cov[(i, i)]).abs() < 1e-8 * cov[(i, i)]);
    }
}

#[test]
fn posterior_limits() {
    let (p, prior, y) = posterior_problem(8, 10);
    let vague = analytic_posterior(&prior, &p, &y, 1e12).unwrap();
    assert!(rel(&vague.mean.values, &prior.mean) < 1e-8);

    let clean = p.forward(&ImageGrid::from_values(p.shape(), prior.mean.clone()).unwrap()).unwrap();
    let post = analytic_posterior(&prior, &p, &clean, 0.01).unwrap();
    assert!(rel(&post.mean.values, &prior.mean) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schedule_is_monotone_and_reconstructable(
        steps in 2usize..400,
        lo in 1e-5f64..0.05,
        span in 0.0f64..0.2,
    ) {
        let hi = (lo + span).min(0.5);
        let s = linear_beta_schedule(steps, lo, hi).unwrap();
        for t in 1..=steps {
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            prop_assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * (1.0 - s.beta(t)));
        }
        let rebuilt = NoiseSchedule::from_betas(s.betas().to_vec()).unwrap();
        prop_assert_eq!(rebuilt, s);
    }

    #[test]
    fn ddpm_of_converted_eps_is_tweedie(
        seed in 0u64..1000,
        t in 1usize..=1000,
    ) {
        let s = schedule();
        let mut r = rng(seed);
        let x = ImageGrid::from_values(ImageShape::new(3, 2), randn(6, &mut r)).unwrap();
        let sc = randn(6, &mut r);
        let a = ddpm_estimate(&x, &eps_from_score(&sc, t, &s), t, &s).unwrap();
        let b = tweedie_estimate(&x, &sc, t, &s).unwrap();
        for i in 0..6 {
            prop_assert!((a.values[i] - b.values[i]).abs() <= 1e-9 * (1.0 + b.values[i].abs()));
        }
    }
}
