use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::problem::{Pinv, Problem};
use super::spec::{DdsWeights, GuidanceSpec, PinvKind, Strategy, VarBayesParams};
use super::step::{step_from_estimate, timesteps};
use super::trajectory::{Reconstruction, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm, CgSettings};
use crate::operator::{cg_solve_regularized, ImageGrid, LinearOperator};
use crate::prior::{eps_from_score, tweedie, JacobianMode, ScorePrior};

/// A scalar objective, its gradient, and the Jacobian mode used to get it.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub mode: JacobianMode,
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `∇_{x_t} ∥A x̂₀(x_t) − y∥²`
pub fn dc_gradient(p: &Problem, x_t: &[f64], t: usize, mode: JacobianMode) -> Result<Gradient> {
    let x0 = p.prior.denoise(x_t, t, p.schedule)?;
    let r = p.residual(&x0);
    let back = p.projector.adjoint(&r);
    let (g, mode) = p.prior.denoise_vjp(x_t, t, p.schedule, &back, mode)?;
    Ok(Gradient {
        loss: dot(&r, &r),
        grad: g.into_iter().map(|v| 2.0 * v).collect(),
        mode,
    })
}

/// `x_t − η ∇_{x_t} ∥A x̂₀(x_t) − y∥²`
pub fn dc_gradient_update(
    p: &Problem,
    x_t: &[f64],
    t: usize,
    eta: f64,
    mode: JacobianMode,
) -> Result<(Vec<f64>, JacobianMode)> {
    if eta == 0.0 {
        return Ok((x_t.to_vec(), mode));
    }
    let g = dc_gradient(p, x_t, t, mode)?;
    let mut out = x_t.to_vec();
    axpy(-eta, &g.grad, &mut out);
    Ok((out, g.mode))
}

fn pinv_gradient_with(
    p: &Problem,
    pinv: &Pinv,
    x_t: &[f64],
    t: usize,
    mode: JacobianMode,
) -> Result<Gradient> {
    let x0 = p.prior.denoise(x_t, t, p.schedule)?;
    let e = pinv.apply(&p.residual(&x0));
    let back = p.projector.adjoint(&pinv.apply_transpose(&e));
    let (g, mode) = p.prior.denoise_vjp(x_t, t, p.schedule, &back, mode)?;
    Ok(Gradient {
        loss: dot(&e, &e),
        grad: g.into_iter().map(|v| 2.0 * v).collect(),
        mode,
    })
}

/// `∇_{x_t} ∥A†A x̂₀(x_t) − A†y∥²`
pub fn pseudoinverse_gradient(
    p: &Problem,
    kind: PinvKind,
    x_t: &[f64],
    t: usize,
    mode: JacobianMode,
) -> Result<Gradient> {
    pinv_gradient_with(p, &Pinv::new(kind, p.projector)?, x_t, t, mode)
}

/// Pseudoinverse-guided update of `x_t`. With `single_step`, the correction
/// `√ᾱ_t A†(y − A x̂₀)` is added after the gradient step.
#[allow(clippy::too_many_arguments)]
pub fn pseudoinverse_update(
    p: &Problem,
    x_t: &[f64],
    t: usize,
    eta: f64,
    kind: PinvKind,
    single_step: bool,
    mode: JacobianMode,
) -> Result<Vec<f64>> {
    let pinv = Pinv::new(kind, p.projector)?;
    let mut out = x_t.to_vec();
    if eta > 0.0 {
        let g = pinv_gradient_with(p, &pinv, x_t, t, mode)?;
        axpy(-eta, &g.grad, &mut out);
    }
    if single_step {
        let x0 = p.prior.denoise(x_t, t, p.schedule)?;
        let fix = pinv.apply(&p.residual(&x0));
        axpy(-p.schedule.alpha_bar(t).sqrt(), &fix, &mut out);
    }
    Ok(out)
}

/// `½∥Ax − y∥²` and its gradient `Aᵀ(Ax − y)`.
pub fn data_gradient(p: &Problem, x: &[f64]) -> Gradient {
    let r = p.residual(x);
    Gradient {
        loss: 0.5 * dot(&r, &r),
        grad: p.projector.adjoint(&r),
        mode: JacobianMode::Exact,
    }
}

/// `1.8 / ∥A∥²`
pub fn default_lr(p: &Problem) -> f64 {
    1.8 / p.op_norm_sq()
}

/// `inner_iters` steps of `x ← x − lr·Aᵀ(Ax − y)`. Fails if the data fit
/// rises on two consecutive steps.
pub fn dc_optimization_update(
    p: &Problem,
    x: &[f64],
    inner_iters: usize,
    lr: Option<f64>,
) -> Result<Vec<f64>> {
    if inner_iters == 0 {
        return Err(invalid("inner_iters must be >= 1"));
    }
    let lr = lr.unwrap_or_else(|| default_lr(p));
    let mut x = x.to_vec();
    let mut r = p.residual(&x);
    let mut fit = norm(&r);
    let mut rises = 0;
    for k in 0..inner_iters {
        let g = p.projector.adjoint(&r);
        axpy(-lr, &g, &mut x);
        r = p.residual(&x);
        let next = norm(&r);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("data fit at inner step {k}")));
        }
        if next > fit {
            rises += 1;
            if rises >= 2 {
                return Err(Error::Diverged {
                    iteration: k,
                    reason: format!("data fit rose twice in a row; lower lr (currently {lr:e})"),
                });
            }
        } else {
            rises = 0;
        }
        fit = next;
    }
    Ok(x)
}

/// Weights for the DDS likelihood at the current estimate.
pub fn dds_weight_vector(p: &Problem, weights: &DdsWeights, x0: &[f64]) -> Option<Vec<f64>> {
    match weights {
        DdsWeights::Uniform => None,
        DdsWeights::Fixed(w) => Some(w.clone()),
        DdsWeights::Poisson { absorption } => {
            let ax = p.projector.apply(x0);
            let raw: Vec<f64> = ax.iter().map(|v| (-absorption * v).exp()).collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            Some(raw.into_iter().map(|v| v / mean).collect())
        }
    }
}

/// `γ/2 ∥Ax − y∥²_R + ½∥x − anchor∥²` and its gradient.
pub fn dds_objective(
    p: &Problem,
    x: &[f64],
    anchor: &[f64],
    gamma: f64,
    weights: Option<&[f64]>,
) -> Gradient {
    let mut r = p.residual(x);
    let mut loss = 0.0;
    for (i, ri) in r.iter_mut().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        loss += 0.5 * gamma * w * *ri * *ri;
        *ri *= w;
    }
    let mut grad = p.projector.adjoint(&r);
    for ((g, xi), ai) in grad.iter_mut().zip(x).zip(anchor) {
        *g = gamma * *g + (xi - ai);
        loss += 0.5 * (xi - ai) * (xi - ai);
    }
    Gradient {
        loss,
        grad,
        mode: JacobianMode::Exact,
    }
}

fn dds_solve(p: &Problem, spec: &GuidanceSpec, anchor: &[f64]) -> Result<Vec<f64>> {
    let w = dds_weight_vector(p, &spec.dds_weights, anchor);
    let settings = match spec.dds_cg_iters {
        Some(k) => CgSettings::truncated(k),
        None => CgSettings {
            max_iterations: anchor.len().max(500),
            ..CgSettings::default()
        },
    };
    cg_solve_regularized(p.projector, p.y, anchor, spec.dds_gamma, w.as_deref(), settings)
}

/// The reverse-diffusion loop for None, DcGrad, DcOpt, PseudoInv and DDS.
fn run_chain(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = randn(&mut rng, n);
    let pinv = match spec.strategy {
        Strategy::PseudoInv => Some(Pinv::new(spec.pinv_kind, p.projector)?),
        _ => None,
    };
    if let Some(pinv) = &pinv {
        let b = spec.pinv_blend;
        let start = pinv.apply(p.y);
        for (xi, s) in x.iter_mut().zip(&start) {
            *xi = (1.0 - b) * *xi + b * s;
        }
    }
    let lr = spec.lr.unwrap_or_else(|| match spec.strategy {
        Strategy::DcOpt => default_lr(p),
        _ => 0.0,
    });
    let mut traj = Trajectory::default();
    for (t, t_prev) in timesteps(p.schedule.steps(), spec.steps) {
        let score = p.prior.score(&x, t, p.schedule)?;
        let mut x0 = tweedie(&x, &score, p.schedule.alpha_bar(t));
        let eps = eps_from_score(&score, t, p.schedule);
        match spec.strategy {
            Strategy::DcOpt => x0 = dc_optimization_update(p, &x0, spec.inner_iters, Some(lr))?,
            Strategy::Dds => x0 = dds_solve(p, spec, &x0)?,
            _ => {}
        }
        let mut next = step_from_estimate(
            &x, &x0, &eps, t, t_prev, p.schedule, spec.sampler, spec.ddim_eta, &mut rng,
        );
        match (spec.strategy, &pinv) {
            (Strategy::DcGrad, _) if spec.eta > 0.0 => {
                let g = dc_gradient(p, &x, t, spec.jacobian)?;
                axpy(-spec.eta, &g.grad, &mut next);
                traj.jacobian = Some(g.mode);
            }
            (Strategy::PseudoInv, Some(pinv)) => {
                if spec.eta > 0.0 {
                    let g = pinv_gradient_with(p, pinv, &x, t, spec.jacobian)?;
                    axpy(-spec.eta, &g.grad, &mut next);
                    traj.jacobian = Some(g.mode);
                }
                if spec.single_step {
                    let fix = pinv.apply(&p.residual(&x0));
                    axpy(-p.schedule.alpha_bar(t_prev).sqrt(), &fix, &mut next);
                }
            }
            _ => {}
        }
        ensure_finite(&next, "sampler state")?;
        let snap = spec.record_snapshots.then_some((x.as_slice(), x0.as_slice()));
        traj.push(t, p.data_fit(&x0), snap);
        x = next;
    }
    Ok(Reconstruction {
        image: ImageGrid::from_values(p.projector.shape(), x)?,
        trajectory: traj,
    })
}

/// DDIM chain whose clean estimates are replaced by the DDS proximal solve.
pub fn dds_sample(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    spec.validate()?;
    run_chain(
        p,
        &GuidanceSpec {
            strategy: Strategy::Dds,
            ..spec.clone()
        },
    )
}

fn start_point(prior: &ScorePrior, n: usize) -> Vec<f64> {
    prior.mean().unwrap_or_else(|| vec![0.0; n])
}

/// Alternates a denoising pull (re-noise to level `t`, denoise, blend with
/// weight `pnp_weight`) with `inner_iters` data-consistency steps, sweeping
/// `t` downward. Starts from the prior mean.
pub fn pnp_reconstruct(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    spec.validate()?;
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lr = spec.lr.unwrap_or_else(|| default_lr(p));
    let w = spec.pnp_weight;
    let mut x = start_point(p.prior, n);
    let mut traj = Trajectory::default();
    for (t, _) in timesteps(p.schedule.steps(), spec.steps) {
        let before = spec.record_snapshots.then(|| x.clone());
        if w > 0.0 {
            let ab = p.schedule.alpha_bar(t);
            let z: Vec<f64> = x
                .iter()
                .map(|xi| ab.sqrt() * xi + (1.0 - ab).sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let d = p.prior.denoise(&z, t, p.schedule)?;
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi = (1.0 - w) * *xi + w * di;
            }
        }
        x = dc_optimization_update(p, &x, spec.inner_iters, Some(lr))?;
        ensure_finite(&x, "PnP iterate")?;
        let snap = before.as_deref().map(|b| (b, x.as_slice()));
        traj.push(t, p.data_fit(&x), snap);
    }
    Ok(Reconstruction {
        image: ImageGrid::from_values(p.projector.shape(), x)?,
        trajectory: traj,
    })
}

/// Weight `√ᾱ_t / √(1−ᾱ_t)` applied to the score residual at step `t`.
pub fn varbayes_weight(ab: f64) -> f64 {
    (ab / (1.0 - ab)).sqrt()
}

#[derive(Debug, Clone)]
pub struct VarBayesGradient {
    /// `2λ_d Aᵀ(Am − y) + λ_s w_t (ε̂ − ε)`
    pub grad: Vec<f64>,
    /// `λ_d ∥Am − y∥²`
    pub data_loss: f64,
    /// `ε̂(√ᾱ m + √(1−ᾱ) ε) − ε`, treated as a constant.
    pub score_residual: Vec<f64>,
    pub score_weight: f64,
}

/// Gradient of the variational objective at `m` for a single noise draw.
/// The score residual is held constant, so the gradient is that of
/// `λ_d∥Am − y∥² + λ_s w_t ⟨ε̂ − ε, m⟩`.
pub fn varbayes_gradient(
    p: &Problem,
    m: &[f64],
    t: usize,
    eps: &[f64],
    params: &VarBayesParams,
) -> Result<VarBayesGradient> {
    let ab = p.schedule.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let xt: Vec<f64> = m.iter().zip(eps).map(|(mi, e)| sa * mi + sn * e).collect();
    let score = p.prior.score(&xt, t, p.schedule)?;
    let resid: Vec<f64> = eps_from_score(&score, t, p.schedule)
        .iter()
        .zip(eps)
        .map(|(h, e)| h - e)
        .collect();
    let r = p.residual(m);
    let mut grad = p.projector.adjoint(&r);
    let w = varbayes_weight(ab);
    for (g, s) in grad.iter_mut().zip(&resid) {
        *g = 2.0 * params.lambda_data * *g + params.lambda_score * w * s;
    }
    Ok(VarBayesGradient {
        grad,
        data_loss: params.lambda_data * dot(&r, &r),
        score_residual: resid,
        score_weight: w,
    })
}

/// Upper bound on the curvature of the expected score term.
fn prior_curvature(prior: &ScorePrior) -> f64 {
    let min_var = match prior {
        ScorePrior::Gaussian(g) => g.variance.iter().cloned().fold(f64::INFINITY, f64::min),
        ScorePrior::Mixture(m) => m
            .components()
            .iter()
            .flat_map(|c| c.variance.iter().cloned())
            .fold(f64::INFINITY, f64::min),
        ScorePrior::External { .. } => 1.0,
    };
    (1.0 / min_var).max(1.0)
}

/// Optimizes the variational mean by accelerated gradient descent with
/// adaptive restart, sweeping `t` downward over `steps` stages of
/// `inner_iters` iterations. Each iteration averages the gradient over an
/// antithetic pair `±ε`. Starts from the pseudoinverse `A†y`.
pub fn varbayes_reconstruct(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    spec.validate()?;
    let params = &spec.varbayes;
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lr = params.lr.unwrap_or_else(|| {
        1.0 / (2.0 * params.lambda_data * p.op_norm_sq()
            + params.lambda_score * prior_curvature(p.prior))
    });
    let mut m = Pinv::new(spec.pinv_kind, p.projector)?.apply(p.y);
    let mut m_prev = m.clone();
    let mut momentum_k = 0usize;
    let mut eps = randn(&mut rng, n);
    let mut traj = Trajectory::default();
    for (t, _) in timesteps(p.schedule.steps(), spec.steps) {
        let before = spec.record_snapshots.then(|| m.clone());
        for _ in 0..spec.inner_iters {
            let fresh = randn(&mut rng, n);
            match params.hybrid {
                Some(c) => {
                    let s = (1.0 - c * c).sqrt();
                    for (e, f) in eps.iter_mut().zip(&fresh) {
                        *e = c * *e + s * f;
                    }
                }
                None => eps = fresh,
            }
            let beta = momentum_k as f64 / (momentum_k as f64 + 3.0);
            let look: Vec<f64> = m
                .iter()
                .zip(&m_prev)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
            let neg: Vec<f64> = eps.iter().map(|e| -e).collect();
            let g1 = varbayes_gradient(p, &look, t, &eps, params)?.grad;
            let g2 = varbayes_gradient(p, &look, t, &neg, params)?.grad;
            let g: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 0.5 * (a + b)).collect();
            let next: Vec<f64> = look.iter().zip(&g).map(|(l, gi)| l - lr * gi).collect();
            ensure_finite(&next, "variational mean")?;
            let step: Vec<f64> = next.iter().zip(&m).map(|(a, b)| a - b).collect();
            momentum_k = if dot(&g, &step) > 0.0 { 0 } else { momentum_k + 1 };
            m_prev = std::mem::replace(&mut m, next);
        }
        let snap = before.as_deref().map(|b| (b, m.as_slice()));
        traj.push(t, p.data_fit(&m), snap);
    }
    Ok(Reconstruction {
        image: ImageGrid::from_values(p.projector.shape(), m)?,
        trajectory: traj,
    })
}

/// Coefficients `(c₁, c₂)` of the deterministic step `x' = c₁ x̂₀(x) + c₂ x`.
fn ddim_coefficients(ab: f64, ap: f64) -> (f64, f64) {
    let c2 = ((1.0 - ap) / (1.0 - ab)).sqrt();
    (ap.sqrt() - c2 * ab.sqrt(), c2)
}

/// `k`-step deterministic DDIM chain from `T` applied to `z`.
pub fn ddim_chain(p: &Problem, z: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut x = z.to_vec();
    for (t, t_prev) in timesteps(p.schedule.steps(), k) {
        let (c1, c2) = ddim_coefficients(p.schedule.alpha_bar(t), p.schedule.alpha_bar(t_prev));
        let x0 = p.prior.denoise(&x, t, p.schedule)?;
        x = x0.iter().zip(&x).map(|(a, b)| c1 * a + c2 * b).collect();
    }
    Ok(x)
}

/// `∇_z ∥A·Chain_k(z) − y∥²` by reverse-mode accumulation through the chain.
pub fn dmplug_gradient(p: &Problem, z: &[f64], k: usize, mode: JacobianMode) -> Result<Gradient> {
    let steps = timesteps(p.schedule.steps(), k);
    let mut states = Vec::with_capacity(steps.len());
    let mut x = z.to_vec();
    for &(t, t_prev) in &steps {
        let (c1, c2) = ddim_coefficients(p.schedule.alpha_bar(t), p.schedule.alpha_bar(t_prev));
        let x0 = p.prior.denoise(&x, t, p.schedule)?;
        let next = x0.iter().zip(&x).map(|(a, b)| c1 * a + c2 * b).collect();
        states.push(std::mem::replace(&mut x, next));
    }
    let r = p.residual(&x);
    let mut v: Vec<f64> = p.projector.adjoint(&r).into_iter().map(|g| 2.0 * g).collect();
    let mut used = mode;
    for (&(t, t_prev), xs) in steps.iter().zip(&states).rev() {
        let (c1, c2) = ddim_coefficients(p.schedule.alpha_bar(t), p.schedule.alpha_bar(t_prev));
        let (jv, m) = p.prior.denoise_vjp(xs, t, p.schedule, &v, mode)?;
        used = m;
        v = jv.iter().zip(&v).map(|(a, b)| c1 * a + c2 * b).collect();
    }
    Ok(Gradient {
        loss: dot(&r, &r),
        grad: v,
        mode: used,
    })
}

/// Result of [`dmplug_optimize`].
#[derive(Debug, Clone)]
pub struct DmPlugOutcome {
    pub image: Vec<f64>,
    pub seed_latent: Vec<f64>,
    /// Loss after each accepted step, starting with the initial loss.
    pub losses: Vec<f64>,
    pub mode: JacobianMode,
}

/// Gradient descent on the chain seed with a monitored step: a step that
/// raises the loss is retried at half the rate, an accepted step grows the
/// rate by 1.2.
pub fn dmplug_optimize(
    p: &Problem,
    z0: &[f64],
    k: usize,
    iterations: usize,
    lr: f64,
    mode: JacobianMode,
) -> Result<DmPlugOutcome> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid("lr must be positive"));
    }
    let mut z = z0.to_vec();
    let mut g = dmplug_gradient(p, &z, k, mode)?;
    let mut losses = vec![g.loss];
    let mut lr = lr;
    'outer: for _ in 0..iterations {
        loop {
            let trial: Vec<f64> = z.iter().zip(&g.grad).map(|(a, b)| a - lr * b).collect();
            let tg = dmplug_gradient(p, &trial, k, mode)?;
            if tg.loss.is_finite() && tg.loss <= g.loss {
                z = trial;
                g = tg;
                losses.push(g.loss);
                lr *= 1.2;
                break;
            }
            lr *= 0.5;
            if lr < 1e-300 || g.loss == 0.0 {
                break 'outer;
            }
        }
    }
    Ok(DmPlugOutcome {
        image: ddim_chain(p, &z, k)?,
        seed_latent: z,
        losses,
        mode: g.mode,
    })
}

/// Optimizes the seed of a `dmplug_chain`-step DDIM chain for data fit,
/// starting from seeded standard-normal noise. One trajectory record per
/// accepted iteration, all at the chain's starting step.
pub fn dmplug_reconstruct(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z0 = randn(&mut rng, p.len());
    let lr = spec.lr.unwrap_or_else(|| 1.0 / p.op_norm_sq());
    let out = dmplug_optimize(p, &z0, spec.dmplug_chain, spec.inner_iters, lr, spec.jacobian)?;
    let start = p.schedule.steps();
    let mut traj = Trajectory {
        jacobian: Some(out.mode),
        ..Trajectory::default()
    };
    for loss in &out.losses[1..] {
        traj.push(start, loss.sqrt(), None);
    }
    Ok(Reconstruction {
        image: ImageGrid::from_values(p.projector.shape(), out.image)?,
        trajectory: traj,
    })
}

/// Runs the strategy named in `spec`.
pub fn sample_reconstruct(p: &Problem, spec: &GuidanceSpec) -> Result<Reconstruction> {
    spec.validate()?;
    match spec.strategy {
        Strategy::PnP => pnp_reconstruct(p, spec),
        Strategy::VarBayes => varbayes_reconstruct(p, spec),
        Strategy::DmPlug => dmplug_reconstruct(p, spec),
        _ => run_chain(p, spec),
    }
}
