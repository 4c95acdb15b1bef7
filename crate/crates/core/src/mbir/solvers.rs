use crate::error::{invalid, Result};
use crate::linalg::{conjugate_gradient, dot, norm, sub, CgSettings};
use crate::operator::{spectral_norm_sq, ImageGrid, ImageShape, LinearOperator, Projector, Sinogram};

use super::tv::{divergence, gradient, tv_prox_values, tv_values};

/// Settings shared by the TV-regularized solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSpec {
    pub lambda: f64,
    pub outer_iters: usize,
    /// Dual iterations per proximal step (FISTA only).
    pub prox_iters: usize,
    pub nonneg: bool,
    /// ADMM penalty (initial value when `adaptive_rho` is set).
    pub rho: f64,
    /// Rebalance `rho` when the primal and dual residuals differ by more than 10x.
    pub adaptive_rho: bool,
}

impl TvSpec {
    pub fn fista() -> Self {
        Self {
            lambda: 1e-3,
            outer_iters: 200,
            prox_iters: 100,
            nonneg: false,
            rho: 1.0,
            adaptive_rho: false,
        }
    }

    pub fn admm() -> Self {
        Self {
            lambda: 1e-2,
            ..Self::fista()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be finite and >= 0"));
        }
        if self.outer_iters == 0 || self.prox_iters == 0 {
            return Err(invalid("iteration counts must be >= 1"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho must be positive"));
        }
        Ok(())
    }
}

/// Reconstruction plus per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct MbirOutcome {
    pub image: ImageGrid,
    /// `½∥Ax − y∥² + λ TV(x)` after each outer iteration.
    pub objective: Vec<f64>,
    /// `∥Ax − y∥` after each outer iteration.
    pub data_fit: Vec<f64>,
    /// `∥∇x − z∥` after each ADMM iteration; empty for FISTA.
    pub primal_residual: Vec<f64>,
}

fn operator_for(sino: &Sinogram, shape: ImageShape) -> Result<Projector> {
    Projector::new(shape, sino.geometry.clone())
}

pub fn fista_tv(sino: &Sinogram, shape: ImageShape, spec: &TvSpec) -> Result<MbirOutcome> {
    let projector = operator_for(sino, shape)?;
    fista_tv_with(&projector, &sino.values, spec, None)
}

/// Monotone FISTA on `½∥Ax − y∥² + λ TV(x)` with step `1/L`, `L = λ_max(AᵀA)`.
/// A candidate that raises the objective is not accepted as the iterate but
/// still steers the momentum, which keeps the objective non-increasing.
pub fn fista_tv_with(
    projector: &Projector,
    y: &[f64],
    spec: &TvSpec,
    init: Option<&[f64]>,
) -> Result<MbirOutcome> {
    spec.validate()?;
    let shape = projector.shape();
    let lip = spectral_norm_sq(projector, 100)?;
    let n = shape.len();
    let objective = |ax: &[f64], x: &[f64]| {
        let r = sub(ax, y);
        (0.5 * dot(&r, &r) + spec.lambda * tv_values(shape, x), norm(&r))
    };
    let mut x = init.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ax = projector.apply(&x);
    let (mut f, _) = objective(&ax, &x);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut out = MbirOutcome {
        image: ImageGrid::zeros(shape),
        objective: Vec::with_capacity(spec.outer_iters),
        data_fit: Vec::with_capacity(spec.outer_iters),
        primal_residual: Vec::new(),
    };
    for _ in 0..spec.outer_iters {
        let r = sub(&projector.apply(&z), y);
        let g = projector.adjoint(&r);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let mut u = tv_prox_values(shape, &step, spec.lambda / lip, spec.prox_iters);
        if spec.nonneg {
            u.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let au = projector.apply(&u);
        let (fu, _) = objective(&au, &u);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let prev = x.clone();
        if fu <= f {
            x = u.clone();
            ax = au;
            f = fu;
        }
        let (a, b) = (t / t_next, (t - 1.0) / t_next);
        z = (0..n)
            .map(|k| x[k] + a * (u[k] - x[k]) + b * (x[k] - prev[k]))
            .collect();
        t = t_next;
        let (fx, fit) = objective(&ax, &x);
        out.objective.push(fx);
        out.data_fit.push(fit);
    }
    out.image = ImageGrid { shape, values: x };
    Ok(out)
}

pub fn admm_tv(sino: &Sinogram, shape: ImageShape, spec: &TvSpec) -> Result<MbirOutcome> {
    let projector = operator_for(sino, shape)?;
    admm_tv_with(&projector, &sino.values, spec, None)
}

/// ADMM with the splitting `z = ∇x`:
/// x-update by CG on `(AᵀA + ρ∇ᵀ∇)x = Aᵀy + ρ∇ᵀ(z − u)`, isotropic shrinkage
/// of `∇x + u` at `λ/ρ`, scaled dual update `u ← u + ∇x − z`.
/// `dual_init` seeds `u` (zeros when absent).
pub fn admm_tv_with(
    projector: &Projector,
    y: &[f64],
    spec: &TvSpec,
    dual_init: Option<(&[f64], &[f64])>,
) -> Result<MbirOutcome> {
    spec.validate()?;
    let shape = projector.shape();
    let n = shape.len();
    let mut rho = spec.rho;
    let aty = projector.adjoint(y);
    let mut x = vec![0.0; n];
    let (mut zx, mut zy) = (vec![0.0; n], vec![0.0; n]);
    let (mut ux, mut uy) = match dual_init {
        Some((a, b)) => (a.to_vec(), b.to_vec()),
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let normal = |rho: f64| {
        move |v: &[f64], o: &mut [f64]| {
            let ata = projector.normal(v);
            let (gx, gy) = gradient(shape, v);
            let lap = divergence(shape, &gx, &gy);
            for k in 0..n {
                o[k] = ata[k] - rho * lap[k];
            }
        }
    };
    let settings = CgSettings {
        tolerance: 1e-10,
        max_iterations: 1000,
        truncate: false,
    };
    let mut out = MbirOutcome {
        image: ImageGrid::zeros(shape),
        objective: Vec::with_capacity(spec.outer_iters),
        data_fit: Vec::with_capacity(spec.outer_iters),
        primal_residual: Vec::with_capacity(spec.outer_iters),
    };
    for _ in 0..spec.outer_iters {
        let thresh = spec.lambda / rho;
        let wx: Vec<f64> = zx.iter().zip(&ux).map(|(a, b)| a - b).collect();
        let wy: Vec<f64> = zy.iter().zip(&uy).map(|(a, b)| a - b).collect();
        let back = divergence(shape, &wx, &wy);
        let rhs: Vec<f64> = aty.iter().zip(&back).map(|(a, d)| a - rho * d).collect();
        x = conjugate_gradient(normal(rho), &rhs, &x, settings)?.solution;
        let (gx, gy) = gradient(shape, &x);
        let (zx_old, zy_old) = (zx.clone(), zy.clone());
        for k in 0..n {
            let (vx, vy) = (gx[k] + ux[k], gy[k] + uy[k]);
            let mag = vx.hypot(vy);
            let keep = if mag > thresh { 1.0 - thresh / mag } else { 0.0 };
            zx[k] = keep * vx;
            zy[k] = keep * vy;
        }
        let mut primal = 0.0;
        for k in 0..n {
            let (rx, ry) = (gx[k] - zx[k], gy[k] - zy[k]);
            ux[k] += rx;
            uy[k] += ry;
            primal += rx * rx + ry * ry;
        }
        let r = sub(&projector.apply(&x), y);
        out.objective
            .push(0.5 * dot(&r, &r) + spec.lambda * tv_values(shape, &x));
        out.data_fit.push(norm(&r));
        let primal = primal.sqrt();
        out.primal_residual.push(primal);
        if spec.adaptive_rho {
            let dzx: Vec<f64> = zx.iter().zip(&zx_old).map(|(a, b)| a - b).collect();
            let dzy: Vec<f64> = zy.iter().zip(&zy_old).map(|(a, b)| a - b).collect();
            let dual = rho * norm(&divergence(shape, &dzx, &dzy));
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                // The scaled dual variable is u = w/ρ.
                ux.iter_mut().chain(uy.iter_mut()).for_each(|v| *v /= factor);
            }
        }
    }
    if spec.nonneg {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    out.image = ImageGrid { shape, values: x };
    Ok(out)
}
