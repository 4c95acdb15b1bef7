//! Dense vector helpers and a matrix-free conjugate-gradient solver.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

/// `||a - b|| / ||b||`, or `||a||` when `b` is zero.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let nb = norm(b);
    let diff = norm(&sub(a, b));
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

/// Stopping rule and iteration cap for [`conjugate_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct CgSettings {
    /// Relative residual `||b - Mx|| / ||b||` at which to stop.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Return the last iterate instead of failing when the cap is reached.
    pub truncate: bool,
}

impl CgSettings {
    /// A fixed budget of `iterations` steps that never reports non-convergence.
    pub fn truncated(iterations: usize) -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: iterations,
            truncate: true,
        }
    }
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            truncate: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `M x = b` for a symmetric positive (semi-)definite operator given as
/// a closure writing `M v` into its second argument. Starts from `x0`.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x0: &[f64],
    settings: CgSettings,
) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = x0.to_vec();
    let mut mv = vec![0.0; n];
    apply(&x, &mut mv);
    let mut r = sub(b, &mv);
    let b_norm = norm(b);
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };

    let mut rr = dot(&r, &r);
    if rr.sqrt() / scale <= settings.tolerance {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: rr.sqrt() / scale,
        });
    }

    let mut p = r.clone();
    for it in 1..=settings.max_iterations {
        apply(&p, &mut mv);
        let pmp = dot(&p, &mv);
        if pmp <= 0.0 || !pmp.is_finite() {
            // Search direction in the null space of a semi-definite operator.
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rr.sqrt() / scale,
            });
        }
        let alpha = rr / pmp;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &mv, &mut r);
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / scale;
        if rel <= settings.tolerance {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    if settings.truncate {
        return Ok(CgOutcome {
            solution: x,
            iterations: settings.max_iterations,
            relative_residual: rr.sqrt() / scale,
        });
    }
    Err(Error::CgNotConverged {
        iterations: settings.max_iterations,
        residual: rr.sqrt() / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_spd_system() {
        // [[4,1],[1,3]] x = [1,2]  ->  x = [1/11, 7/11]
        let apply = |v: &[f64], out: &mut [f64]| {
            out[0] = 4.0 * v[0] + v[1];
            out[1] = v[0] + 3.0 * v[1];
        };
        let out = conjugate_gradient(apply, &[1.0, 2.0], &[0.0, 0.0], CgSettings::default()).unwrap();
        assert!((out.solution[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((out.solution[1] - 7.0 / 11.0).abs() < 1e-12);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let apply = |v: &[f64], out: &mut [f64]| {
            for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                *o = (1.0 + i as f64 * 100.0) * x;
            }
        };
        let b = vec![1.0; 50];
        let settings = CgSettings {
            tolerance: 1e-14,
            max_iterations: 3,
            truncate: false,
        };
        match conjugate_gradient(apply, &b, &vec![0.0; 50], settings) {
            Err(Error::CgNotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
