//! Discrete gradient, isotropic total variation and its proximal map.

use crate::error::{invalid, Result};
use crate::operator::{ImageGrid, ImageShape};

/// Forward differences with a zero difference past the last row and column.
/// Returns `(∂x, ∂y)`, each of image length.
pub fn gradient(shape: ImageShape, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (shape.width, shape.height);
    let mut gx = vec![0.0; v.len()];
    let mut gy = vec![0.0; v.len()];
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            if i + 1 < w {
                gx[k] = v[k + 1] - v[k];
            }
            if j + 1 < h {
                gy[k] = v[k + w] - v[k];
            }
        }
    }
    (gx, gy)
}

/// `−∇ᵀ(px, py)`, the discrete divergence.
pub fn divergence(shape: ImageShape, px: &[f64], py: &[f64]) -> Vec<f64> {
    let (w, h) = (shape.width, shape.height);
    let mut out = vec![0.0; px.len()];
    for j in 0..h {
        for i in 0..w {
            let k = j * w + i;
            let mut d = 0.0;
            if i + 1 < w {
                d += px[k];
            }
            if i > 0 {
                d -= px[k - 1];
            }
            if j + 1 < h {
                d += py[k];
            }
            if j > 0 {
                d -= py[k - w];
            }
            out[k] = d;
        }
    }
    out
}

pub(crate) fn tv_values(shape: ImageShape, v: &[f64]) -> f64 {
    let (gx, gy) = gradient(shape, v);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// Isotropic total variation `Σ √((∂x v)² + (∂y v)²)`.
pub fn tv_seminorm(image: &ImageGrid) -> f64 {
    tv_values(image.shape, &image.values)
}

/// Step of the dual projection iteration.
const TAU: f64 = 0.125;

pub(crate) fn tv_prox_values(shape: ImageShape, f: &[f64], weight: f64, iters: usize) -> Vec<f64> {
    if weight == 0.0 || iters == 0 {
        return f.to_vec();
    }
    let n = f.len();
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let scaled: Vec<f64> = f.iter().map(|v| v / weight).collect();
    for _ in 0..iters {
        let div = divergence(shape, &px, &py);
        let arg: Vec<f64> = div.iter().zip(&scaled).map(|(d, s)| d - s).collect();
        let (gx, gy) = gradient(shape, &arg);
        for k in 0..n {
            let denom = 1.0 + TAU * gx[k].hypot(gy[k]);
            px[k] = (px[k] + TAU * gx[k]) / denom;
            py[k] = (py[k] + TAU * gy[k]) / denom;
        }
    }
    let div = divergence(shape, &px, &py);
    f.iter().zip(&div).map(|(v, d)| v - weight * d).collect()
}

/// Approximates `argmin_u ½∥u − image∥² + weight·TV(u)` with `iters` steps of
/// the dual projection algorithm.
pub fn tv_prox(image: &ImageGrid, weight: f64, iters: usize) -> Result<ImageGrid> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(invalid("TV weight must be finite and >= 0"));
    }
    Ok(ImageGrid {
        shape: image.shape,
        values: tv_prox_values(image.shape, &image.values, weight, iters),
    })
}
