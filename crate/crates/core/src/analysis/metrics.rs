use crate::error::{invalid, Error, Result};
use crate::operator::{data_fit, ImageGrid, Projector, Sinogram};

/// PSNR reported for a reconstruction identical to its reference.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub data_fit: f64,
    /// `max − min` of the reference.
    pub value_range_used: f64,
}

fn reference_range(reference: &ImageGrid) -> Result<f64> {
    let (lo, hi) = reference.min_max();
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        Ok(range)
    } else {
        Err(invalid("reference image has zero value range"))
    }
}

fn same_shape(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.shape.width != b.shape.width || a.shape.height != b.shape.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.shape.width, a.shape.height, b.shape.width, b.shape.height
        )));
    }
    Ok(())
}

/// `20 log10(range / RMSE)` with the range taken from the reference.
pub fn psnr(recon: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    same_shape(recon, reference)?;
    let range = reference_range(reference)?;
    let mse = recon
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / recon.values.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(20.0 * (range / mse.sqrt()).log10())
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over every window position fully inside the image, with a
/// Gaussian-weighted window (11×11, σ = 1.5, shrunk to the largest odd size
/// that fits smaller images) and the reference range as dynamic range.
pub fn ssim(recon: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    same_shape(recon, reference)?;
    let range = reference_range(reference)?;
    let (w, h) = (reference.shape.width, reference.shape.height);
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let win = gaussian_window(size);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let (x, y) = (&recon.values, &reference.values);
    let mut total = 0.0;
    let mut count = 0usize;
    for j0 in 0..=(h - size) {
        for i0 in 0..=(w - size) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dj, wj) in win.iter().enumerate() {
                for (di, wi) in win.iter().enumerate() {
                    let k = (j0 + dj) * w + i0 + di;
                    let wt = wj * wi;
                    mx += wt * x[k];
                    my += wt * y[k];
                    sxx += wt * x[k] * x[k];
                    syy += wt * y[k] * y[k];
                    sxy += wt * x[k] * y[k];
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR and SSIM against `reference`, and `∥A·recon − observed∥₂`.
pub fn compute_metrics(
    recon: &ImageGrid,
    reference: &ImageGrid,
    observed: &Sinogram,
) -> Result<MetricsReport> {
    let projector = Projector::new(recon.shape, observed.geometry.clone())?;
    compute_metrics_with(&projector, recon, reference, &observed.values)
}

pub fn compute_metrics_with(
    projector: &Projector,
    recon: &ImageGrid,
    reference: &ImageGrid,
    observed: &[f64],
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        psnr: psnr(recon, reference)?,
        ssim: ssim(recon, reference)?,
        data_fit: data_fit(projector, &recon.values, observed),
        value_range_used: reference_range(reference)?,
    })
}

/// Per-pixel mean and population standard deviation of `samples`.
pub fn uncertainty_map(samples: &[ImageGrid]) -> Result<(ImageGrid, ImageGrid)> {
    if samples.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    let shape = samples[0].shape;
    for s in samples {
        same_shape(s, &samples[0])?;
    }
    let k = samples.len() as f64;
    let n = shape.len();
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.values) {
            *m += v / k;
        }
    }
    let mut var = vec![0.0; n];
    for s in samples {
        for ((q, v), m) in var.iter_mut().zip(&s.values).zip(&mean) {
            *q += (v - m) * (v - m) / k;
        }
    }
    Ok((
        ImageGrid { shape, values: mean },
        ImageGrid {
            shape,
            values: var.into_iter().map(f64::sqrt).collect(),
        },
    ))
}
