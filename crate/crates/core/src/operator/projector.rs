//! Ray-driven (Joseph) parallel-beam projector.
//!
//! Each ray is sampled once per pixel row (or column, whichever axis the ray
//! is closer to perpendicular to) and the image is linearly interpolated
//! between the two neighbouring pixels. The sample is weighted by the path
//! length through that row. The adjoint replays exactly the same weights in
//! scatter form, so `<Ax, y> = <x, A^T y>` holds to rounding.

use std::sync::Arc;

use rayon::prelude::*;

use super::grid::{ImageGrid, ImageShape, ProjectionGeometry, Sinogram};
use crate::error::{Error, Result};

/// A linear map between flat `f64` vectors with an adjoint.
pub trait LinearOperator: Sync {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply_into(&self, x: &[f64], out: &mut [f64]);
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.range_len()];
        self.apply_into(x, &mut out);
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain_len()];
        self.adjoint_into(y, &mut out);
        out
    }

    /// `A^T A x`
    fn normal(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint(&self.apply(x))
    }
}

/// `c * A` for an operator `A`.
pub struct Scaled<'a, O: LinearOperator + ?Sized> {
    pub inner: &'a O,
    pub factor: f64,
}

impl<O: LinearOperator + ?Sized> LinearOperator for Scaled<'_, O> {
    fn domain_len(&self) -> usize {
        self.inner.domain_len()
    }
    fn range_len(&self) -> usize {
        self.inner.range_len()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply_into(x, out);
        out.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.inner.adjoint_into(y, out);
        out.iter_mut().for_each(|v| *v *= self.factor);
    }
}

/// Weights are cached as CSR rows when there are at most this many.
const CACHE_MAX_WEIGHTS: usize = 10_000_000;
/// Below this many weights a product runs on one thread.
const PARALLEL_MIN_WEIGHTS: usize = 1 << 17;

struct Rows {
    start: Vec<usize>,
    pixel: Vec<u32>,
    weight: Vec<f64>,
}

impl std::fmt::Debug for Rows {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Rows({} weights)", self.weight.len())
    }
}

#[derive(Debug, Clone)]
pub struct Projector {
    shape: ImageShape,
    geometry: ProjectionGeometry,
    trig: Vec<(f64, f64)>,
    rows: Option<Arc<Rows>>,
}

impl Projector {
    pub fn new(shape: ImageShape, geometry: ProjectionGeometry) -> Result<Self> {
        shape.validate()?;
        geometry.validate()?;
        let trig = geometry.angles.iter().map(|a| (a.cos(), a.sin())).collect();
        let mut p = Self {
            shape,
            geometry,
            trig,
            rows: None,
        };
        if p.weight_bound() <= CACHE_MAX_WEIGHTS && shape.len() <= u32::MAX as usize {
            p.rows = Some(Arc::new(p.build_rows()));
        }
        Ok(p)
    }

    /// Upper bound on the number of stored weights.
    fn weight_bound(&self) -> usize {
        self.geometry.len() * 2 * self.shape.width.max(self.shape.height)
    }

    fn build_rows(&self) -> Rows {
        let d = self.geometry.detector_count;
        let mut rows = Rows {
            start: Vec::with_capacity(self.geometry.len() + 1),
            pixel: Vec::new(),
            weight: Vec::new(),
        };
        rows.start.push(0);
        for a in 0..self.geometry.n_angles() {
            for k in 0..d {
                self.for_each_weight(a, k, |p, w| {
                    rows.pixel.push(p as u32);
                    rows.weight.push(w);
                });
                rows.start.push(rows.pixel.len());
            }
        }
        rows
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    /// Visits every `(pixel index, weight)` pair of the ray at view `a`, bin `k`.
    #[inline]
    fn for_each_weight(&self, a: usize, k: usize, mut visit: impl FnMut(usize, f64)) {
        let (c, s) = self.trig[a];
        let ImageShape {
            width,
            height,
            pixel_size,
        } = self.shape;
        let t = self.geometry.bin_position(k);
        // Ray: x cos + y sin = t.
        if c.abs() >= s.abs() {
            let base = pixel_size / c.abs();
            let cx = (width as f64 - 1.0) / 2.0;
            for j in 0..height {
                let y = self.shape.y_of(j);
                let fi = (t - y * s) / (c * pixel_size) + cx;
                let i0 = fi.floor();
                let frac = fi - i0;
                let i0 = i0 as isize;
                let row = j * width;
                if i0 >= 0 && (i0 as usize) < width {
                    visit(row + i0 as usize, (1.0 - frac) * base);
                }
                let i1 = i0 + 1;
                if i1 >= 0 && (i1 as usize) < width {
                    visit(row + i1 as usize, frac * base);
                }
            }
        } else {
            let base = pixel_size / s.abs();
            let cy = (height as f64 - 1.0) / 2.0;
            for i in 0..width {
                let x = self.shape.x_of(i);
                let fj = cy - (t - x * c) / (s * pixel_size);
                let j0 = fj.floor();
                let frac = fj - j0;
                let j0 = j0 as isize;
                if j0 >= 0 && (j0 as usize) < height {
                    visit(j0 as usize * width + i, (1.0 - frac) * base);
                }
                let j1 = j0 + 1;
                if j1 >= 0 && (j1 as usize) < height {
                    visit(j1 as usize * width + i, frac * base);
                }
            }
        }
    }

    pub fn forward(&self, image: &ImageGrid) -> Result<Sinogram> {
        self.check_image(image)?;
        let values = self.apply(&image.values);
        Ok(Sinogram {
            geometry: self.geometry.clone(),
            values,
        })
    }

    pub fn back(&self, sino: &Sinogram) -> Result<ImageGrid> {
        if sino.geometry != self.geometry {
            return Err(Error::ShapeMismatch(
                "sinogram geometry differs from projector geometry".into(),
            ));
        }
        Ok(ImageGrid {
            shape: self.shape,
            values: self.adjoint(&sino.values),
        })
    }

    /// `A 1`: total path length of each ray inside the image.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.shape.len()])
    }

    /// `A^T 1`: total weight each pixel receives over all rays.
    pub fn column_sums(&self) -> Vec<f64> {
        self.adjoint(&vec![1.0; self.geometry.len()])
    }

    fn check_image(&self, image: &ImageGrid) -> Result<()> {
        if image.shape.width != self.shape.width || image.shape.height != self.shape.height {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} vs projector {}x{}",
                image.shape.width, image.shape.height, self.shape.width, self.shape.height
            )));
        }
        Ok(())
    }
}

impl LinearOperator for Projector {
    fn domain_len(&self) -> usize {
        self.shape.len()
    }

    fn range_len(&self) -> usize {
        self.geometry.len()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.domain_len());
        assert_eq!(out.len(), self.range_len());
        let d = self.geometry.detector_count;
        let view = |a: usize, row: &mut [f64]| {
            for (k, v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                match &self.rows {
                    Some(r) => {
                        let ray = a * d + k;
                        for e in r.start[ray]..r.start[ray + 1] {
                            acc += r.weight[e] * x[r.pixel[e] as usize];
                        }
                    }
                    None => self.for_each_weight(a, k, |p, w| acc += w * x[p]),
                }
                *v = acc;
            }
        };
        if self.weight_bound() < PARALLEL_MIN_WEIGHTS {
            out.chunks_mut(d).enumerate().for_each(|(a, row)| view(a, row));
        } else {
            out.par_chunks_mut(d).enumerate().for_each(|(a, row)| view(a, row));
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.range_len());
        assert_eq!(out.len(), self.domain_len());
        out.iter_mut().for_each(|v| *v = 0.0);
        if let Some(r) = &self.rows {
            for (ray, &yv) in y.iter().enumerate() {
                if yv != 0.0 {
                    for e in r.start[ray]..r.start[ray + 1] {
                        out[r.pixel[e] as usize] += r.weight[e] * yv;
                    }
                }
            }
            return;
        }
        let d = self.geometry.detector_count;
        for a in 0..self.geometry.n_angles() {
            for k in 0..d {
                let yv = y[a * d + k];
                if yv != 0.0 {
                    self.for_each_weight(a, k, |p, w| out[p] += w * yv);
                }
            }
        }
    }
}

/// Computes `A x` for the ray-driven discretization.
pub fn forward_project(image: &ImageGrid, geometry: &ProjectionGeometry) -> Result<Sinogram> {
    Projector::new(image.shape, geometry.clone())?.forward(image)
}

/// Computes `A^T y`, the exact adjoint of [`forward_project`] onto `shape`.
pub fn back_project(sino: &Sinogram, shape: ImageShape) -> Result<ImageGrid> {
    Projector::new(shape, sino.geometry.clone())?.back(sino)
}
