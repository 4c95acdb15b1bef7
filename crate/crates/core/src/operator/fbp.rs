//! Filtered backprojection.
//!
//! Projections are convolved with the band-limited ramp kernel (zero-padded to
//! the next power of two at least twice the detector count, so the FFT
//! convolution is linear rather than circular) and then backprojected with
//! pixel-driven linear interpolation. The whole pipeline is linear; its
//! transpose is exposed for pseudoinverse-style guidance.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::grid::{ImageGrid, ImageShape, ProjectionGeometry, Sinogram};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    RamLak,
    /// Ram-Lak apodized by a Hann window reaching zero at Nyquist.
    Hann,
}

impl std::str::FromStr for FilterKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ram-lak" | "ramlak" | "ramp" => Ok(Self::RamLak),
            "hann" => Ok(Self::Hann),
            _ => Err(crate::Error::Unknown {
                what: "filter",
                name: s.into(),
            }),
        }
    }
}

pub struct Fbp {
    shape: ImageShape,
    geometry: ProjectionGeometry,
    trig: Vec<(f64, f64)>,
    padded: usize,
    response: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    angle_weight: f64,
}

impl Fbp {
    pub fn new(shape: ImageShape, geometry: ProjectionGeometry, kind: FilterKind) -> Result<Self> {
        shape.validate()?;
        geometry.validate()?;
        if geometry.n_angles() < 2 {
            return Err(invalid("filtered backprojection needs at least 2 angles"));
        }
        let d = geometry.detector_count;
        let padded = (2 * d).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(padded);
        let ifft = planner.plan_fft_inverse(padded);

        let tau = geometry.detector_pitch;
        let mut kernel: Vec<Complex<f64>> = (0..padded)
            .map(|n| {
                let m = if n <= padded / 2 { n } else { padded - n };
                let v = if m == 0 {
                    1.0 / (4.0 * tau * tau)
                } else if m % 2 == 1 {
                    -1.0 / ((m * m) as f64 * PI * PI * tau * tau)
                } else {
                    0.0
                };
                Complex::new(v, 0.0)
            })
            .collect();
        fft.process(&mut kernel);
        let response = kernel
            .iter()
            .enumerate()
            .map(|(n, h)| {
                let window = match kind {
                    FilterKind::RamLak => 1.0,
                    FilterKind::Hann => 0.5 * (1.0 + (2.0 * PI * n as f64 / padded as f64).cos()),
                };
                // tau turns the discrete sum into the convolution integral.
                tau * h.re * window
            })
            .collect();

        let angle_weight = angular_weight(&geometry.angles);
        let trig = geometry.angles.iter().map(|a| (a.cos(), a.sin())).collect();
        Ok(Self {
            shape,
            geometry,
            trig,
            padded,
            response,
            fft,
            ifft,
            angle_weight,
        })
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    /// Applies the ramp filter to every projection row. The filter matrix is
    /// symmetric, so this is also its own transpose.
    pub fn filter(&self, values: &[f64]) -> Vec<f64> {
        let d = self.geometry.detector_count;
        let mut out = vec![0.0; values.len()];
        let mut buf = vec![Complex::new(0.0, 0.0); self.padded];
        let inv = 1.0 / self.padded as f64;
        for (row_in, row_out) in values.chunks(d).zip(out.chunks_mut(d)) {
            for (b, &v) in buf.iter_mut().zip(row_in) {
                *b = Complex::new(v, 0.0);
            }
            buf[d..].iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
            self.fft.process(&mut buf);
            for (b, &h) in buf.iter_mut().zip(&self.response) {
                *b *= h;
            }
            self.ifft.process(&mut buf);
            for (o, b) in row_out.iter_mut().zip(&buf) {
                *o = b.re * inv;
            }
        }
        out
    }

    #[inline]
    fn for_each_sample(&self, a: usize, pixel: usize, mut visit: impl FnMut(usize, f64)) {
        let (c, s) = self.trig[a];
        let i = pixel % self.shape.width;
        let j = pixel / self.shape.width;
        let t = self.shape.x_of(i) * c + self.shape.y_of(j) * s;
        let d = self.geometry.detector_count;
        let u = (t - self.geometry.detector_offset) / self.geometry.detector_pitch
            + (d as f64 - 1.0) / 2.0;
        let k0 = u.floor();
        let frac = u - k0;
        let k0 = k0 as isize;
        if k0 >= 0 && (k0 as usize) < d {
            visit(a * d + k0 as usize, 1.0 - frac);
        }
        let k1 = k0 + 1;
        if k1 >= 0 && (k1 as usize) < d {
            visit(a * d + k1 as usize, frac);
        }
    }

    /// Pixel-driven backprojection weighted by the angular step.
    pub fn backproject(&self, filtered: &[f64]) -> Vec<f64> {
        let n = self.shape.len();
        let mut out = vec![0.0; n];
        for (p, v) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..self.trig.len() {
                self.for_each_sample(a, p, |q, w| acc += w * filtered[q]);
            }
            *v = acc * self.angle_weight;
        }
        out
    }

    /// Transpose of [`Fbp::backproject`].
    pub fn backproject_transpose(&self, image: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.geometry.len()];
        for (p, &v) in image.iter().enumerate() {
            let v = v * self.angle_weight;
            for a in 0..self.trig.len() {
                self.for_each_sample(a, p, |q, w| out[q] += w * v);
            }
        }
        out
    }

    pub fn apply(&self, sino: &[f64]) -> Vec<f64> {
        self.backproject(&self.filter(sino))
    }

    /// Transpose of the full FBP map (image -> sinogram).
    pub fn apply_transpose(&self, image: &[f64]) -> Vec<f64> {
        self.filter(&self.backproject_transpose(image))
    }

    pub fn reconstruct(&self, sino: &Sinogram) -> Result<ImageGrid> {
        if sino.geometry != self.geometry {
            return Err(crate::Error::ShapeMismatch(
                "sinogram geometry differs from FBP geometry".into(),
            ));
        }
        Ok(ImageGrid {
            shape: self.shape,
            values: self.apply(&sino.values),
        })
    }
}

/// Angular quadrature weight: `π/K` when the views cover a half turn or more,
/// otherwise the mean spacing of the covered wedge.
fn angular_weight(angles: &[f64]) -> f64 {
    let k = angles.len() as f64;
    let coverage = (angles[angles.len() - 1] - angles[0]) * k / (k - 1.0);
    if coverage >= PI * (1.0 - 1e-9) {
        PI / k
    } else {
        coverage / k
    }
}

pub fn fbp_reconstruct(sino: &Sinogram, shape: ImageShape, kind: FilterKind) -> Result<ImageGrid> {
    Fbp::new(shape, sino.geometry.clone(), kind)?.reconstruct(sino)
}
