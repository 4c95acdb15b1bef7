use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Pixel layout of an image: `width` columns, `height` rows, square pixels of
/// side `pixel_size`. The grid is centred on the origin; row 0 is the top
/// (largest `y`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

impl ImageShape {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixel_size: 1.0,
        }
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Self {
        self.pixel_size = pixel_size;
        self
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("image dimensions must be nonzero"));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(invalid("pixel size must be positive and finite"));
        }
        Ok(())
    }

    /// Physical `x` of the centre of column `i`.
    pub fn x_of(&self, i: usize) -> f64 {
        (i as f64 - (self.width as f64 - 1.0) / 2.0) * self.pixel_size
    }

    /// Physical `y` of the centre of row `j`.
    pub fn y_of(&self, j: usize) -> f64 {
        ((self.height as f64 - 1.0) / 2.0 - j as f64) * self.pixel_size
    }

    /// Half the physical extent along the larger axis.
    pub fn half_extent(&self) -> f64 {
        self.width.max(self.height) as f64 * self.pixel_size / 2.0
    }
}

/// A 2D attenuation map stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub shape: ImageShape,
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(shape: ImageShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: ImageShape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn from_values(shape: ImageShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} needs {} values, got {}",
                shape.width,
                shape.height,
                shape.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {pos}")));
        }
        Ok(Self { shape, values })
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.shape.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Parallel-beam acquisition geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    /// View angles in radians, strictly increasing within `[0, 2π)`.
    pub angles: Vec<f64>,
    pub detector_count: usize,
    pub detector_pitch: f64,
    /// Lateral shift of the detector centre.
    pub detector_offset: f64,
}

impl ProjectionGeometry {
    pub fn new(angles: Vec<f64>, detector_count: usize, detector_pitch: f64) -> Result<Self> {
        let geom = Self {
            angles,
            detector_count,
            detector_pitch,
            detector_offset: 0.0,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// `n_angles` evenly spaced views over `[start, end)`.
    pub fn parallel(
        n_angles: usize,
        (start, end): (f64, f64),
        detector_count: usize,
        detector_pitch: f64,
    ) -> Result<Self> {
        if n_angles == 0 {
            return Err(invalid("at least one projection angle is required"));
        }
        if !(end > start) {
            return Err(invalid("angular range must have end > start"));
        }
        let step = (end - start) / n_angles as f64;
        let angles = (0..n_angles).map(|k| start + k as f64 * step).collect();
        Self::new(angles, detector_count, detector_pitch)
    }

    /// Half-turn geometry whose detector covers the image diagonal, with the
    /// detector pitch equal to the pixel size.
    pub fn covering(shape: ImageShape, n_angles: usize) -> Result<Self> {
        let diag = (shape.width as f64).hypot(shape.height as f64);
        let count = diag.ceil() as usize + 1;
        Self::parallel(n_angles, (0.0, PI), count, shape.pixel_size)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.detector_offset = offset;
        self
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.angles.len() * self.detector_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed detector coordinate of bin `k`.
    pub fn bin_position(&self, k: usize) -> f64 {
        (k as f64 - (self.detector_count as f64 - 1.0) / 2.0) * self.detector_pitch
            + self.detector_offset
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(invalid("geometry has no angles"));
        }
        if self.detector_count == 0 {
            return Err(invalid("detector_count must be > 0"));
        }
        if !(self.detector_pitch > 0.0 && self.detector_pitch.is_finite()) {
            return Err(invalid("detector_pitch must be positive"));
        }
        if !self.detector_offset.is_finite() {
            return Err(invalid("detector_offset must be finite"));
        }
        for (i, &a) in self.angles.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&a) {
                return Err(invalid(format!("angle {i} = {a} outside [0, 2π)")));
            }
            if i > 0 && a <= self.angles[i - 1] {
                return Err(invalid("angles must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Line-integral measurements, one row per view angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geometry: ProjectionGeometry,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: ProjectionGeometry) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(geometry: ProjectionGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "sinogram {}x{} needs {} values, got {}",
                geometry.n_angles(),
                geometry.detector_count,
                geometry.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sinogram value at index {pos}")));
        }
        Ok(Self { geometry, values })
    }

    pub fn n_angles(&self) -> usize {
        self.geometry.n_angles()
    }

    pub fn detector_count(&self) -> usize {
        self.geometry.detector_count
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let d = self.geometry.detector_count;
        &self.values[angle * d..(angle + 1) * d]
    }

    pub fn get(&self, angle: usize, bin: usize) -> f64 {
        self.values[angle * self.geometry.detector_count + bin]
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            geometry: self.geometry.clone(),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(ProjectionGeometry::new(vec![0.0, 0.0], 4, 1.0).is_err());
        assert!(ProjectionGeometry::new(vec![0.5, 0.2], 4, 1.0).is_err());
        assert!(ProjectionGeometry::new(vec![7.0], 4, 1.0).is_err());
        assert!(ProjectionGeometry::new(vec![0.0], 0, 1.0).is_err());
        assert!(ProjectionGeometry::new(vec![0.0], 4, 0.0).is_err());
    }

    #[test]
    fn rejects_non_finite_image() {
        let shape = ImageShape::square(2);
        assert!(ImageGrid::from_values(shape, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        assert!(ImageGrid::from_values(shape, vec![0.0; 3]).is_err());
    }

    #[test]
    fn pixel_centres_are_symmetric() {
        let s = ImageShape::square(4);
        assert_eq!(s.x_of(0), -1.5);
        assert_eq!(s.x_of(3), 1.5);
        assert_eq!(s.y_of(0), 1.5);
        assert_eq!(s.y_of(3), -1.5);
    }
}
