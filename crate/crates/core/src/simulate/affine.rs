use crate::error::{invalid, Result};
use crate::operator::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `v -> a v + b`
    Forward,
    /// `v -> (v - b) / a`
    Inverse,
}

/// Linear value-range map between a normalized range and physical units.
pub fn affine_range_map(image: &ImageGrid, a: f64, b: f64, direction: Direction) -> Result<ImageGrid> {
    if a == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(invalid("affine map needs finite a != 0 and finite b"));
    }
    Ok(match direction {
        Direction::Forward => image.map(|v| a * v + b),
        Direction::Inverse => image.map(|v| (v - b) / a),
    })
}

/// The `(a, b)` sending `[lo, hi]` onto `[-1, 1]` under [`Direction::Inverse`],
/// i.e. physical `= a·normalized + b`.
pub fn unit_range_coefficients(lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(hi > lo) {
        return Err(invalid("value range must have hi > lo"));
    }
    Ok(((hi - lo) / 2.0, (hi + lo) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ImageShape;

    fn ramp() -> ImageGrid {
        ImageGrid::from_values(ImageShape::new(5, 1), vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap()
    }

    #[test]
    fn identity_map() {
        assert_eq!(affine_range_map(&ramp(), 1.0, 0.0, Direction::Forward).unwrap(), ramp());
    }

    #[test]
    fn maps_unit_interval_to_symmetric() {
        let out = affine_range_map(&ramp(), 2.0, -1.0, Direction::Forward).unwrap();
        assert_eq!(out.values, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn round_trip() {
        let img = ramp();
        let f = affine_range_map(&img, 3.7, -0.2, Direction::Forward).unwrap();
        let back = affine_range_map(&f, 3.7, -0.2, Direction::Inverse).unwrap();
        for (x, y) in back.values.iter().zip(&img.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_slope_rejected() {
        assert!(affine_range_map(&ramp(), 0.0, 1.0, Direction::Forward).is_err());
    }

    #[test]
    fn unit_range_coefficients_hit_endpoints() {
        let (a, b) = unit_range_coefficients(0.0, 2.0).unwrap();
        assert_eq!((b - a, a + b), (0.0, 2.0));
    }
}
