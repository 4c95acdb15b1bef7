//! Ellipse phantoms: the Shepp–Logan tables, random disks, user ellipse
//! lists, and seeded perturbations used as held-out and training images.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::operator::{rasterize_ellipses, Ellipse, ImageGrid, ImageShape};

/// Samples per pixel side used when rasterizing phantoms.
pub const PHANTOM_SUPERSAMPLE: usize = 4;

// (cx, cy, a, b, rotation in degrees, classical density, modified density)
// on the unit square [-1, 1]².
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64, f64); 10] = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 2.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.01, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01, 0.1),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    /// Shepp & Logan's original densities (skull 2.0, soft tissue ≈ 1.0).
    SheppLogan,
    /// Higher-contrast variant (skull 1.0, soft tissue ≈ 0.2).
    ModifiedSheppLogan,
    /// `count` unit-density disks at seeded positions.
    Disks { count: usize, seed: u64 },
    /// User ellipses on the unit square `[-1, 1]²`.
    Ellipses(Vec<Ellipse>),
}

impl PhantomKind {
    /// Parses `shepp-logan`, `modified-shepp-logan` or `disks[:count[:seed]]`.
    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let mut parts = lower.split(':');
        match parts.next().unwrap_or_default() {
            "shepp-logan" | "shepplogan" => Ok(Self::SheppLogan),
            "modified-shepp-logan" | "modified" => Ok(Self::ModifiedSheppLogan),
            "disks" => {
                let count = match parts.next() {
                    Some(c) => c.parse().map_err(|_| invalid(format!("bad disk count {c}")))?,
                    None => 5,
                };
                let seed = match parts.next() {
                    Some(s) => s.parse().map_err(|_| invalid(format!("bad disk seed {s}")))?,
                    None => 0,
                };
                Ok(Self::Disks { count, seed })
            }
            _ => Err(Error::Unknown {
                what: "phantom kind",
                name: name.into(),
            }),
        }
    }

    /// Ellipses on the unit square.
    pub fn unit_ellipses(&self) -> Vec<Ellipse> {
        match self {
            Self::SheppLogan => shepp_logan(false),
            Self::ModifiedSheppLogan => shepp_logan(true),
            Self::Disks { count, seed } => random_disks(*count, *seed),
            Self::Ellipses(list) => list.clone(),
        }
    }
}

pub fn shepp_logan(modified: bool) -> Vec<Ellipse> {
    SHEPP_LOGAN
        .iter()
        .map(|&(cx, cy, a, b, deg, rho, rho_mod)| Ellipse {
            center: (cx, cy),
            semi_axes: (a, b),
            rotation: deg * PI / 180.0,
            density: if modified { rho_mod } else { rho },
        })
        .collect()
}

fn random_disks(count: usize, seed: u64) -> Vec<Ellipse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.08..0.3);
            let reach = 0.85 - radius;
            let angle = rng.random_range(0.0..2.0 * PI);
            let dist = reach * rng.random::<f64>().sqrt();
            Ellipse::circle((dist * angle.cos(), dist * angle.sin()), radius, 1.0)
        })
        .collect()
}

/// Maps unit-square ellipses to the physical coordinates of `shape`.
pub fn to_physical(unit: &[Ellipse], shape: ImageShape) -> Vec<Ellipse> {
    let half = shape.half_extent();
    unit.iter().map(|e| e.scaled(half)).collect()
}

pub fn generate_phantom(kind: &PhantomKind, size: usize) -> Result<ImageGrid> {
    if size < 16 {
        return Err(invalid("phantom size must be >= 16"));
    }
    let shape = ImageShape::square(size);
    rasterize_ellipses(
        &to_physical(&kind.unit_ellipses(), shape),
        shape,
        PHANTOM_SUPERSAMPLE,
    )
}

/// Parses one ellipse per line: `cx cy a b rotation_degrees density`, on the
/// unit square. Blank lines and `#` comments are skipped.
pub fn parse_ellipse_spec(text: &str) -> Result<Vec<Ellipse>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config {
                line: n + 1,
                message: e.to_string(),
            })?;
        if nums.len() != 6 {
            return Err(Error::Config {
                line: n + 1,
                message: format!("expected 6 numbers, found {}", nums.len()),
            });
        }
        if !(nums[2] > 0.0 && nums[3] > 0.0) {
            return Err(Error::Config {
                line: n + 1,
                message: "semi-axes must be positive".into(),
            });
        }
        out.push(Ellipse {
            center: (nums[0], nums[1]),
            semi_axes: (nums[2], nums[3]),
            rotation: nums[4] * PI / 180.0,
            density: nums[5],
        });
    }
    Ok(out)
}

/// A seeded random perturbation of `base`: centres jitter by up to 0.03,
/// axes scale by ±8%, rotations by ±10°, densities by ±10% (the outermost
/// ellipse keeps its density so the value range stays comparable).
pub fn phantom_variant(base: &[Ellipse], seed: u64) -> Vec<Ellipse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_7a17);
    base.iter()
        .enumerate()
        .map(|(i, e)| {
            let mut j = |s: f64| rng.random_range(-s..s);
            let scale = 1.0 + j(0.08);
            Ellipse {
                center: (e.center.0 + j(0.03), e.center.1 + j(0.03)),
                semi_axes: (e.semi_axes.0 * scale, e.semi_axes.1 * (1.0 + j(0.08))),
                rotation: e.rotation + j(10.0) * PI / 180.0,
                density: if i == 0 {
                    e.density
                } else {
                    e.density * (1.0 + j(0.1))
                },
            }
        })
        .collect()
}

/// Rasterizes `count` seeded variants of `kind`; variant `k` uses
/// `seed + k`, so sets with distinct seeds far apart do not overlap.
pub fn variant_images(kind: &PhantomKind, size: usize, count: usize, seed: u64) -> Result<Vec<ImageGrid>> {
    if size < 16 {
        return Err(invalid("phantom size must be >= 16"));
    }
    let shape = ImageShape::square(size);
    let base = kind.unit_ellipses();
    (0..count as u64)
        .map(|k| {
            let unit = phantom_variant(&base, seed.wrapping_add(k));
            rasterize_ellipses(&to_physical(&unit, shape), shape, PHANTOM_SUPERSAMPLE)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_disk() {
        let kind = PhantomKind::Disks { count: 1, seed: 4 };
        let disk = kind.unit_ellipses()[0];
        let img = generate_phantom(&kind, 64).unwrap();
        let shape = img.shape;
        let phys = disk.scaled(shape.half_extent());
        let r = phys.semi_axes.0;
        let mut boundary = 0;
        for j in 0..64 {
            for i in 0..64 {
                let d = (shape.x_of(i) - phys.center.0).hypot(shape.y_of(j) - phys.center.1);
                let v = img.get(i, j);
                if d < r - 1.0 {
                    assert_eq!(v, 1.0);
                } else if d > r + 1.0 {
                    assert_eq!(v, 0.0);
                } else if v > 0.0 && v < 1.0 {
                    boundary += 1;
                }
            }
        }
        assert!(boundary > 0, "edge pixels should be antialiased");
    }

    #[test]
    fn values_bounded_by_density_sum() {
        for kind in [PhantomKind::SheppLogan, PhantomKind::ModifiedSheppLogan] {
            let bound: f64 = kind.unit_ellipses().iter().map(|e| e.density.abs()).sum();
            let img = generate_phantom(&kind, 32).unwrap();
            assert!(img.values.iter().all(|v| v.abs() <= bound + 1e-12));
        }
    }

    #[test]
    fn parse_kinds_and_spec() {
        assert_eq!(PhantomKind::parse("Shepp-Logan").unwrap(), PhantomKind::SheppLogan);
        assert_eq!(
            PhantomKind::parse("disks:3:9").unwrap(),
            PhantomKind::Disks { count: 3, seed: 9 }
        );
        assert!(PhantomKind::parse("teapot").is_err());
        let spec = "# skull\n0 0 0.7 0.9 0 1.0\n0.2 0 0.1 0.3 -18 -0.2\n";
        let e = parse_ellipse_spec(spec).unwrap();
        assert_eq!(e.len(), 2);
        assert!((e[1].rotation + 18f64.to_radians()).abs() < 1e-12);
        assert!(parse_ellipse_spec("0 0 1 1 0").is_err());
    }

    #[test]
    fn small_size_rejected() {
        assert!(generate_phantom(&PhantomKind::SheppLogan, 8).is_err());
    }

    #[test]
    fn variants_are_seeded() {
        let base = shepp_logan(true);
        assert_eq!(phantom_variant(&base, 1), phantom_variant(&base, 1));
        assert_ne!(phantom_variant(&base, 1), phantom_variant(&base, 2));
    }
}
