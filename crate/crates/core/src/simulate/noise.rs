//! Absorption scaling, Poisson photon noise, ring artifacts, angle
//! subsampling and the full measurement pipeline.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::config::{RingVariance, SimulationConfig};
use crate::error::{invalid, Error, Result};
use crate::operator::{ProjectionGeometry, Sinogram};

const STREAM_POISSON: u64 = 1 << 40;
const STREAM_RING_COLUMNS: u64 = 2 << 40;
const STREAM_RING_NOISE: u64 = 3 << 40;

/// A ChaCha stream keyed by `(seed, index)`: each sinogram bin or column gets
/// its own reproducible sequence regardless of evaluation order.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn mean_absorption(values: &[f64], gamma: f64) -> f64 {
    values.iter().map(|&y| 1.0 - (-gamma * y).exp()).sum::<f64>() / values.len() as f64
}

/// Finds `γ` with `mean(1 - exp(-γ y₀)) = target` by bisection on
/// `(1e-12, 1e6]` (geometric midpoints) and returns `(γ y₀, γ)`.
pub fn scale_to_absorption(sino: &Sinogram, target: f64) -> Result<(Sinogram, f64)> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target absorption must lie in (0, 1)"));
    }
    if sino.values.iter().any(|&v| v < 0.0) {
        return Err(invalid("absorption scaling needs a nonnegative sinogram"));
    }
    if sino.values.iter().all(|&v| v == 0.0) {
        return Err(invalid("all-zero sinogram cannot reach a nonzero absorption"));
    }
    let (mut lo, mut hi) = (1e-12_f64, 1e6_f64);
    if mean_absorption(&sino.values, hi) < target {
        return Err(invalid("target absorption unreachable with γ <= 1e6"));
    }
    if mean_absorption(&sino.values, lo) > target {
        return Err(invalid("target absorption below reach of γ >= 1e-12"));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mean_absorption(&sino.values, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let scaled = sino.with_values(sino.values.iter().map(|v| gamma * v).collect());
    Ok((scaled, gamma))
}

/// Photon counts `Î ~ Poisson(I₀ exp(-y))`, one independent stream per bin.
pub fn poisson_counts(sino: &Sinogram, photon_count: f64, seed: u64) -> Result<Vec<f64>> {
    if !(photon_count > 0.0 && photon_count.is_finite()) {
        return Err(invalid("photon count must be positive"));
    }
    sino.values
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let lambda = photon_count * (-y).exp();
            if lambda <= 0.0 {
                return Ok(0.0);
            }
            let dist = Poisson::new(lambda)
                .map_err(|e| invalid(format!("poisson rate {lambda}: {e}")))?;
            Ok(dist.sample(&mut stream_rng(seed, STREAM_POISSON + i as u64)))
        })
        .collect()
}

/// `ỹ = -log(max(Î, 1) / I₀)` with `Î` from [`poisson_counts`].
pub fn apply_poisson_noise(sino: &Sinogram, photon_count: f64, seed: u64) -> Result<Sinogram> {
    let counts = poisson_counts(sino, photon_count, seed)?;
    let values = counts
        .into_iter()
        .map(|c| -(c.max(1.0) / photon_count).ln())
        .collect();
    Ok(sino.with_values(values))
}

/// Adds i.i.d. `N(0, σ²)` noise to every bin of `⌊p·D⌋` detector columns
/// chosen uniformly without replacement. Returns the sinogram and the sorted
/// corrupted columns.
pub fn apply_ring_artifact(
    sino: &Sinogram,
    ring_fraction: f64,
    sigma_sq: f64,
    seed: u64,
) -> Result<(Sinogram, Vec<usize>)> {
    if !(0.0..1.0).contains(&ring_fraction) {
        return Err(invalid("ring fraction must lie in [0, 1)"));
    }
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(invalid("ring variance must be finite and >= 0"));
    }
    let d = sino.detector_count();
    let n_cols = (ring_fraction * d as f64).floor() as usize;
    if n_cols == 0 {
        return Ok((sino.clone(), Vec::new()));
    }
    let mut columns = sample(&mut stream_rng(seed, STREAM_RING_COLUMNS), d, n_cols).into_vec();
    columns.sort_unstable();
    let normal = Normal::new(0.0, sigma_sq.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let mut values = sino.values.clone();
    for &col in &columns {
        let mut rng = stream_rng(seed, STREAM_RING_NOISE + col as u64);
        for a in 0..sino.n_angles() {
            values[a * d + col] += normal.sample(&mut rng);
        }
    }
    Ok((sino.with_values(values), columns))
}

/// Indices of `n_keep` evenly spaced views among those inside `range`.
pub fn subsample_indices(
    angles: &[f64],
    n_keep: usize,
    range: Option<(f64, f64)>,
) -> Result<Vec<usize>> {
    if n_keep == 0 {
        return Err(invalid("n_keep must be > 0"));
    }
    let candidates: Vec<usize> = match range {
        Some((lo, hi)) => (0..angles.len())
            .filter(|&i| angles[i] >= lo && angles[i] < hi)
            .collect(),
        None => (0..angles.len()).collect(),
    };
    if n_keep > candidates.len() {
        return Err(invalid(format!(
            "cannot keep {n_keep} of {} available angles",
            candidates.len()
        )));
    }
    let m = candidates.len();
    Ok((0..n_keep).map(|j| candidates[j * m / n_keep]).collect())
}

/// Keeps `n_keep` evenly spaced views within `range` (all views when `None`).
pub fn subsample_angles(
    sino: &Sinogram,
    n_keep: usize,
    range: Option<(f64, f64)>,
) -> Result<Sinogram> {
    let idx = subsample_indices(&sino.geometry.angles, n_keep, range)?;
    let d = sino.detector_count();
    let mut values = Vec::with_capacity(idx.len() * d);
    for &a in &idx {
        values.extend_from_slice(sino.row(a));
    }
    let geometry = ProjectionGeometry {
        angles: idx.iter().map(|&a| sino.geometry.angles[a]).collect(),
        ..sino.geometry.clone()
    };
    Sinogram::from_values(geometry, values)
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Output of [`simulate_measurements`].
#[derive(Debug, Clone)]
pub struct SimulatedMeasurement {
    /// Noise-free sinogram on the subsampled geometry.
    pub clean: Sinogram,
    /// Corrupted sinogram, in the same units as `clean`.
    pub observed: Sinogram,
    /// Absorption scale applied before the photon noise, if any.
    pub gamma: Option<f64>,
    pub ring_columns: Vec<usize>,
}

/// Runs the fixed pipeline subsample → scale → Poisson → ring on a dense
/// clean sinogram. When absorption scaling is active the observation is
/// divided by `γ` at the end, inverting the Beer–Lambert scaling so that the
/// result is comparable to `A x`.
pub fn simulate_measurements(dense: &Sinogram, config: &SimulationConfig) -> Result<SimulatedMeasurement> {
    config.validate()?;
    let clean = subsample_angles(dense, config.n_angles, Some(config.angular_range))?;
    let (mut working, gamma) = match config.target_absorption {
        Some(t) => {
            let (s, g) = scale_to_absorption(&clean, t)?;
            (s, Some(g))
        }
        None => (clean.clone(), None),
    };
    let reference_variance = variance(&working.values);
    if let Some(i0) = config.photon_count {
        working = apply_poisson_noise(&working, i0, config.rng_seed)?;
    }
    let mut ring_columns = Vec::new();
    if config.has_rings() {
        let sigma_sq = match config.ring_variance {
            RingVariance::RelativeToClean(f) => f * reference_variance,
            RingVariance::Absolute(v) => v,
        };
        let (s, cols) = apply_ring_artifact(
            &working,
            config.ring_fraction,
            sigma_sq,
            config.rng_seed.wrapping_add(0x9e37_79b9),
        )?;
        working = s;
        ring_columns = cols;
    }
    if let Some(g) = gamma {
        working.values.iter_mut().for_each(|v| *v /= g);
    }
    if working.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simulated sinogram".into()));
    }
    Ok(SimulatedMeasurement {
        clean,
        observed: working,
        gamma,
        ring_columns,
    })
}
