use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// How the ring-artifact variance is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RingVariance {
    /// `σ² = factor · Var(y₀)` over all bins of the clean sinogram.
    RelativeToClean(f64),
    Absolute(f64),
}

/// Measurement-corruption settings for one benchmark configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_angles: usize,
    pub angular_range: (f64, f64),
    /// Mean absorption `mean(1 - exp(-γ y₀))` to scale to before adding noise.
    pub target_absorption: Option<f64>,
    /// Incident photon count `I₀`.
    pub photon_count: Option<f64>,
    /// Fraction of detector columns with fixed-pattern noise.
    pub ring_fraction: f64,
    pub ring_variance: RingVariance,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_angles: 40,
            angular_range: (0.0, PI),
            target_absorption: None,
            photon_count: None,
            ring_fraction: 0.0,
            ring_variance: RingVariance::RelativeToClean(0.0),
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 {
            return Err(invalid("n_angles must be > 0"));
        }
        let (a, b) = self.angular_range;
        if !(a >= 0.0 && b > a && b <= 2.0 * PI) {
            return Err(invalid("angular_range must satisfy 0 <= start < end <= 2π"));
        }
        if let Some(t) = self.target_absorption {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid("target_absorption must lie in (0, 1)"));
            }
        }
        if let Some(i0) = self.photon_count {
            if !(i0 > 0.0 && i0.is_finite()) {
                return Err(invalid("photon_count must be positive"));
            }
            if self.target_absorption.is_none() {
                return Err(invalid(
                    "photon_count requires target_absorption (scaling precedes noise)",
                ));
            }
        }
        if !(0.0..1.0).contains(&self.ring_fraction) {
            return Err(invalid("ring_fraction must lie in [0, 1)"));
        }
        let v = match self.ring_variance {
            RingVariance::RelativeToClean(v) | RingVariance::Absolute(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid("ring variance must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn has_noise(&self) -> bool {
        self.photon_count.is_some()
    }

    pub fn has_rings(&self) -> bool {
        self.ring_fraction > 0.0
    }
}

/// The five benchmark configurations.
///
/// | id  | angles | range     | absorption | I₀     | p_ring | σ²          |
/// |-----|--------|-----------|------------|--------|--------|-------------|
/// | i   | 40     | [0, π)    | –          | –      | –      | –           |
/// | ii  | 20     | [0, π)    | 50%        | 10000  | –      | –           |
/// | iii | 80     | [0, π)    | 50%        | 5000   | –      | –           |
/// | iv  | 80     | [0, π)    | 50%        | 10000  | 0.05   | 0.25·σ²_y₀  |
/// | v   | 40     | [0, 3π/4) | –          | –      | –      | –           |
pub fn builtin_config(id: &str) -> Result<SimulationConfig> {
    let base = SimulationConfig::default();
    let cfg = match id.trim().to_ascii_lowercase().as_str() {
        "i" | "1" => SimulationConfig {
            n_angles: 40,
            ..base
        },
        "ii" | "2" => SimulationConfig {
            n_angles: 20,
            target_absorption: Some(0.5),
            photon_count: Some(10_000.0),
            ..base
        },
        "iii" | "3" => SimulationConfig {
            n_angles: 80,
            target_absorption: Some(0.5),
            photon_count: Some(5_000.0),
            ..base
        },
        "iv" | "4" => SimulationConfig {
            n_angles: 80,
            target_absorption: Some(0.5),
            photon_count: Some(10_000.0),
            ring_fraction: 0.05,
            ring_variance: RingVariance::RelativeToClean(0.25),
            ..base
        },
        "v" | "5" => SimulationConfig {
            n_angles: 40,
            angular_range: (0.0, 0.75 * PI),
            ..base
        },
        other => {
            return Err(Error::Unknown {
                what: "simulation config",
                name: other.to_string(),
            })
        }
    };
    Ok(cfg)
}
