use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::operator::FilterKind;
use crate::prior::JacobianMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Unconditional generation.
    None,
    /// Gradient of `∥A x̂₀(x_t) − y∥²` applied after each reverse step.
    DcGrad,
    /// Inner gradient descent on `∥Ax − y∥²` starting from each `x̂₀`.
    DcOpt,
    /// Gradient of the image-space residual `∥A†(A x̂₀ − y)∥²`.
    PseudoInv,
    /// Alternating data solve and denoising.
    PnP,
    /// Optimization of a variational mean against data fit and score residual.
    VarBayes,
    /// Conjugate-gradient proximal solve on each `x̂₀`.
    Dds,
    /// Optimization of the seed of a short deterministic chain.
    DmPlug,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Self::None,
        Self::DcGrad,
        Self::DcOpt,
        Self::PseudoInv,
        Self::PnP,
        Self::VarBayes,
        Self::Dds,
        Self::DmPlug,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::DcGrad => "dcgrad",
            Self::DcOpt => "dcopt",
            Self::PseudoInv => "pseudoinv",
            Self::PnP => "pnp",
            Self::VarBayes => "varbayes",
            Self::Dds => "dds",
            Self::DmPlug => "dmplug",
        }
    }

    /// Strategies that run the reverse-diffusion loop.
    pub fn is_chain(self) -> bool {
        matches!(
            self,
            Self::None | Self::DcGrad | Self::DcOpt | Self::PseudoInv | Self::Dds
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        let found = match key.as_str() {
            "none" | "unconditional" => Self::None,
            "dcgrad" | "dps" => Self::DcGrad,
            "dcopt" => Self::DcOpt,
            "pseudoinv" | "pinv" | "pigdm" => Self::PseudoInv,
            "pnp" => Self::PnP,
            "varbayes" | "reddiff" => Self::VarBayes,
            "dds" => Self::Dds,
            "dmplug" => Self::DmPlug,
            _ => {
                return Err(Error::Unknown {
                    what: "strategy",
                    name: s.into(),
                })
            }
        };
        Ok(found)
    }
}

/// Approximate pseudoinverse used by [`Strategy::PseudoInv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinvKind {
    Fbp(FilterKind),
    /// SIRT run for the given number of iterations from zero.
    Sirt(usize),
}

impl FromStr for PinvKind {
    type Err = Error;

    /// `fbp`, `fbp:hann` or `sirt:<iterations>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, tail) = lower.split_once(':').unwrap_or((&lower, ""));
        match head {
            "fbp" if tail.is_empty() => Ok(Self::Fbp(FilterKind::RamLak)),
            "fbp" => Ok(Self::Fbp(tail.parse()?)),
            "sirt" => {
                let k = if tail.is_empty() {
                    20
                } else {
                    tail.parse()
                        .map_err(|_| invalid(format!("bad SIRT iteration count {tail}")))?
                };
                if k == 0 {
                    return Err(invalid("SIRT pseudoinverse needs at least one iteration"));
                }
                Ok(Self::Sirt(k))
            }
            _ => Err(Error::Unknown {
                what: "pseudoinverse",
                name: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Ancestral sampling from `q(x_{t'} | x_t, x̂₀)`.
    Ddpm,
    /// DDIM interpolation with stochasticity `ddim_eta`.
    Ddim,
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ddpm" => Ok(Self::Ddpm),
            "ddim" => Ok(Self::Ddim),
            _ => Err(Error::Unknown {
                what: "sampler",
                name: s.into(),
            }),
        }
    }
}

/// Diagonal of the DDS likelihood weighting `R`.
#[derive(Debug, Clone, PartialEq)]
pub enum DdsWeights {
    Uniform,
    Fixed(Vec<f64>),
    /// Inverse photon-noise variance `∝ exp(−γ_a (Ax)_i)`, re-evaluated at each
    /// `x̂₀` and normalized to mean 1. `absorption` is the factor that mapped
    /// the sinogram to line integrals before noise was drawn.
    Poisson { absorption: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBayesParams {
    pub lambda_data: f64,
    pub lambda_score: f64,
    /// Step size; `None` picks `1 / L` from the operator norm and prior curvature.
    pub lr: Option<f64>,
    /// Correlation `c` of successive noise draws, `ε ← cε + √(1−c²)ε'`.
    pub hybrid: Option<f64>,
}

impl Default for VarBayesParams {
    fn default() -> Self {
        Self {
            lambda_data: 1.0,
            lambda_score: 0.25,
            lr: None,
            hybrid: None,
        }
    }
}

/// Everything that configures one conditional-sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSpec {
    pub strategy: Strategy,
    pub sampler: Sampler,
    /// Number of reverse steps (or sweep stages for PnP and VarBayes).
    pub steps: usize,
    pub ddim_eta: f64,
    /// Guidance step size for DcGrad and PseudoInv.
    pub eta: f64,
    /// Inner iterations for DcOpt, PnP, VarBayes and DMPlug.
    pub inner_iters: usize,
    /// Inner step size; `None` means `1.8 / ∥A∥²`.
    pub lr: Option<f64>,
    pub pinv_kind: PinvKind,
    /// Apply the pseudoinverse correction `√ᾱ' A†(y − A x̂₀)` after the gradient step.
    pub single_step: bool,
    /// Weight of `A†y` when blending the initial noise for PseudoInv.
    pub pinv_blend: f64,
    pub dds_gamma: f64,
    pub dds_weights: DdsWeights,
    /// CG budget per DDS solve; `None` solves to tolerance within one step per pixel.
    pub dds_cg_iters: Option<usize>,
    /// Denoiser weight per PnP stage; 0 reduces PnP to plain descent.
    pub pnp_weight: f64,
    pub varbayes: VarBayesParams,
    /// Length of the DDIM chain optimized by DMPlug.
    pub dmplug_chain: usize,
    pub jacobian: JacobianMode,
    /// Keep `x_t` and `x̂₀` in every trajectory record.
    pub record_snapshots: bool,
    pub seed: u64,
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            sampler: Sampler::Ddim,
            steps: 50,
            ddim_eta: 0.0,
            eta: 1.0,
            inner_iters: 10,
            lr: None,
            pinv_kind: PinvKind::Fbp(FilterKind::RamLak),
            single_step: false,
            pinv_blend: 0.5,
            dds_gamma: 1.0,
            dds_weights: DdsWeights::Uniform,
            dds_cg_iters: None,
            pnp_weight: 1.0,
            varbayes: VarBayesParams::default(),
            dmplug_chain: 3,
            jacobian: JacobianMode::Exact,
            record_snapshots: false,
            seed: 0,
        }
    }
}

impl GuidanceSpec {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !finite_nonneg(self.eta) {
            return Err(invalid("eta must be finite and >= 0"));
        }
        if self.steps == 0 {
            return Err(invalid("steps must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.ddim_eta) {
            return Err(invalid("ddim_eta must lie in [0, 1]"));
        }
        let needs_inner = matches!(
            self.strategy,
            Strategy::DcOpt | Strategy::PnP | Strategy::VarBayes | Strategy::DmPlug
        );
        if needs_inner && self.inner_iters == 0 {
            return Err(invalid(format!("{} needs inner_iters >= 1", self.strategy)));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid("lr must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.pinv_blend) {
            return Err(invalid("pinv_blend must lie in [0, 1]"));
        }
        if !finite_nonneg(self.dds_gamma) {
            return Err(invalid("dds_gamma must be finite and >= 0"));
        }
        if let DdsWeights::Poisson { absorption } = self.dds_weights {
            if !(absorption > 0.0 && absorption.is_finite()) {
                return Err(invalid("Poisson weighting needs a positive absorption factor"));
            }
        }
        if !(0.0..=1.0).contains(&self.pnp_weight) {
            return Err(invalid("pnp_weight must lie in [0, 1]"));
        }
        let vb = &self.varbayes;
        if !finite_nonneg(vb.lambda_data) || !finite_nonneg(vb.lambda_score) {
            return Err(invalid("variational weights must be finite and >= 0"));
        }
        if let Some(c) = vb.hybrid {
            if !(0.0..1.0).contains(&c) {
                return Err(invalid("hybrid correlation must lie in [0, 1)"));
            }
        }
        if self.dmplug_chain == 0 {
            return Err(invalid("dmplug_chain must be >= 1"));
        }
        Ok(())
    }
}
