//! Experiment plans and single-cell execution.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::guidance::{
    sample_reconstruct, DdsWeights, GuidanceSpec, PinvKind, Problem, Sampler, Strategy,
    Trajectory,
};
use crate::harness::config::{Config, Section};
use crate::harness::io::load_image;
use crate::harness::phantom::{generate_phantom, parse_ellipse_spec, variant_images, PhantomKind};
use crate::mbir::{admm_tv_with, fista_tv_with, TvSpec};
use crate::operator::{
    FilterKind, Fbp, ImageGrid, ImageShape, LinearOperator, ProjectionGeometry, Projector, Sinogram,
    Sirt,
};
use crate::prior::{
    linear_beta_schedule, GaussianMixture, GaussianPrior, JacobianMode, MixtureComponent, NoiseSchedule, ScorePrior,
    DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS,
};
use crate::simulate::{
    builtin_config, simulate_measurements, unit_range_coefficients, RingVariance,
    SimulatedMeasurement, SimulationConfig,
};

/// A reconstruction method and its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    Fbp(FilterKind),
    Sirt { iterations: usize, nonneg: bool },
    FistaTv(TvSpec),
    AdmmTv(TvSpec),
    /// `poisson_auto` derives the DDS Poisson weights from the simulated
    /// absorption scale of each measurement.
    Guidance { spec: GuidanceSpec, poisson_auto: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, kind: MethodKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// Builds a method from its family name: `fbp`, `sirt`, `fista-tv`,
    /// `admm-tv`, or any guidance strategy name.
    pub fn from_family(name: impl Into<String>, family: &str) -> Result<Self> {
        let kind = match family.trim().to_ascii_lowercase().as_str() {
            "fbp" => MethodKind::Fbp(FilterKind::RamLak),
            "sirt" => MethodKind::Sirt {
                iterations: 200,
                nonneg: false,
            },
            "fista-tv" | "fista" => MethodKind::FistaTv(TvSpec::fista()),
            "admm-tv" | "admm" => MethodKind::AdmmTv(TvSpec::admm()),
            other => MethodKind::Guidance {
                spec: GuidanceSpec::new(Strategy::from_str(other).map_err(|_| Error::Unknown {
                    what: "method",
                    name: other.into(),
                })?),
                poisson_auto: false,
            },
        };
        Ok(Self::new(name, kind))
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        let name = section
            .name
            .clone()
            .ok_or_else(|| section.error("name", "method sections need a name: [method.<name>]"))?;
        let family = section
            .raw("kind")
            .or_else(|| section.raw("strategy"))
            .unwrap_or(&name)
            .to_string();
        let mut spec = Self::from_family(name, &family).map_err(|e| section.error("kind", e))?;
        for entry in &section.entries {
            if entry.key == "kind" {
                continue;
            }
            spec.set(&entry.key, &entry.value).map_err(|e| Error::Config {
                line: entry.line,
                message: format!("{}.{}: {e}", section.label(), entry.key),
            })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            MethodKind::Fbp(_) => Ok(()),
            MethodKind::Sirt { iterations, .. } => {
                if *iterations == 0 {
                    Err(invalid("SIRT needs at least one iteration"))
                } else {
                    Ok(())
                }
            }
            MethodKind::FistaTv(tv) | MethodKind::AdmmTv(tv) => tv.validate(),
            MethodKind::Guidance { spec, .. } => spec.validate(),
        }
    }

    /// Sets one hyperparameter from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match &mut self.kind {
            MethodKind::Fbp(filter) => match key {
                "filter" => *filter = v.parse()?,
                _ => return Err(unknown_key(key)),
            },
            MethodKind::Sirt { iterations, nonneg } => match key {
                "iterations" => *iterations = num(v)?,
                "nonneg" => *nonneg = flag(v)?,
                _ => return Err(unknown_key(key)),
            },
            MethodKind::FistaTv(tv) | MethodKind::AdmmTv(tv) => match key {
                "lambda" => tv.lambda = num(v)?,
                "outer_iters" | "iterations" => tv.outer_iters = num(v)?,
                "prox_iters" => tv.prox_iters = num(v)?,
                "nonneg" => tv.nonneg = flag(v)?,
                "rho" => tv.rho = num(v)?,
                "adaptive_rho" => tv.adaptive_rho = flag(v)?,
                _ => return Err(unknown_key(key)),
            },
            MethodKind::Guidance { spec, poisson_auto } => match key {
                "strategy" => spec.strategy = v.parse()?,
                "sampler" => spec.sampler = v.parse::<Sampler>()?,
                "steps" => spec.steps = num(v)?,
                "ddim_eta" => spec.ddim_eta = num(v)?,
                "eta" => spec.eta = num(v)?,
                "inner_iters" => spec.inner_iters = num(v)?,
                "lr" => spec.lr = optional(v)?,
                "pinv" | "pinv_kind" => spec.pinv_kind = v.parse::<PinvKind>()?,
                "single_step" => spec.single_step = flag(v)?,
                "pinv_blend" => spec.pinv_blend = num(v)?,
                "dds_gamma" | "gamma" => spec.dds_gamma = num(v)?,
                "dds_weights" => {
                    let lower = v.to_ascii_lowercase();
                    let (head, tail) = lower.split_once(':').unwrap_or((&lower, ""));
                    *poisson_auto = false;
                    spec.dds_weights = match (head, tail) {
                        ("uniform", "") => DdsWeights::Uniform,
                        ("poisson", "") => {
                            *poisson_auto = true;
                            DdsWeights::Uniform
                        }
                        ("poisson", a) => DdsWeights::Poisson {
                            absorption: num(a)?,
                        },
                        _ => {
                            return Err(Error::Unknown {
                                what: "DDS weighting",
                                name: v.into(),
                            })
                        }
                    };
                }
                "dds_cg_iters" => spec.dds_cg_iters = optional(v)?,
                "pnp_weight" => spec.pnp_weight = num(v)?,
                "lambda_data" => spec.varbayes.lambda_data = num(v)?,
                "lambda_score" => spec.varbayes.lambda_score = num(v)?,
                "vb_lr" => spec.varbayes.lr = optional(v)?,
                "hybrid" => spec.varbayes.hybrid = optional(v)?,
                "dmplug_chain" => spec.dmplug_chain = num(v)?,
                "jacobian" => {
                    spec.jacobian = match v.to_ascii_lowercase().as_str() {
                        "exact" => JacobianMode::Exact,
                        "identity" => JacobianMode::Identity,
                        _ => {
                            return Err(Error::Unknown {
                                what: "jacobian mode",
                                name: v.into(),
                            })
                        }
                    }
                }
                _ => return Err(unknown_key(key)),
            },
        }
        Ok(())
    }

    /// Copy with one numeric hyperparameter replaced.
    pub fn with_param(&self, key: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let text = if value.fract() == 0.0 && value.abs() < 1e15 {
            format!("{}", value as i64)
        } else {
            format!("{value:?}")
        };
        out.set(key, &text)?;
        out.validate()?;
        Ok(out)
    }

    pub fn needs_prior(&self) -> bool {
        matches!(self.kind, MethodKind::Guidance { .. })
    }
}

fn unknown_key(key: &str) -> Error {
    Error::Unknown {
        what: "method parameter",
        name: key.into(),
    }
}

fn num<T: FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(format!("cannot parse {v:?}: {e}")))
}

fn optional<T: FromStr>(v: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match v.to_ascii_lowercase().as_str() {
        "" | "none" | "auto" | "default" => Ok(None),
        _ => num(v).map(Some),
    }
}

fn flag(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(format!("expected a boolean, got {v:?}"))),
    }
}

/// An analytic score prior together with the affine map `a·x + b` from
/// attenuation values to the prior's normalized range.
#[derive(Clone)]
pub struct TaskPrior {
    pub prior: ScorePrior,
    pub scale: f64,
    pub offset: f64,
}

impl TaskPrior {
    pub fn identity(prior: ScorePrior) -> Self {
        Self {
            prior,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl std::fmt::Debug for TaskPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskPrior")
            .field("len", &self.prior.len())
            .field("scale", &self.scale)
            .field("offset", &self.offset)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorFamily {
    /// One Gaussian with per-pixel mean and variance.
    Gaussian,
    /// Equal-weight mixture centred on each training image.
    Kde { bandwidth: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSettings {
    pub family: PriorFamily,
    /// Phantom family the training variants are drawn from.
    pub source: PhantomKind,
    pub training: usize,
    pub variance_floor: f64,
    /// Map the training range to `[-1, 1]`.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            family: PriorFamily::Gaussian,
            source: PhantomKind::ModifiedSheppLogan,
            training: 32,
            variance_floor: 1e-3,
            normalize: true,
            seed: 1_000_000,
        }
    }
}

/// Per-pixel sample mean and (population) variance plus `floor`.
pub fn fit_gaussian(samples: &[ImageGrid], floor: f64) -> Result<GaussianPrior> {
    let first = samples.first().ok_or_else(|| invalid("no training samples"))?;
    let n = first.values.len();
    if samples.iter().any(|s| s.shape != first.shape) {
        return Err(Error::ShapeMismatch("training samples differ in shape".into()));
    }
    let k = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        mean.iter_mut().zip(&s.values).for_each(|(m, v)| *m += v / k);
    }
    let mut var = vec![floor; n];
    for s in samples {
        for ((w, v), m) in var.iter_mut().zip(&s.values).zip(&mean) {
            *w += (v - m).powi(2) / k;
        }
    }
    GaussianPrior::new(mean, var)
}

/// Draws training variants and fits the requested prior to them.
pub fn fit_prior(shape: ImageShape, settings: &PriorSettings) -> Result<TaskPrior> {
    if shape.width != shape.height {
        return Err(invalid("prior fitting needs a square image"));
    }
    if settings.training < 2 {
        return Err(invalid("prior fitting needs at least two training images"));
    }
    let raw = variant_images(&settings.source, shape.width, settings.training, settings.seed)?;
    let (scale, offset) = if settings.normalize {
        let lo = raw.iter().map(|g| g.min_max().0).fold(f64::INFINITY, f64::min);
        let hi = raw.iter().map(|g| g.min_max().1).fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = unit_range_coefficients(lo, hi)?;
        (1.0 / a, -b / a)
    } else {
        (1.0, 0.0)
    };
    let train: Vec<ImageGrid> = raw.iter().map(|g| g.map(|v| scale * v + offset)).collect();
    let prior = match settings.family {
        PriorFamily::Gaussian => ScorePrior::Gaussian(fit_gaussian(&train, settings.variance_floor)?),
        PriorFamily::Kde { bandwidth } => {
            if !(bandwidth > 0.0) {
                return Err(invalid("KDE bandwidth must be positive"));
            }
            let w = 1.0 / train.len() as f64;
            let comps = train
                .iter()
                .map(|g| MixtureComponent {
                    weight: w,
                    mean: g.values.clone(),
                    variance: vec![bandwidth * bandwidth; g.values.len()],
                })
                .collect();
            ScorePrior::Mixture(GaussianMixture::new(comps)?)
        }
    };
    Ok(TaskPrior {
        prior,
        scale,
        offset,
    })
}

/// Everything a cell needs besides the method and the ground truth.
#[derive(Debug, Clone)]
pub struct Task {
    pub shape: ImageShape,
    /// Views of the dense acquisition that configurations subsample.
    pub dense_angles: usize,
    pub schedule: NoiseSchedule,
    pub prior: Option<TaskPrior>,
}

impl Task {
    pub fn new(shape: ImageShape) -> Self {
        Self {
            shape,
            dense_angles: 360,
            schedule: NoiseSchedule::default(),
            prior: None,
        }
    }
}

/// Observation of one ground truth under one configuration.
#[derive(Debug, Clone)]
pub struct Observation {
    pub projector: Projector,
    pub measurement: SimulatedMeasurement,
}

impl Observation {
    pub fn observed(&self) -> &Sinogram {
        &self.measurement.observed
    }
}

/// Projects `truth` on the dense geometry and runs the corruption pipeline.
pub fn measure(task: &Task, truth: &ImageGrid, config: &SimulationConfig) -> Result<Observation> {
    if truth.shape != task.shape {
        return Err(Error::ShapeMismatch(format!(
            "ground truth is {}x{}, task expects {}x{}",
            truth.shape.width, truth.shape.height, task.shape.width, task.shape.height
        )));
    }
    let dense_geom = ProjectionGeometry::covering(task.shape, task.dense_angles)?;
    let dense = Projector::new(task.shape, dense_geom)?.forward(truth)?;
    let measurement = simulate_measurements(&dense, config)?;
    let projector = Projector::new(task.shape, measurement.observed.geometry.clone())?;
    Ok(Observation {
        projector,
        measurement,
    })
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub image: ImageGrid,
    pub trajectory: Option<Trajectory>,
}

/// Runs `method` on an observation. Guidance methods work in the prior's
/// normalized range and the result is mapped back.
pub fn reconstruct(task: &Task, method: &MethodSpec, obs: &Observation, seed: u64) -> Result<MethodOutput> {
    let projector = &obs.projector;
    let y = obs.observed();
    let shape = task.shape;
    let image = |values| ImageGrid::from_values(shape, values);
    match &method.kind {
        MethodKind::Fbp(filter) => Ok(MethodOutput {
            image: Fbp::new(shape, y.geometry.clone(), *filter)?.reconstruct(y)?,
            trajectory: None,
        }),
        MethodKind::Sirt { iterations, nonneg } => {
            let values = Sirt::new(projector).run(&vec![0.0; shape.len()], &y.values, *iterations, *nonneg);
            Ok(MethodOutput {
                image: image(values)?,
                trajectory: None,
            })
        }
        MethodKind::FistaTv(tv) => Ok(MethodOutput {
            image: fista_tv_with(projector, &y.values, tv, None)?.image,
            trajectory: None,
        }),
        MethodKind::AdmmTv(tv) => Ok(MethodOutput {
            image: admm_tv_with(projector, &y.values, tv, None)?.image,
            trajectory: None,
        }),
        MethodKind::Guidance { spec, poisson_auto } => {
            let tp = task
                .prior
                .as_ref()
                .ok_or_else(|| invalid(format!("method {} needs a prior", method.name)))?;
            let ones = projector.apply(&vec![1.0; shape.len()]);
            let y_norm: Vec<f64> = y
                .values
                .iter()
                .zip(&ones)
                .map(|(v, o)| tp.scale * v + tp.offset * o)
                .collect();
            let mut spec = spec.clone();
            spec.seed = seed;
            if *poisson_auto {
                spec.dds_weights = DdsWeights::Poisson {
                    absorption: obs.measurement.gamma.unwrap_or(1.0) / tp.scale,
                };
            }
            let problem = Problem::from_values(projector, &tp.prior, &task.schedule, &y_norm)?;
            let rec = sample_reconstruct(&problem, &spec)?;
            let values = rec
                .image
                .values
                .iter()
                .map(|v| (v - tp.offset) / tp.scale)
                .collect();
            Ok(MethodOutput {
                image: image(values)?,
                trajectory: Some(rec.trajectory),
            })
        }
    }
}

/// Rough size of the iteration state a method keeps, in bytes.
pub fn state_bytes(method: &MethodSpec, image_len: usize, sino_len: usize) -> u64 {
    let (images, sinos) = match &method.kind {
        MethodKind::Fbp(_) => (1, 3),
        MethodKind::Sirt { .. } => (3, 3),
        MethodKind::FistaTv(_) => (9, 2),
        MethodKind::AdmmTv(_) => (10, 2),
        MethodKind::Guidance { spec, .. } => match spec.strategy {
            Strategy::None => (4, 0),
            Strategy::DcGrad | Strategy::PseudoInv => (8, 2),
            Strategy::DcOpt => (7, 2),
            Strategy::Dds => (10, 3),
            Strategy::PnP => (5, 2),
            Strategy::VarBayes => (9, 2),
            Strategy::DmPlug => (6 + 2 * spec.dmplug_chain, 2),
        },
    };
    8 * (images * image_len + sinos * sino_len) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
    DataFit,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "psnr" => Ok(Self::Psnr),
            "ssim" => Ok(Self::Ssim),
            "data_fit" | "datafit" => Ok(Self::DataFit),
            _ => Err(Error::Unknown {
                what: "metric",
                name: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSource {
    Kind(PhantomKind),
    /// A raw image file.
    File(PathBuf),
}

/// Tuning request from the `[tune]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneRequest {
    pub method: String,
    pub param: String,
    pub values: Vec<f64>,
    pub config: String,
    pub holdouts: usize,
}

/// The benchmark matrix and everything needed to run it.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub phantom: PhantomSource,
    pub size: usize,
    pub configs: Vec<(String, SimulationConfig)>,
    pub methods: Vec<MethodSpec>,
    pub metrics: Vec<Metric>,
    pub output: PathBuf,
    pub seed: u64,
    pub repeats: usize,
    pub dense_angles: usize,
    pub schedule: NoiseSchedule,
    pub prior: PriorSettings,
    pub workers: Option<usize>,
    pub save_images: bool,
    pub save_trajectories: bool,
    pub save_nullspace: bool,
    pub tune: Option<TuneRequest>,
}

impl ExperimentPlan {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let root = cfg.root();
        let phantom_sec = cfg.section_or_empty("phantom");
        let phantom = if let Some(path) = phantom_sec.raw("path") {
            PhantomSource::File(path.into())
        } else if let Some(path) = phantom_sec.raw("ellipses") {
            let text = std::fs::read_to_string(path)?;
            PhantomSource::Kind(PhantomKind::Ellipses(parse_ellipse_spec(&text)?))
        } else {
            let kind = phantom_sec.raw("kind").unwrap_or("modified-shepp-logan");
            PhantomSource::Kind(PhantomKind::parse(kind).map_err(|e| phantom_sec.error("kind", e))?)
        };
        let size = phantom_sec.parse_or("size", 64usize)?;
        let seed = root.parse_or("seed", 0u64)?;

        let sim = cfg.section_or_empty("simulation");
        let ids = sim.list("configs").unwrap_or_else(|| {
            let custom: Vec<String> = cfg.sections_of("config").filter_map(|s| s.name.clone()).collect();
            if custom.is_empty() {
                vec!["i".into()]
            } else {
                custom
            }
        });
        let mut configs = Vec::new();
        for id in ids {
            let config = match cfg.section("config", Some(&id)) {
                Some(sec) => custom_config(sec)?,
                None => builtin_config(&id).map_err(|e| sim.error("configs", e))?,
            };
            configs.push((id, config));
        }

        let mut methods = Vec::new();
        for sec in cfg.sections_of("method") {
            methods.push(MethodSpec::from_section(sec)?);
        }

        let metrics = match root.list("metrics") {
            Some(list) => list
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<Metric>>>()
                .map_err(|e| root.error("metrics", e))?,
            None => vec![Metric::Psnr, Metric::Ssim, Metric::DataFit],
        };

        let sched = cfg.section_or_empty("schedule");
        let schedule = linear_beta_schedule(
            sched.parse_or("steps", DEFAULT_STEPS)?,
            sched.parse_or("beta_min", DEFAULT_BETA_MIN)?,
            sched.parse_or("beta_max", DEFAULT_BETA_MAX)?,
        )
        .map_err(|e| sched.error("steps", e))?;

        let pr = cfg.section_or_empty("prior");
        let family = match pr.raw("kind").unwrap_or("gaussian") {
            "gaussian" => PriorFamily::Gaussian,
            "kde" => PriorFamily::Kde {
                bandwidth: pr.parse_or("bandwidth", 0.1)?,
            },
            other => return Err(pr.error("kind", format!("unknown prior kind {other:?}"))),
        };
        let source = match (pr.raw("phantom"), &phantom) {
            (Some(k), _) => PhantomKind::parse(k).map_err(|e| pr.error("phantom", e))?,
            (None, PhantomSource::Kind(k)) => k.clone(),
            (None, PhantomSource::File(_)) => PhantomKind::ModifiedSheppLogan,
        };
        let defaults = PriorSettings::default();
        let prior = PriorSettings {
            family,
            source,
            training: pr.parse_or("training", defaults.training)?,
            variance_floor: pr.parse_or("variance_floor", defaults.variance_floor)?,
            normalize: pr.parse_or::<String>("normalize", "true".into()).and_then(|v| flag(&v))?,
            seed: pr.parse_or("seed", defaults.seed ^ seed)?,
        };

        let tune = cfg
            .section("tune", None)
            .map(|t| -> Result<TuneRequest> {
                let method = t
                    .raw("method")
                    .map(String::from)
                    .or_else(|| methods.first().map(|m| m.name.clone()))
                    .ok_or_else(|| t.error("method", "no method to tune"))?;
                let values = t
                    .list("values")
                    .ok_or_else(|| t.error("values", "missing grid values"))?
                    .iter()
                    .map(|v| num::<f64>(v))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| t.error("values", e))?;
                Ok(TuneRequest {
                    method,
                    param: t.raw("param").unwrap_or("eta").into(),
                    values,
                    config: t
                        .raw("config")
                        .map(String::from)
                        .or_else(|| configs.first().map(|c| c.0.clone()))
                        .unwrap_or_else(|| "i".into()),
                    holdouts: t.parse_or("holdouts", 10usize)?,
                })
            })
            .transpose()?;

        let plan = Self {
            phantom,
            size,
            configs,
            methods,
            metrics,
            output: root.raw("output").unwrap_or("out").into(),
            seed,
            repeats: root.parse_or("repeats", 1usize)?,
            dense_angles: root.parse_or("dense_angles", 360usize)?,
            schedule,
            prior,
            workers: root.parse("workers")?,
            save_images: root.parse_or::<String>("save_images", "true".into()).and_then(|v| flag(&v))?,
            save_trajectories: root
                .parse_or::<String>("save_trajectories", "false".into())
                .and_then(|v| flag(&v))?,
            save_nullspace: root
                .parse_or::<String>("save_nullspace", "false".into())
                .and_then(|v| flag(&v))?,
            tune,
        };
        Ok(plan)
    }

    /// Checks the matrix is non-empty and consistent.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("plan needs at least one method"));
        }
        if self.configs.is_empty() {
            return Err(invalid("plan needs at least one configuration"));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats must be >= 1"));
        }
        if self.size < 16 {
            return Err(invalid("phantom size must be >= 16"));
        }
        for (id, c) in &self.configs {
            c.validate().map_err(|e| invalid(format!("config {id}: {e}")))?;
            if c.n_angles > self.dense_angles {
                return Err(invalid(format!(
                    "config {id} keeps {} views but the dense acquisition has {}",
                    c.n_angles, self.dense_angles
                )));
            }
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("method names must be unique"));
        }
        for m in &self.methods {
            m.validate()?;
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Result<ImageGrid> {
        match &self.phantom {
            PhantomSource::Kind(k) => generate_phantom(k, self.size),
            PhantomSource::File(p) => load_image(p),
        }
    }

    /// Builds the shared task, fitting a prior only when a method needs one.
    pub fn task(&self, shape: ImageShape) -> Result<Task> {
        let prior = if self.methods.iter().any(MethodSpec::needs_prior) {
            Some(fit_prior(shape, &self.prior)?)
        } else {
            None
        };
        Ok(Task {
            shape,
            dense_angles: self.dense_angles,
            schedule: self.schedule.clone(),
            prior,
        })
    }

    pub fn method(&self, name: &str) -> Result<&MethodSpec> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Unknown {
                what: "method",
                name: name.into(),
            })
    }

    pub fn config(&self, id: &str) -> Result<SimulationConfig> {
        match self.configs.iter().find(|c| c.0 == id) {
            Some((_, c)) => Ok(c.clone()),
            None => builtin_config(id),
        }
    }
}

/// A `[config <name>]` section, optionally starting from `base = <builtin id>`.
fn custom_config(sec: &Section) -> Result<SimulationConfig> {
    let mut c = match sec.raw("base") {
        Some(id) => builtin_config(id).map_err(|e| sec.error("base", e))?,
        None => SimulationConfig::default(),
    };
    if let Some(n) = sec.parse("n_angles")? {
        c.n_angles = n;
    }
    if let Some(list) = sec.list("angular_range") {
        let v: Vec<f64> = list
            .iter()
            .map(|s| num::<f64>(s))
            .collect::<Result<_>>()
            .map_err(|e| sec.error("angular_range", e))?;
        if v.len() != 2 {
            return Err(sec.error("angular_range", "expected start, end"));
        }
        c.angular_range = (v[0], v[1]);
    }
    if let Some(t) = sec.raw("target_absorption") {
        c.target_absorption = optional(t).map_err(|e| sec.error("target_absorption", e))?;
    }
    if let Some(t) = sec.raw("photon_count") {
        c.photon_count = optional(t).map_err(|e| sec.error("photon_count", e))?;
    }
    if let Some(p) = sec.parse("ring_fraction")? {
        c.ring_fraction = p;
    }
    if let Some(f) = sec.parse("ring_variance_factor")? {
        c.ring_variance = RingVariance::RelativeToClean(f);
    }
    if let Some(v) = sec.parse("ring_variance")? {
        c.ring_variance = RingVariance::Absolute(v);
    }
    if let Some(s) = sec.parse("seed")? {
        c.rng_seed = s;
    }
    c.validate().map_err(|e| Error::Config {
        line: sec.line,
        message: format!("{}: {e}", sec.label()),
    })?;
    Ok(c)
}
