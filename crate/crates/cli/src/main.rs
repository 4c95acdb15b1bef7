use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctdiff::analysis::{compute_metrics, psnr, ssim, null_space_component_with, LandweberSettings};
use ctdiff::harness::io::{geometry_sidecar, load_image, load_sinogram, parse_geometry, save_image, save_sinogram};
use ctdiff::harness::{
    grid_search, holdout_phantoms, measure, reconstruct, run_benchmark, Config, ExperimentPlan,
    Observation, PhantomSource, Section, Task,
};
use ctdiff::operator::{ImageShape, ProjectionGeometry, Projector};
use ctdiff::simulate::SimulatedMeasurement;
use ctdiff::{Error, Result};

#[derive(Parser)]
#[command(name = "ctdiff", version, about = "Sparse-view CT reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set method.dps.eta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let cfg = match &self.config {
            Some(p) => Config::from_file(p)?,
            None => Config::default(),
        };
        cfg.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the ground truth and one observed sinogram per configuration.
    Simulate(Common),
    /// Reconstruct with every configured method; `[reconstruct] input` selects a sinogram file.
    Reconstruct(Common),
    /// Split an image into range and null-space parts (`[decompose]` section).
    Decompose(Common),
    /// Grid-search one hyperparameter on held-out phantoms (`[tune]` section).
    Tune(Common),
    /// Run the method × configuration × repeat matrix and write results.csv.
    Benchmark(Common),
    /// Score a reconstruction against a reference (`[metrics]` section).
    Metrics(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => c.load().and_then(|cfg| simulate(&cfg)),
        Command::Reconstruct(c) => c.load().and_then(|cfg| reconstruct_cmd(&cfg)),
        Command::Decompose(c) => c.load().and_then(|cfg| decompose(&cfg)),
        Command::Tune(c) => c.load().and_then(|cfg| tune(&cfg)),
        Command::Benchmark(c) => c.load().and_then(|cfg| benchmark(&cfg)),
        Command::Metrics(c) => c.load().and_then(|cfg| metrics(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn required_path(sec: &Section, key: &str) -> Result<PathBuf> {
    sec.raw(key)
        .map(PathBuf::from)
        .ok_or_else(|| sec.error(key, "missing path"))
}

fn seeded(plan: &ExperimentPlan, id: &str) -> Result<ctdiff::simulate::SimulationConfig> {
    let mut c = plan.config(id)?;
    c.rng_seed = c.rng_seed.wrapping_add(plan.seed);
    Ok(c)
}

fn simulate(cfg: &Config) -> Result<()> {
    let plan = ExperimentPlan::from_config(cfg)?;
    let truth = plan.ground_truth()?;
    std::fs::create_dir_all(&plan.output)?;
    save_image(&plan.output.join("truth.raw"), &truth)?;
    let task = Task {
        dense_angles: plan.dense_angles,
        ..Task::new(truth.shape)
    };
    for (id, _) in &plan.configs {
        let obs = measure(&task, &truth, &seeded(&plan, id)?)?;
        let path = plan.output.join(format!("observed_{id}.raw"));
        save_sinogram(&path, obs.observed())?;
        println!("{id}: {} views -> {}", obs.observed().n_angles(), path.display());
    }
    Ok(())
}

fn reconstruct_cmd(cfg: &Config) -> Result<()> {
    let plan = ExperimentPlan::from_config(cfg)?;
    if plan.methods.is_empty() {
        return Err(Error::InvalidInput("no [method.<name>] tables".into()));
    }
    std::fs::create_dir_all(&plan.output)?;
    let sec = cfg.section_or_empty("reconstruct");
    let mut jobs: Vec<(String, Observation)> = Vec::new();
    let shape;
    if let Some(input) = sec.raw("input") {
        let sino = load_sinogram(Path::new(input))?;
        shape = ImageShape::square(sec.parse_or("size", plan.size)?);
        let projector = Projector::new(shape, sino.geometry.clone())?;
        let measurement = SimulatedMeasurement {
            clean: sino.clone(),
            observed: sino,
            gamma: sec.parse("gamma")?,
            ring_columns: Vec::new(),
        };
        jobs.push(("input".into(), Observation { projector, measurement }));
    } else {
        let truth = plan.ground_truth()?;
        shape = truth.shape;
        let task = Task {
            dense_angles: plan.dense_angles,
            ..Task::new(shape)
        };
        for (id, _) in &plan.configs {
            jobs.push((id.clone(), measure(&task, &truth, &seeded(&plan, id)?)?));
        }
    }
    let task = plan.task(shape)?;
    for (id, obs) in &jobs {
        for m in &plan.methods {
            let out = reconstruct(&task, m, obs, plan.seed)?;
            let path = plan.output.join(format!("{}_{id}.raw", m.name));
            save_image(&path, &out.image)?;
            if let Some(traj) = out.trajectory.filter(|_| plan.save_trajectories) {
                traj.write_csv(plan.output.join(format!("{}_{id}_trajectory.csv", m.name)))?;
            }
            println!("{} on {id} -> {}", m.name, path.display());
        }
    }
    Ok(())
}

fn decompose(cfg: &Config) -> Result<()> {
    let plan = ExperimentPlan::from_config(cfg)?;
    let sec = cfg.section_or_empty("decompose");
    let image = load_image(&required_path(&sec, "input")?)?;
    let geometry = match sec.raw("geometry") {
        Some(p) => parse_geometry(&std::fs::read_to_string(geometry_sidecar(Path::new(p)))?)?,
        None => {
            let id = sec.raw("config").unwrap_or("i");
            let c = plan.config(id)?;
            let dense = ProjectionGeometry::covering(image.shape, plan.dense_angles)?;
            let idx = ctdiff::simulate::subsample_indices(&dense.angles, c.n_angles, Some(c.angular_range))?;
            ProjectionGeometry {
                angles: idx.iter().map(|&i| dense.angles[i]).collect(),
                ..dense
            }
        }
    };
    let defaults = LandweberSettings::default();
    let settings = LandweberSettings {
        alpha: sec.parse("alpha")?,
        eps: sec.parse("eps")?,
        relative_eps: sec.parse_or("relative_eps", defaults.relative_eps)?,
        max_iterations: sec.parse_or("max_iterations", defaults.max_iterations)?,
    };
    let projector = Projector::new(image.shape, geometry)?;
    let d = null_space_component_with(&projector, &image, settings)?;
    std::fs::create_dir_all(&plan.output)?;
    save_image(&plan.output.join("x_range.raw"), &d.x_range)?;
    save_image(&plan.output.join("x_null.raw"), &d.x_null)?;
    println!(
        "null_energy_fraction={:.6e} iterations={} residual={:.3e}",
        d.null_energy_fraction, d.iterations_used, d.final_residual
    );
    Ok(())
}

fn tune(cfg: &Config) -> Result<()> {
    let plan = ExperimentPlan::from_config(cfg)?;
    let req = plan
        .tune
        .clone()
        .ok_or_else(|| Error::InvalidInput("no [tune] section".into()))?;
    let method = plan.method(&req.method)?;
    let kind = match &plan.phantom {
        PhantomSource::Kind(k) => k.clone(),
        PhantomSource::File(_) => plan.prior.source.clone(),
    };
    let holdouts = holdout_phantoms(&kind, plan.size, req.holdouts, plan.seed)?;
    let task = plan.task(ImageShape::square(plan.size))?;
    let config = seeded(&plan, &req.config)?;
    let outcome = grid_search(&task, method, &req.param, &req.values, &config, &holdouts, plan.seed)?;
    std::fs::create_dir_all(&plan.output)?;
    let path = plan.output.join(format!("tune_{}_{}.csv", method.name, req.param));
    ctdiff::harness::io::write_atomic(&path, outcome.to_csv().as_bytes())?;
    println!("{}.{} = {} (grid written to {})", method.name, req.param, outcome.best_value, path.display());
    Ok(())
}

fn benchmark(cfg: &Config) -> Result<()> {
    let plan = ExperimentPlan::from_config(cfg)?;
    let report = run_benchmark(&plan)?;
    let failed = report.rows.iter().filter(|r| !r.status.starts_with("ok")).count();
    println!(
        "{} cells ({failed} failed) -> {}",
        report.rows.len(),
        report.csv_path.display()
    );
    Ok(())
}

fn metrics(cfg: &Config) -> Result<()> {
    let sec = cfg.section_or_empty("metrics");
    let recon = load_image(&required_path(&sec, "recon")?)?;
    let reference = load_image(&required_path(&sec, "reference")?)?;
    match sec.raw("observed") {
        Some(p) => {
            let m = compute_metrics(&recon, &reference, &load_sinogram(Path::new(p))?)?;
            println!("psnr={:.4} ssim={:.4} data_fit={:.6}", m.psnr, m.ssim, m.data_fit);
        }
        None => println!("psnr={:.4} ssim={:.4}", psnr(&recon, &reference)?, ssim(&recon, &reference)?),
    }
    Ok(())
}
