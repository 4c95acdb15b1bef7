//! The method × configuration × repeat benchmark matrix.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{null_space_component_with, psnr, ssim, uncertainty_map, LandweberSettings};
use crate::error::{invalid, Error, Result};
use crate::harness::io::{save_image, save_sinogram, write_atomic};
use crate::harness::plan::{
    measure, reconstruct, state_bytes, ExperimentPlan, Metric, Observation, Task,
};
use crate::operator::{data_fit, ImageGrid};

pub const CSV_HEADER: &str =
    "method,config,seed,status,psnr,ssim,data_fit,null_energy,wall_time_ms,peak_state_bytes";
/// Overrides the plan's worker count when set.
pub const WORKERS_ENV: &str = "CTDIFF_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub method: String,
    pub config: String,
    pub seed: u64,
    /// `ok`, or `error: <message>`.
    pub status: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub data_fit: Option<f64>,
    pub null_energy: Option<f64>,
    pub wall_time_ms: f64,
    pub peak_state_bytes: u64,
}

impl CellRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn csv_line(&self) -> String {
        let f = |v: Option<f64>| match v {
            Some(x) if x.is_infinite() => "inf".to_string(),
            Some(x) => format!("{x:.6}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{}",
            csv_field(&self.method),
            csv_field(&self.config),
            self.seed,
            csv_field(&self.status),
            f(self.psnr),
            f(self.ssim),
            f(self.data_fit),
            f(self.null_energy),
            self.wall_time_ms,
            self.peak_state_bytes
        )
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Keeps characters that are safe in file names.
fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<CellRow>,
    pub csv_path: PathBuf,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[CellRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Worker count: the environment override, then the plan, then rayon's default.
pub fn worker_count(plan: &ExperimentPlan) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{WORKERS_ENV}={v:?} is not a count")))?;
        if n > 0 {
            return Ok(n);
        }
    }
    Ok(plan
        .workers
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads))
}

struct Cell {
    method: usize,
    config: usize,
    repeat: usize,
}

struct CellOutput {
    row: CellRow,
    image: Option<ImageGrid>,
}

/// Runs every cell and writes `results.csv` plus any requested artifacts to
/// the plan's output directory. Failures are recorded in the status column.
pub fn run_benchmark(plan: &ExperimentPlan) -> Result<BenchmarkReport> {
    plan.validate()?;
    fs::create_dir_all(&plan.output)?;
    let truth = plan.ground_truth()?;
    let task = plan.task(truth.shape)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(plan)?)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;

    let observations: Vec<Result<Observation>> = pool.install(|| {
        plan.configs
            .par_iter()
            .map(|(_, c)| {
                let mut c = c.clone();
                c.rng_seed = c.rng_seed.wrapping_add(plan.seed);
                measure(&task, &truth, &c)
            })
            .collect()
    });

    let cells: Vec<Cell> = (0..plan.methods.len())
        .flat_map(|m| {
            (0..plan.configs.len())
                .flat_map(move |c| (0..plan.repeats).map(move |r| Cell { method: m, config: c, repeat: r }))
        })
        .collect();

    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(plan, &task, &truth, &observations, cell))
            .collect()
    });

    if plan.save_images {
        save_image(&plan.output.join("truth.raw"), &truth)?;
        for ((id, _), obs) in plan.configs.iter().zip(&observations) {
            if let Ok(o) = obs {
                save_sinogram(&plan.output.join(format!("observed_{}.raw", file_stem(id))), o.observed())?;
            }
        }
        for (cell, out) in cells.iter().zip(&outputs) {
            if let Some(img) = &out.image {
                save_image(&cell_path(plan, cell, "raw"), img)?;
            }
        }
        if plan.repeats > 1 {
            save_uncertainty(plan, &cells, &outputs)?;
        }
    }

    let rows: Vec<CellRow> = outputs.into_iter().map(|o| o.row).collect();
    let csv_path = plan.output.join("results.csv");
    write_atomic(&csv_path, rows_to_csv(&rows).as_bytes())?;
    Ok(BenchmarkReport { rows, csv_path })
}

fn cell_path(plan: &ExperimentPlan, cell: &Cell, ext: &str) -> PathBuf {
    plan.output.join(format!(
        "{}_{}_r{}.{ext}",
        file_stem(&plan.methods[cell.method].name),
        file_stem(&plan.configs[cell.config].0),
        cell.repeat
    ))
}

fn save_uncertainty(plan: &ExperimentPlan, cells: &[Cell], outputs: &[CellOutput]) -> Result<()> {
    for m in 0..plan.methods.len() {
        for c in 0..plan.configs.len() {
            let samples: Vec<ImageGrid> = cells
                .iter()
                .zip(outputs)
                .filter(|(cell, _)| cell.method == m && cell.config == c)
                .filter_map(|(_, o)| o.image.clone())
                .collect();
            if samples.len() < 2 {
                continue;
            }
            let (mean, std) = uncertainty_map(&samples)?;
            let stem = format!(
                "{}_{}",
                file_stem(&plan.methods[m].name),
                file_stem(&plan.configs[c].0)
            );
            save_image(&plan.output.join(format!("{stem}_mean.raw")), &mean)?;
            save_image(&plan.output.join(format!("{stem}_std.raw")), &std)?;
        }
    }
    Ok(())
}

fn run_cell(
    plan: &ExperimentPlan,
    task: &Task,
    truth: &ImageGrid,
    observations: &[Result<Observation>],
    cell: &Cell,
) -> CellOutput {
    let method = &plan.methods[cell.method];
    let seed = plan.seed.wrapping_add(cell.repeat as u64);
    let mut row = CellRow {
        method: method.name.clone(),
        config: plan.configs[cell.config].0.clone(),
        seed,
        status: "ok".into(),
        psnr: None,
        ssim: None,
        data_fit: None,
        null_energy: None,
        wall_time_ms: 0.0,
        peak_state_bytes: 0,
    };
    let obs = match &observations[cell.config] {
        Ok(o) => o,
        Err(e) => {
            row.status = format!("error: simulation failed: {e}");
            return CellOutput { row, image: None };
        }
    };
    row.peak_state_bytes = state_bytes(method, truth.values.len(), obs.observed().values.len());
    let start = Instant::now();
    let result = reconstruct(task, method, obs, seed);
    row.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            row.status = format!("error: {e}");
            return CellOutput { row, image: None };
        }
    };
    if let Err(e) = score(plan, obs, truth, &out.image, &mut row) {
        row.status = format!("error: {e}");
    }
    if plan.save_trajectories {
        if let Some(traj) = &out.trajectory {
            let path = cell_path(plan, cell, "csv");
            let path = path.with_file_name(format!(
                "{}_trajectory.csv",
                path.file_stem().unwrap().to_string_lossy()
            ));
            if let Err(e) = traj.write_csv(&path) {
                row.status = format!("error: {e}");
            }
        }
    }
    if plan.save_nullspace {
        match null_space_component_with(&obs.projector, &out.image, LandweberSettings::default()) {
            Ok(d) => {
                row.null_energy = Some(d.null_energy_fraction);
                let path = cell_path(plan, cell, "raw");
                let path = path.with_file_name(format!(
                    "{}_null.raw",
                    path.file_stem().unwrap().to_string_lossy()
                ));
                if let Err(e) = save_image(&path, &d.x_null) {
                    row.status = format!("error: {e}");
                }
            }
            Err(Error::LandweberNotConverged { residual, .. }) => {
                row.status = format!("ok (null space unconverged, residual {residual:.3e})");
            }
            Err(e) => row.status = format!("error: {e}"),
        }
    }
    CellOutput {
        row,
        image: Some(out.image),
    }
}

fn score(
    plan: &ExperimentPlan,
    obs: &Observation,
    truth: &ImageGrid,
    recon: &ImageGrid,
    row: &mut CellRow,
) -> Result<()> {
    if recon.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reconstruction".into()));
    }
    for m in &plan.metrics {
        match m {
            Metric::Psnr => row.psnr = Some(psnr(recon, truth)?),
            Metric::Ssim => row.ssim = Some(ssim(recon, truth)?),
            Metric::DataFit => {
                row.data_fit = Some(data_fit(&obs.projector, &recon.values, &obs.observed().values))
            }
        }
    }
    Ok(())
}

/// Drops the timing column so two reports can be compared byte for byte.
pub fn strip_timing(csv: &str) -> String {
    let col = CSV_HEADER.split(',').position(|c| c == "wall_time_ms").unwrap();
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != col)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
