//! Grid-search hyperparameter tuning on held-out phantoms.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::harness::phantom::{variant_images, PhantomKind};
use crate::harness::plan::{measure, reconstruct, MethodSpec, Task};
use crate::operator::ImageGrid;
use crate::simulate::SimulationConfig;

pub const DEFAULT_HOLDOUTS: usize = 10;
const HOLDOUT_STREAM: u64 = 0x401d_0000_0000;

/// `count` seeded variants of `kind`, drawn from a stream disjoint from the
/// one used for prior training.
pub fn holdout_phantoms(kind: &PhantomKind, size: usize, count: usize, seed: u64) -> Result<Vec<ImageGrid>> {
    variant_images(kind, size, count, HOLDOUT_STREAM ^ seed.wrapping_mul(1_000_003))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub value: f64,
    /// Mean squared error averaged over holdouts; infinite if any run failed.
    pub mean_mse: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub param: String,
    pub best_value: f64,
    pub best: MethodSpec,
    pub points: Vec<GridPoint>,
}

impl TuneOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},mean_mse,failures\n", self.param);
        for p in &self.points {
            out.push_str(&format!("{:?},{:.9e},{}\n", p.value, p.mean_mse, p.failures));
        }
        out
    }
}

/// Evaluates every grid value of `param` on the holdouts and keeps the one
/// with the lowest mean squared error. Ties go to the smaller value.
/// Holdout `h` is measured with noise seed `config.rng_seed + h` and
/// reconstructed with sampler seed `seed + h`.
pub fn grid_search(
    task: &Task,
    method: &MethodSpec,
    param: &str,
    values: &[f64],
    config: &SimulationConfig,
    holdouts: &[ImageGrid],
    seed: u64,
) -> Result<TuneOutcome> {
    if values.is_empty() {
        return Err(invalid("parameter grid is empty"));
    }
    if holdouts.is_empty() {
        return Err(invalid("need at least one holdout image"));
    }
    let candidates: Vec<MethodSpec> = values
        .iter()
        .map(|&v| method.with_param(param, v))
        .collect::<Result<_>>()?;
    let observations: Vec<_> = holdouts
        .par_iter()
        .enumerate()
        .map(|(h, truth)| {
            let mut c = config.clone();
            c.rng_seed = c.rng_seed.wrapping_add(h as u64);
            measure(task, truth, &c)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|g| (0..holdouts.len()).map(move |h| (g, h)))
        .collect();
    let errors: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(g, h)| {
            reconstruct(task, &candidates[g], &observations[h], seed.wrapping_add(h as u64))
                .ok()
                .map(|out| mse(&out.image, &holdouts[h]))
                .filter(|e| e.is_finite())
        })
        .collect();
    let points: Vec<GridPoint> = values
        .iter()
        .enumerate()
        .map(|(g, &value)| {
            let row = &errors[g * holdouts.len()..(g + 1) * holdouts.len()];
            let failures = row.iter().filter(|e| e.is_none()).count();
            let mean_mse = if failures > 0 {
                f64::INFINITY
            } else {
                row.iter().flatten().sum::<f64>() / row.len() as f64
            };
            GridPoint {
                value,
                mean_mse,
                failures,
            }
        })
        .collect();
    let best = (0..points.len())
        .min_by(|&a, &b| {
            points[a]
                .mean_mse
                .total_cmp(&points[b].mean_mse)
                .then(points[a].value.total_cmp(&points[b].value))
        })
        .unwrap();
    Ok(TuneOutcome {
        param: param.into(),
        best_value: points[best].value,
        best: candidates[best].clone(),
        points,
    })
}

fn mse(a: &ImageGrid, b: &ImageGrid) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.values.len() as f64
}
