use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::operator::ImageGrid;
use crate::prior::JacobianMode;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: usize,
    /// `∥A x̂₀ − y∥₂` for the estimate produced at this step.
    pub data_fit: f64,
    pub x_t: Option<Vec<f64>>,
    pub x0_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// Jacobian mode actually used by gradient-based guidance, if any.
    pub jacobian: Option<JacobianMode>,
}

impl Trajectory {
    pub(crate) fn push(&mut self, t: usize, data_fit: f64, snapshot: Option<(&[f64], &[f64])>) {
        let step = self.records.len();
        let (x_t, x0_hat) = match snapshot {
            Some((a, b)) => (Some(a.to_vec()), Some(b.to_vec())),
            None => (None, None),
        };
        self.records.push(StepRecord {
            step,
            t,
            data_fit,
            x_t,
            x0_hat,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `step,t,data_fit` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,data_fit\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{:e}", r.step, r.t, r.data_fit);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::harness::io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Output of every reconstruction entry point.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: ImageGrid,
    pub trajectory: Trajectory,
}
