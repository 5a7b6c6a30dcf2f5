//! Test-set error metrics, convergence traces and gradient histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fidelity, loss_and_gradient, ControlField, TimeGrid};
use crate::error::{Error, Result};
use crate::sampling::TestSet;
use crate::linalg::Scalar;
use crate::systems::SystemSpec;

/// Relative fidelity errors `1 − F/F_max` over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
    /// `(fidelity, f_max)` in test-set order.
    pub per_sample: Vec<(f64, f64)>,
}

impl EvaluationReport {
    pub fn from_samples(per_sample: Vec<(f64, f64)>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Config("cannot evaluate an empty test set".into()));
        }
        let errors: Vec<f64> = per_sample.iter().map(|&(f, fm)| 1.0 - f / fm).collect();
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        // Averaging identical values can round one ulp above them.
        let mean = mean.min(max);
        Ok(Self {
            mean_rel_error: mean,
            max_rel_error: max,
            per_sample,
        })
    }

    pub fn relative_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_sample.iter().map(|&(f, fm)| 1.0 - f / fm)
    }

    /// Mean of `F/F_max`, the quantity quoted as "mean relative fidelity".
    pub fn mean_relative_fidelity(&self) -> f64 {
        1.0 - self.mean_rel_error
    }
}

/// Fidelity and `F_max` for every test parameter, evaluated in parallel and
/// collected in test-set order.
pub fn evaluate<S: Scalar>(
    spec: &SystemSpec<S>,
    u: &ControlField,
    test: &TestSet,
) -> Result<EvaluationReport> {
    let per_sample = test
        .samples
        .par_iter()
        .map(|theta| Ok((fidelity(spec, theta, u)?, spec.f_max(theta)?)))
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_samples(per_sample)
}

pub fn mean_relative_error<S: Scalar>(
    spec: &SystemSpec<S>,
    u: &ControlField,
    test: &TestSet,
) -> Result<f64> {
    Ok(evaluate(spec, u, test)?.mean_rel_error)
}

pub fn max_relative_error<S: Scalar>(
    spec: &SystemSpec<S>,
    u: &ControlField,
    test: &TestSet,
) -> Result<f64> {
    Ok(evaluate(spec, u, test)?.max_rel_error)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub grad_evals: usize,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
}

/// Test-set errors against cumulative gradient evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; gradient-evaluation counts must strictly increase
    /// after the first record.
    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.grad_evals <= last.grad_evals {
                return Err(Error::Config(format!(
                    "trace record at {} evaluations does not follow {}",
                    record.grad_evals, last.grad_evals
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First record whose mean error is at or below `level`.
    pub fn first_below(&self, level: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.mean_rel_error <= level)
    }
}

/// First-channel gradients at one time step across the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientHistogramSnapshot {
    pub iteration: usize,
    pub step: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

impl GradientHistogramSnapshot {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }
}

/// Steps for `t = 0, T/5, 2T/5, …, T`; `t = T` maps to the last interval.
pub fn default_snapshot_steps(grid: &TimeGrid) -> Vec<usize> {
    (0..=5)
        .map(|k| grid.step_index(k as f64 * grid.total_time() / 5.0))
        .collect()
}

/// `∂loss/∂u₁(t_n)` for every test parameter at each requested step.
pub fn gradient_histogram<S: Scalar>(
    spec: &SystemSpec<S>,
    u: &ControlField,
    test: &TestSet,
    steps: &[usize],
    iteration: usize,
) -> Result<Vec<GradientHistogramSnapshot>> {
    if let Some(&bad) = steps.iter().find(|&&n| n >= u.steps()) {
        return Err(Error::Config(format!(
            "snapshot step {bad} outside 0..{}",
            u.steps()
        )));
    }
    let grads = test
        .samples
        .par_iter()
        .map(|theta| loss_and_gradient(spec, theta, u).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;
    Ok(steps
        .iter()
        .map(|&n| GradientHistogramSnapshot {
            iteration,
            step: n,
            time: u.grid().time(n),
            values: grads.iter().map(|g| g.get(0, n)).collect(),
        })
        .collect())
}
