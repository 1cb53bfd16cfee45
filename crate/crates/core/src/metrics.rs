//! Evaluation indicators of a trace: final loss and accuracy, accuracy spread over
//! the last epochs, and the first epoch reaching 95% of the final accuracy.
//!
//! Accuracies are reported in percent. Standard deviations divide by `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{EpochRecord, Trace};
use crate::scalar::Scalar;

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.10;
pub const CONVERGENCE_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> MeanStd<T> {
    /// Mean and population standard deviation; `None` for an empty slice.
    pub fn of(values: &[T]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = T::from_usize_lossy(values.len());
        let mean = values.iter().copied().sum::<T>() / n;
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

impl<T: Scalar> std::fmt::Display for MeanStd<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}({:.3})", self.mean, self.std)
    }
}

/// Indicators of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunIndicators<T> {
    pub final_loss: T,
    pub final_accuracy: T,
    pub last_window_accuracy_std: T,
    pub first_epoch_to_95: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary<T> {
    pub final_loss: MeanStd<T>,
    pub final_accuracy: MeanStd<T>,
    pub last_window_accuracy_std: MeanStd<T>,
    pub first_epoch_to_95: MeanStd<T>,
    /// Epochs per run, the denominator of `first_epoch_to_95`.
    pub total_epochs: usize,
    pub runs: usize,
}

fn run_records<T: Scalar>(trace: &Trace<T>, run: usize) -> Result<Vec<&EpochRecord<T>>> {
    let records: Vec<_> = trace.run_records(run).collect();
    if records.is_empty() {
        return Err(Error::Metrics(format!("no records for run {run}")));
    }
    Ok(records)
}

fn percent<T: Scalar>(fraction: T) -> T {
    fraction * T::lit(100.0)
}

/// `(loss, accuracy %)` at the last epoch of the run.
pub fn final_values<T: Scalar>(trace: &Trace<T>, run: usize) -> Result<(T, T)> {
    let records = run_records(trace, run)?;
    let last = records[records.len() - 1];
    Ok((last.val_loss, percent(last.val_accuracy)))
}

/// Population std of accuracy (%) over the last `ceil(fraction × epochs)` epochs.
pub fn last_window_std<T: Scalar>(trace: &Trace<T>, run: usize, fraction: f64) -> Result<T> {
    let records = run_records(trace, run)?;
    let n = records.len();
    // integer-valued products like 0.1 × 300 must not round up
    let window = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if window < 2 || window > n {
        return Err(Error::Metrics(format!(
            "window of {window} epochs out of {n} is too small for a standard deviation"
        )));
    }
    let tail: Vec<T> = records[n - window..].iter().map(|r| percent(r.val_accuracy)).collect();
    Ok(MeanStd::of(&tail).expect("window is nonempty").std)
}

/// Smallest 1-based global epoch whose accuracy reaches 95% of the final accuracy.
pub fn first_epoch_to_95<T: Scalar>(trace: &Trace<T>, run: usize) -> Result<usize> {
    let records = run_records(trace, run)?;
    let final_acc = records[records.len() - 1].val_accuracy;
    let threshold = T::lit(CONVERGENCE_FRACTION) * final_acc;
    // relative slack of a few ulps keeps exact ties like 0.95 × 80 = 76 on the right side
    let slack = threshold.abs() * T::lit(1e-12);
    Ok(records
        .iter()
        .find(|r| r.val_accuracy >= threshold - slack)
        .map(|r| r.epoch_global)
        .expect("the final epoch always satisfies the threshold"))
}

pub fn run_indicators<T: Scalar>(trace: &Trace<T>, run: usize) -> Result<RunIndicators<T>> {
    let (final_loss, final_accuracy) = final_values(trace, run)?;
    Ok(RunIndicators {
        final_loss,
        final_accuracy,
        last_window_accuracy_std: last_window_std(trace, run, DEFAULT_WINDOW_FRACTION)?,
        first_epoch_to_95: first_epoch_to_95(trace, run)?,
    })
}

/// Mean and population std of each indicator across runs.
pub fn summarize<T: Scalar>(runs: &[RunIndicators<T>], total_epochs: usize) -> Result<MetricsSummary<T>> {
    if runs.is_empty() {
        return Err(Error::Metrics("no complete runs to aggregate".into()));
    }
    let col = |f: &dyn Fn(&RunIndicators<T>) -> T| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>()).unwrap();
    Ok(MetricsSummary {
        final_loss: col(&|r| r.final_loss),
        final_accuracy: col(&|r| r.final_accuracy),
        last_window_accuracy_std: col(&|r| r.last_window_accuracy_std),
        first_epoch_to_95: col(&|r| T::from_usize_lossy(r.first_epoch_to_95)),
        total_epochs,
        runs: runs.len(),
    })
}

/// Summary over the complete (non-diverged) runs of `trace`.
pub fn aggregate<T: Scalar>(trace: &Trace<T>) -> Result<MetricsSummary<T>> {
    let runs = trace
        .complete_runs()
        .into_iter()
        .map(|r| run_indicators(trace, r))
        .collect::<Result<Vec<_>>>()?;
    summarize(&runs, trace.epochs_per_run)
}
