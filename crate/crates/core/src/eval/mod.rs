//! Evaluation harness: logistic remapping, agreement criteria, dataset
//! aggregation and significance testing.

mod ftest;
mod logistic;
mod metrics;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use ftest::{f_test, Better, FTestResult, DEFAULT_ALPHA, MIN_RESIDUALS};
pub use logistic::{
    fit_logistic, initial_guesses, logistic_map, LogisticFit, LogisticParams, MAX_ITERATIONS,
    MIN_FIT_LEN,
};
pub use metrics::{average_ranks, krocc, plcc, rmse, srocc};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow<T> {
    pub raw: T,
    pub mapped: T,
    pub mos: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct EvalReport<T> {
    pub srocc: T,
    pub krocc: T,
    pub plcc: T,
    pub rmse: T,
    pub n: usize,
    pub logistic: LogisticParams<T>,
    /// Residual sum of squares of the logistic fit.
    pub logistic_sse: T,
    pub scatter_rows: Vec<ScatterRow<T>>,
}

impl<T: Real> EvalReport<T> {
    /// `mos - mapped` per item, the input to [`f_test`].
    pub fn residuals(&self) -> Vec<T> {
        self.scatter_rows.iter().map(|r| r.mos - r.mapped).collect()
    }

    pub fn write_scatter_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["raw", "mapped", "mos"]).map_err(csv_err)?;
        for r in &self.scatter_rows {
            w.write_record([r.raw.to_string(), r.mapped.to_string(), r.mos.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Rank criteria on raw scores, PLCC and RMSE on logistic-mapped scores.
pub fn evaluate_dataset<T: Real>(scores: &[T], mos: &[T]) -> Result<EvalReport<T>> {
    let fit = fit_logistic(scores, mos)?;
    let mapped = fit.params.map_all(scores);
    Ok(EvalReport {
        srocc: srocc(scores, mos)?,
        krocc: krocc(scores, mos)?,
        plcc: plcc(&mapped, mos)?,
        rmse: rmse(&mapped, mos)?,
        n: scores.len(),
        logistic: fit.params,
        logistic_sse: fit.sse,
        scatter_rows: scores
            .iter()
            .zip(&mapped)
            .zip(mos)
            .map(|((&raw, &mapped), &mos)| ScatterRow { raw, mapped, mos })
            .collect(),
    })
}

/// Weighted mean of per-dataset criteria: all-ones weights give the
/// dataset average, dataset sizes give the size-weighted average.
pub fn aggregate<T: Real>(values: &[T], weights: &[T]) -> Result<T> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: weights.len(),
        });
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::ZeroWeight);
    }
    Ok(values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| (w / total) * v)
        .sum())
}
