use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// Shortest horizon accepted by [`error_growth`].
pub const MIN_GROWTH_STEPS: usize = 8;
/// Steps used for the slope fit.
pub const MAX_FIT_STEPS: usize = 100;
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGrowth {
    /// RMSE over locations at each step.
    pub per_step: Vec<f64>,
    /// Least-squares slope of `ln(max(e_T, 1e-12))` against `T`.
    pub slope: f64,
}

/// Per-step RMSE over locations: `sqrt(mean_i (p_Ti - x_Ti)^2)`.
pub fn per_step_rmse(predictions: &DenseArray, truth: &DenseArray) -> Result<Vec<f64>> {
    if predictions.shape() != truth.shape() || predictions.shape().len() != 2 {
        return Err(Error::shape(
            "error_growth",
            format!(
                "predictions {:?} vs truth {:?}",
                predictions.shape(),
                truth.shape()
            ),
        ));
    }
    let n = truth.cols() as f64;
    Ok((0..truth.rows())
        .map(|t| {
            let ss: f64 = predictions
                .row(t)
                .iter()
                .zip(truth.row(t))
                .map(|(p, x)| (p - x) * (p - x))
                .sum();
            (ss / n).sqrt()
        })
        .collect())
}

/// Per-step error series and its fitted exponential growth rate.
pub fn error_growth(predictions: &DenseArray, truth: &DenseArray) -> Result<ErrorGrowth> {
    let per_step = per_step_rmse(predictions, truth)?;
    if per_step.len() < MIN_GROWTH_STEPS {
        return Err(Error::SeriesTooShort {
            needed: MIN_GROWTH_STEPS,
            got: per_step.len(),
        });
    }
    let slope = log_slope(&per_step[..per_step.len().min(MAX_FIT_STEPS)]);
    Ok(ErrorGrowth { per_step, slope })
}

fn log_slope(errors: &[f64]) -> f64 {
    let m = errors.len() as f64;
    let ys: Vec<f64> = errors.iter().map(|e| e.max(LOG_FLOOR).ln()).collect();
    let x_mean = (m - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let dx = t as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}
