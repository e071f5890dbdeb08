//! Forecast accuracy metrics: MAE, RMSE and dynamic time warping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// Truth and prediction over an evaluation period, one row per location.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSlice {
    truth: DenseArray,
    prediction: DenseArray,
}

impl EvalSlice {
    /// Both arrays are `N x h`.
    pub fn new(truth: DenseArray, prediction: DenseArray) -> Result<Self> {
        if truth.shape() != prediction.shape() || truth.shape().len() != 2 {
            return Err(Error::shape(
                "EvalSlice",
                format!("truth {:?} vs prediction {:?}", truth.shape(), prediction.shape()),
            ));
        }
        if truth.rows() == 0 || truth.cols() == 0 {
            return Err(Error::EmptySeries);
        }
        Ok(Self { truth, prediction })
    }

    /// Builds a slice from time-major `h x N` arrays, as stored in grids.
    pub fn from_time_major(truth: &DenseArray, prediction: &DenseArray) -> Result<Self> {
        if truth.shape() != prediction.shape() || truth.shape().len() != 2 {
            return Err(Error::shape(
                "EvalSlice",
                format!("truth {:?} vs prediction {:?}", truth.shape(), prediction.shape()),
            ));
        }
        Self::new(transpose(truth), transpose(prediction))
    }

    pub fn n_locations(&self) -> usize {
        self.truth.rows()
    }

    /// Period length `h`.
    pub fn period(&self) -> usize {
        self.truth.cols()
    }

    pub fn truth(&self) -> &DenseArray {
        &self.truth
    }

    pub fn prediction(&self) -> &DenseArray {
        &self.prediction
    }
}

fn transpose(a: &DenseArray) -> DenseArray {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for (j, &v) in a.row(i).iter().enumerate() {
            out[j * r + i] = v;
        }
    }
    DenseArray::matrix(c, r, out).expect("transposed shape")
}

/// Mean absolute error over all `N * h` entries.
pub fn mae(slice: &EvalSlice) -> f64 {
    let total: f64 = slice
        .truth
        .data()
        .iter()
        .zip(slice.prediction.data())
        .map(|(x, o)| (o - x).abs())
        .sum();
    total / slice.truth.len() as f64
}

fn location_rmse(truth: &[f64], prediction: &[f64]) -> f64 {
    let ss: f64 = truth.iter().zip(prediction).map(|(x, o)| (x - o) * (x - o)).sum();
    (ss / truth.len() as f64).sqrt()
}

/// Mean over locations of each location's RMSE over the period.
pub fn rmse(slice: &EvalSlice) -> f64 {
    let n = slice.n_locations();
    (0..n)
        .map(|i| location_rmse(slice.truth.row(i), slice.prediction.row(i)))
        .sum::<f64>()
        / n as f64
}

/// Dynamic time warping distance with local cost `|a_i - b_j|` and
/// unconstrained match/insert/delete steps.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySeries);
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &ai in a {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = (ai - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mae: f64,
    pub rmse: f64,
    pub dtw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One row per location, in slice order.
    pub per_location: Vec<MetricRow>,
    /// MAE and RMSE of the whole slice; DTW averaged over locations.
    pub aggregate: MetricRow,
}

/// Per-location and aggregate metrics. Locations are evaluated in
/// parallel; the aggregate is reduced in location order.
pub fn evaluate(slice: &EvalSlice) -> Result<EvalReport> {
    let per_location: Vec<MetricRow> = (0..slice.n_locations())
        .into_par_iter()
        .map(|i| {
            let (x, o) = (slice.truth.row(i), slice.prediction.row(i));
            let h = x.len() as f64;
            Ok(MetricRow {
                mae: x.iter().zip(o).map(|(x, o)| (o - x).abs()).sum::<f64>() / h,
                rmse: location_rmse(x, o),
                dtw: dtw(x, o)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_location.len() as f64;
    let aggregate = MetricRow {
        mae: mae(slice),
        rmse: rmse(slice),
        dtw: per_location.iter().map(|r| r.dtw).sum::<f64>() / n,
    };
    Ok(EvalReport {
        per_location,
        aggregate,
    })
}
