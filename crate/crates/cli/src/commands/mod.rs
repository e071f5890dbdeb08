pub mod errgrowth;
pub mod evaluate;
pub mod predict;
pub mod synth;
pub mod telenet;
pub mod train;

use std::collections::HashMap;
use std::path::Path;

use anyhow::{Context, Result};
use chaostrack::data::{decode_checkpoint, decode_grid, Checkpoint, GridSeries};
use chaostrack::{DenseArray, Error};

use crate::output::{read_input, Manifest};

pub(crate) fn load_grid_input(manifest: &mut Manifest, path: &Path) -> Result<GridSeries> {
    let bytes = read_input(manifest, path)?;
    decode_grid(&bytes).with_context(|| format!("loading grid {}", path.display()))
}

pub(crate) fn load_checkpoint_input(manifest: &mut Manifest, path: &Path) -> Result<Checkpoint> {
    let bytes = read_input(manifest, path)?;
    decode_checkpoint(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// The first `weeks` rows, or the whole series.
pub(crate) fn leading_weeks(series: GridSeries, weeks: Option<usize>) -> Result<GridSeries> {
    match weeks {
        None => Ok(series),
        Some(k) if k == series.len() => Ok(series),
        Some(k) if k == 0 || k > series.len() => Err(Error::InsufficientHistory {
            needed: k,
            got: series.len(),
        }
        .into()),
        Some(k) => Ok(series.slice(0, k)?),
    }
}

/// Truth rows covering the prediction's weeks and the prediction's values,
/// both in the truth grid's location order.
pub(crate) fn align(truth: &GridSeries, prediction: &GridSeries) -> Result<(DenseArray, DenseArray)> {
    let truth_ids = truth.location_ids();
    let pred_ids = prediction.location_ids();
    let missing: Vec<String> = truth_ids.iter().filter(|id| !pred_ids.contains(id)).map(|s| s.to_string()).collect();
    let unexpected: Vec<String> = pred_ids.iter().filter(|id| !truth_ids.contains(id)).map(|s| s.to_string()).collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::LocationMismatch { missing, unexpected }.into());
    }

    let days = (prediction.start_week() - truth.start_week()).num_days();
    let h = prediction.len();
    let covered = days >= 0 && days % 7 == 0 && (days / 7) as usize + h <= truth.len();
    if !covered {
        return Err(Error::ShapeMismatch {
            context: "aligning predictions with truth".into(),
            detail: format!(
                "prediction weeks {}..={} are not all present in the truth grid ({}..={})",
                prediction.start_week(),
                prediction.week(h - 1),
                truth.start_week(),
                truth.week(truth.len() - 1)
            ),
        }
        .into());
    }
    let offset = (days / 7) as usize;
    let truth_block = truth.values().slice_rows(offset, offset + h);

    let column: HashMap<&str, usize> = pred_ids.iter().enumerate().map(|(j, id)| (*id, j)).collect();
    let order: Vec<usize> = truth_ids.iter().map(|id| column[id]).collect();
    let mut data = Vec::with_capacity(h * order.len());
    for t in 0..h {
        let row = prediction.values().row(t);
        data.extend(order.iter().map(|&j| row[j]));
    }
    Ok((truth_block, DenseArray::matrix(h, order.len(), data)?))
}
