use anyhow::Result;
use chaostrack::data::{encode_grid, Checkpoint, GridFormat, GridSeries};
use chaostrack::forecast::{rollout, DlcOnly, ForecastResult, RolloutMode};
use chaostrack::Error;

use crate::args::{Mode, PredictArgs};
use crate::output::{manifest_for, sibling, Manifest, OutputSet};

use super::{leading_weeks, load_checkpoint_input, load_grid_input};

/// Denormalized predictions and component traces, dated from the week
/// after the history ends.
pub struct Forecast {
    pub predictions: GridSeries,
    pub x_hat: GridSeries,
    pub delta: GridSeries,
}

pub fn forecast(
    checkpoint: &Checkpoint,
    history: &GridSeries,
    horizon: usize,
    mode: RolloutMode,
    dlc_only: bool,
) -> Result<Forecast> {
    if history.n_locations() != checkpoint.model_config.n_locations {
        return Err(Error::ShapeMismatch {
            context: "checkpoint vs history".into(),
            detail: format!(
                "checkpoint expects {} locations, history has {}",
                checkpoint.model_config.n_locations,
                history.n_locations()
            ),
        }
        .into());
    }
    let normalized = checkpoint.normalizer.apply(history)?;
    let result: ForecastResult = if dlc_only {
        rollout(&DlcOnly(&checkpoint.params), normalized.values(), horizon, mode)?
    } else {
        rollout(&checkpoint.params, normalized.values(), horizon, mode)?
    };
    let norm = &checkpoint.normalizer;
    let start = history.week(history.len());
    let wrap = |values| GridSeries::new(values, history.locations().to_vec(), start);
    Ok(Forecast {
        predictions: wrap(norm.invert_values(&result.predictions)?)?,
        x_hat: wrap(norm.invert_values(&result.x_hat_trace)?)?,
        delta: wrap(norm.invert_differences(&result.delta_trace)?)?,
    })
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let mut manifest = Manifest::new("predict", args)?;
    let checkpoint = load_checkpoint_input(&mut manifest, &args.checkpoint)?;
    let history = leading_weeks(load_grid_input(&mut manifest, &args.history)?, args.history_weeks)?;
    let mode = match args.mode {
        Mode::Mean => RolloutMode::Mean,
        Mode::Sample => {
            manifest = manifest.seed("sample", args.sample_seed);
            RolloutMode::Sample { seed: args.sample_seed }
        }
    };
    let f = forecast(&checkpoint, &history, args.horizon, mode, args.dlc_only)?;

    let xhat_out = args.xhat_out.clone().unwrap_or_else(|| sibling(&args.out, "xhat.csv"));
    let delta_out = args.delta_out.clone().unwrap_or_else(|| sibling(&args.out, "delta.csv"));
    let mut out = OutputSet::new();
    for (path, grid) in [(&args.out, &f.predictions), (&xhat_out, &f.x_hat), (&delta_out, &f.delta)] {
        out.add(path, encode_grid(grid, GridFormat::from_path(path)));
    }
    out.commit(manifest, &manifest_for(&args.out))
}
