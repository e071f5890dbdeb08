use anyhow::Result;
use chaostrack::data::GridSeries;
use chaostrack::forecast::{error_growth, ErrorGrowth, RolloutMode};
use chaostrack::Error;

use crate::args::ErrgrowthArgs;
use crate::output::{join_floats, manifest_for, sibling, Manifest, OutputSet};
use crate::usage;

use super::predict::forecast;
use super::{align, leading_weeks, load_checkpoint_input, load_grid_input};

pub struct Source {
    pub name: String,
    pub growth: ErrorGrowth,
}

pub fn per_step_csv(sources: &[Source]) -> String {
    let names: Vec<&str> = sources.iter().map(|s| s.name.as_str()).collect();
    let mut out = format!("step,{}\n", names.join(","));
    let h = sources.first().map_or(0, |s| s.growth.per_step.len());
    for t in 0..h {
        let row: Vec<f64> = sources.iter().map(|s| s.growth.per_step[t]).collect();
        out.push_str(&format!("{},{}\n", t + 1, join_floats(&row)));
    }
    out
}

pub fn slopes_csv(sources: &[Source]) -> String {
    let mut out = String::from("source,slope,mean_rmse\n");
    for s in sources {
        let e = &s.growth.per_step;
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        out.push_str(&format!("{},{},{}\n", s.name, s.growth.slope, mean));
    }
    out
}

fn stem(path: &std::path::Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn score(truth: &GridSeries, prediction: &GridSeries) -> Result<ErrorGrowth> {
    let (x, o) = align(truth, prediction)?;
    Ok(error_growth(&o, &x)?)
}

pub fn run(args: &ErrgrowthArgs) -> Result<()> {
    if args.predictions.is_empty() && args.checkpoints.is_empty() {
        return Err(usage("give at least one --predictions file or --checkpoint"));
    }
    if !args.checkpoints.is_empty() && args.history.is_none() {
        return Err(usage("--checkpoint sources need --history"));
    }
    if args.dlc_only && args.checkpoints.is_empty() {
        return Err(usage("--dlc-only applies to --checkpoint sources"));
    }
    let mut manifest = Manifest::new("errgrowth", args)?;
    let truth = load_grid_input(&mut manifest, &args.truth)?;
    let mut sources = Vec::new();

    for path in &args.predictions {
        let prediction = load_grid_input(&mut manifest, path)?;
        sources.push(Source {
            name: stem(path),
            growth: score(&truth, &prediction)?,
        });
    }

    if let Some(history_path) = &args.history {
        let history = leading_weeks(load_grid_input(&mut manifest, history_path)?, args.history_weeks)?;
        let next = history.week(history.len());
        let days = (next - truth.start_week()).num_days();
        let available = if days >= 0 && days % 7 == 0 {
            truth.len().saturating_sub((days / 7) as usize)
        } else {
            0
        };
        let horizon = args.horizon.unwrap_or(available);
        if horizon == 0 || horizon > available {
            return Err(Error::ShapeMismatch {
                context: "errgrowth horizon".into(),
                detail: format!("truth grid has {available} weeks after the history ends on {}", history.week(history.len() - 1)),
            }
            .into());
        }
        for path in &args.checkpoints {
            let checkpoint = load_checkpoint_input(&mut manifest, path)?;
            let variants: &[bool] = if args.dlc_only { &[false, true] } else { &[false] };
            for &dlc_only in variants {
                let f = forecast(&checkpoint, &history, horizon, RolloutMode::Mean, dlc_only)?;
                let tag = if dlc_only { "dlc-only" } else { "full" };
                sources.push(Source {
                    name: format!("{}:{tag}", stem(path)),
                    growth: score(&truth, &f.predictions)?,
                });
            }
        }
    }

    let h = sources[0].growth.per_step.len();
    if let Some(s) = sources.iter().find(|s| s.growth.per_step.len() != h) {
        return Err(Error::ShapeMismatch {
            context: "errgrowth sources".into(),
            detail: format!("{} has {} steps, {} has {h}", s.name, s.growth.per_step.len(), sources[0].name),
        }
        .into());
    }
    let slopes_out = args.slopes_out.clone().unwrap_or_else(|| sibling(&args.out, "slopes.csv"));
    let mut out = OutputSet::new();
    out.add(&args.out, per_step_csv(&sources));
    out.add(slopes_out, slopes_csv(&sources));
    out.commit(manifest, &manifest_for(&args.out))
}
