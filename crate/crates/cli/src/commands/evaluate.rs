use anyhow::Result;
use chaostrack::metrics::{evaluate, EvalReport, EvalSlice};

use crate::args::EvaluateArgs;
use crate::output::{join_floats, manifest_for, Manifest, OutputSet};

use super::{align, load_grid_input};

pub fn metrics_csv(ids: &[&str], report: &EvalReport) -> String {
    let mut out = String::from("location,mae,rmse,dtw\n");
    let rows = ids.iter().copied().zip(&report.per_location).chain([("aggregate", &report.aggregate)]);
    for (id, r) in rows {
        out.push_str(&format!("{id},{}\n", join_floats(&[r.mae, r.rmse, r.dtw])));
    }
    out
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let mut manifest = Manifest::new("evaluate", args)?;
    let truth = load_grid_input(&mut manifest, &args.truth)?;
    let prediction = load_grid_input(&mut manifest, &args.predictions)?;
    let (x, o) = align(&truth, &prediction)?;
    let report = evaluate(&EvalSlice::from_time_major(&x, &o)?)?;
    let mut out = OutputSet::new();
    out.add(&args.out, metrics_csv(&truth.location_ids(), &report));
    out.commit(manifest, &manifest_for(&args.out))
}
