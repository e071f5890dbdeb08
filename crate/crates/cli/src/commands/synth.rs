use anyhow::Result;
use chaostrack::data::{encode_grid, gen_logistic, gen_lorenz, gen_seasonal_chaotic, GridFormat, LorenzParams, SeasonalParams};

use crate::args::{SynthArgs, System};
use crate::output::{manifest_for, Manifest, OutputSet};

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut manifest = Manifest::new("synth", args)?;
    let series = match args.system {
        System::Logistic => gen_logistic(args.r, args.x0, args.steps, args.start_week)?,
        System::Lorenz => {
            let params = LorenzParams {
                sigma: args.sigma,
                rho: args.rho,
                beta: args.beta,
            };
            let initial = [args.initial[0], args.initial[1], args.initial[2]];
            gen_lorenz(&params, initial, args.dt, args.steps, args.component.into(), args.start_week)?
        }
        System::Seasonal => {
            let params = SeasonalParams {
                amplitude: args.amplitude,
                period_weeks: args.period,
                chaos_weight: args.chaos_weight,
            };
            manifest = manifest.seed("seasonal", args.seed);
            gen_seasonal_chaotic(&params, args.seed, args.steps, args.locations, args.start_week)?
        }
    };
    let mut out = OutputSet::new();
    out.add(&args.out, encode_grid(&series, GridFormat::from_path(&args.out)));
    out.commit(manifest, &manifest_for(&args.out))
}
