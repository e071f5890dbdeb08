use anyhow::Result;
use chaostrack::data::{encode_checkpoint, Checkpoint, Normalizer};
use chaostrack::training::{train, LossBreakdown};
use chaostrack::{Error, ModelConfig, TrainConfig};

use crate::args::TrainArgs;
use crate::output::{join_floats, manifest_for, Manifest, OutputSet};
use crate::usage;

use super::load_grid_input;

pub fn loss_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,recon,delta,kl,total\n");
    for (epoch, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", epoch + 1, join_floats(&[l.recon, l.delta, l.kl, l.total])));
    }
    out
}

pub fn run(args: &TrainArgs) -> Result<()> {
    if !(args.train_fraction > 0.0 && args.train_fraction <= 1.0) {
        return Err(usage(format!("--train-fraction must lie in (0, 1], got {}", args.train_fraction)));
    }
    let mut manifest = Manifest::new("train", args)?;
    let series = load_grid_input(&mut manifest, &args.data)?;

    let weeks = (args.train_fraction * series.len() as f64).floor() as usize;
    if weeks < args.window + 1 {
        return Err(Error::SeriesTooShort {
            needed: args.window + 1,
            got: weeks,
        }
        .into());
    }
    let train_part = series.slice(0, weeks)?;
    let normalizer = Normalizer::fit(&train_part)?;
    let normalized = normalizer.apply(&train_part)?;

    let init_seed = args.init_seed.unwrap_or(args.seed);
    let mut model_config = ModelConfig::new(series.n_locations(), args.window).with_seed(init_seed);
    model_config.dlc_hidden = args.dlc_hidden.0.clone();
    model_config.itc_encoder_hidden = args.encoder_hidden.0.clone();
    model_config.latent_dim = args.latent_dim;
    model_config.itc_decoder_hidden = args.decoder_hidden.0.clone();
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        adam_betas: (args.beta1, args.beta2),
        adam_eps: args.adam_eps,
        kl_weight: args.kl_weight,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    model_config.validate()?;
    train_config.validate()?;

    log::info!(
        "training on {weeks} of {} weeks, {} locations, window {}",
        series.len(),
        series.n_locations(),
        args.window
    );
    let outcome = train(&normalized, &model_config, &train_config)?;
    let digest = train_config.digest();
    let checkpoint = Checkpoint::new(model_config, outcome.params, normalizer, digest)?;

    let manifest = manifest.seed("init", init_seed).seed("train", args.seed);
    let loss_out = args
        .loss_out
        .clone()
        .unwrap_or_else(|| args.out.with_file_name(format!("{}.loss.csv", file_name(&args.out))));
    let mut out = OutputSet::new();
    out.add(&args.out, encode_checkpoint(&checkpoint)?);
    out.add(loss_out, loss_csv(&outcome.history));
    out.commit(manifest, &manifest_for(&args.out))
}

fn file_name(path: &std::path::Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
