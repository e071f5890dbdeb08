//! Windowed samples, the variational objective and the Adam training loop.

mod adam;
mod objective;

pub use adam::Adam;
pub use objective::ObjectiveGraph;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::GridSeries;
use crate::error::{Error, Result};
use crate::model::{init_params, ModelConfig, ModelOutput, ModelParams};
use crate::numcore::DenseArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub kl_weight: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            kl_weight: 1.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("TrainConfig serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        let (b1, b2) = self.adam_betas;
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return bad(format!("adam betas must lie in (0, 1), got ({b1}, {b2})"));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam eps must be positive, got {}", self.adam_eps));
        }
        if !(self.kl_weight >= 0.0) || !self.kl_weight.is_finite() {
            return bad(format!("kl weight must be finite and >= 0, got {}", self.kl_weight));
        }
        Ok(())
    }
}

/// One training example built from `d` consecutive rows and the row after.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Rows `k .. k+d` flattened, oldest first (`d * N` values).
    pub input: Vec<f64>,
    /// Row `k + d`.
    pub target: Vec<f64>,
    /// `target - row (k + d - 1)`.
    pub target_delta: Vec<f64>,
    /// Row index of the target.
    pub index: usize,
}

pub fn make_windows(series: &GridSeries, window: usize) -> Result<Vec<WindowSample>> {
    windows_from_values(series.values(), window)
}

pub fn windows_from_values(values: &DenseArray, window: usize) -> Result<Vec<WindowSample>> {
    let t = values.rows();
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    if t < window + 1 {
        return Err(Error::SeriesTooShort {
            needed: window + 1,
            got: t,
        });
    }
    let n = values.cols();
    Ok((0..t - window)
        .map(|k| {
            let input = values.data()[k * n..(k + window) * n].to_vec();
            let target = values.row(k + window).to_vec();
            let last = values.row(k + window - 1);
            let target_delta = target.iter().zip(last).map(|(a, b)| a - b).collect();
            WindowSample {
                input,
                target,
                target_delta,
                index: k + window,
            }
        })
        .collect())
}

/// KL divergence of `N(mu, diag(sigma^2))` from the standard normal:
/// `0.5 * sum(mu^2 + sigma^2 - ln sigma^2 - 1)`.
pub fn kl_std_normal(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::shape(
            "kl_std_normal",
            format!("{} means for {} deviations", mu.len(), sigma.len()),
        ));
    }
    let mut acc = 0.0;
    for (index, (&m, &s)) in mu.iter().zip(sigma).enumerate() {
        if !(s > 0.0) {
            return Err(Error::NonPositiveSigma { index, value: s });
        }
        let var = s * s;
        acc += m * m + var - var.ln() - 1.0;
    }
    Ok(0.5 * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `|x_hat + delta_hat - x|^2`
    pub recon: f64,
    /// `|delta_hat - delta|^2`
    pub delta: f64,
    pub kl: f64,
    /// `recon + delta + kl_weight * kl`
    pub total: f64,
}

fn squared_distance(context: &str, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(context, format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Per-sample objective.
pub fn loss(output: &ModelOutput, sample: &WindowSample, kl_weight: f64) -> Result<LossBreakdown> {
    let recon = squared_distance("loss recon", &output.combined, &sample.target)?;
    let delta = squared_distance("loss delta", &output.delta_hat, &sample.target_delta)?;
    let kl = kl_std_normal(&output.latent.mu, &output.latent.sigma)?;
    Ok(LossBreakdown {
        recon,
        delta,
        kl,
        total: recon + delta + kl_weight * kl,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean per-sample loss components for each epoch.
    pub history: Vec<LossBreakdown>,
}

/// Noise stream used for reparameterized sampling during training.
pub(crate) fn epsilon_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Train a freshly initialized model on `series`.
pub fn train(series: &GridSeries, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<TrainOutcome> {
    if series.n_locations() != model_config.n_locations {
        return Err(Error::shape(
            "train",
            format!(
                "series has {} locations, model expects {}",
                series.n_locations(),
                model_config.n_locations
            ),
        ));
    }
    let params = init_params(model_config)?;
    let samples = make_windows(series, model_config.window)?;
    train_samples(params, &samples, train_config)
}

/// Continue training `params` on prepared samples.
pub fn train_samples(
    mut params: ModelParams,
    samples: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let latent = params.latent_dim();
    let full = config.batch_size.min(samples.len());
    let full_graph = ObjectiveGraph::new(&params, full, config.kl_weight);
    let remainder = samples.len() % full;
    let tail_graph = (remainder != 0).then(|| ObjectiveGraph::new(&params, remainder, config.kl_weight));

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eps_rng = epsilon_rng(config.seed);
    let mut adam = Adam::new(&params, config);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sums = LossBreakdown::default();
        for (batch_idx, chunk) in order.chunks(full).enumerate() {
            let graph = if chunk.len() == full {
                &full_graph
            } else {
                tail_graph.as_ref().expect("tail graph exists for a short batch")
            };
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let eps: Vec<f64> = (0..chunk.len() * latent)
                .map(|_| StandardNormal.sample(&mut eps_rng))
                .collect();
            let (parts, grads) = graph
                .gradient(&params, &batch, &eps)
                .map_err(|e| match e {
                    Error::NonFinite { context } => Error::non_finite(format!(
                        "{context} at epoch {epoch}, batch {batch_idx}"
                    )),
                    other => other,
                })?;
            if !parts.total.is_finite() {
                return Err(Error::non_finite(format!(
                    "training loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            let b = chunk.len() as f64;
            sums.recon += parts.recon * b;
            sums.delta += parts.delta * b;
            sums.kl += parts.kl * b;
            sums.total += parts.total * b;
            adam.step(&mut params, &grads);
            if !params.all_finite() {
                return Err(Error::non_finite(format!(
                    "parameter update at epoch {epoch}, batch {batch_idx}"
                )));
            }
        }
        let n = samples.len() as f64;
        let mean = LossBreakdown {
            recon: sums.recon / n,
            delta: sums.delta / n,
            kl: sums.kl / n,
            total: sums.total / n,
        };
        debug!("epoch {epoch}: total {:.6} (recon {:.6}, delta {:.6}, kl {:.6})", mean.total, mean.recon, mean.delta, mean.kl);
        history.push(mean);
    }
    Ok(TrainOutcome { params, history })
}
