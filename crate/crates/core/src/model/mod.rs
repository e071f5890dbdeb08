//! The two-component predictor.
//!
//! The dependency learner (DLC) maps a flattened window of `d` past
//! observation vectors to the next vector. The information tracker (ITC)
//! encodes the same window into a diagonal Gaussian latent and decodes a
//! sample (or the mean) into an estimate of the next first-order difference.
//! The model output is the sum of the two.

mod graph;

pub use graph::{build_forward, ForwardNodes, ParamLeaves};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{matmul_kernel, DenseArray};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_locations: usize,
    pub window: usize,
    pub dlc_hidden: Vec<usize>,
    pub itc_encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub itc_decoder_hidden: Vec<usize>,
    pub seed: u64,
    pub logvar_clamp: (f64, f64),
}

impl ModelConfig {
    /// Default architecture: DLC `dN -> 64 -> 64 -> N`, encoder `dN -> 64`,
    /// 16 latent dimensions, decoder `16 -> 64 -> N`.
    pub fn new(n_locations: usize, window: usize) -> Self {
        Self {
            n_locations,
            window,
            dlc_hidden: vec![64, 64],
            itc_encoder_hidden: vec![64],
            latent_dim: 16,
            itc_decoder_hidden: vec![64],
            seed: 0,
            logvar_clamp: (-10.0, 10.0),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.n_locations * self.window
    }

    /// Width of the encoder output `r`.
    pub fn repr_dim(&self) -> usize {
        self.itc_encoder_hidden.last().copied().unwrap_or(self.input_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_locations == 0 {
            return bad("n_locations must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        let (lo, hi) = self.logvar_clamp;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return bad("logvar_clamp must be a finite interval with lo < hi");
        }
        let widths = self
            .dlc_hidden
            .iter()
            .chain(&self.itc_encoder_hidden)
            .chain(&self.itc_decoder_hidden);
        if widths.into_iter().any(|&w| w == 0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

/// One affine layer: `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DenseArray,
    pub bias: DenseArray,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DenseArray::zeros(vec![fan_in, fan_out]),
            bias: DenseArray::zeros(vec![1, fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: DenseArray::matrix(fan_in, fan_out, data).expect("shape matches data"),
            bias: DenseArray::zeros(vec![1, fan_out]),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = matmul_kernel(x, self.weight.data(), 1, self.fan_in(), self.fan_out());
        for (o, b) in out.iter_mut().zip(self.bias.data()) {
            *o += b;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dlc: Vec<Layer>,
    pub encoder: Vec<Layer>,
    pub mu_head: Layer,
    pub logvar_head: Layer,
    pub decoder: Vec<Layer>,
    pub logvar_clamp: (f64, f64),
}

fn chain_dims(input: usize, hidden: &[usize], output: Option<usize>) -> Vec<(usize, usize)> {
    let mut dims = Vec::new();
    let mut prev = input;
    for &h in hidden.iter().chain(output.iter()) {
        dims.push((prev, h));
        prev = h;
    }
    dims
}

/// Layer shapes in canonical order: DLC, encoder, mean head, log-variance
/// head, decoder.
fn layer_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    let n = config.n_locations;
    let mut shapes = chain_dims(config.input_dim(), &config.dlc_hidden, Some(n));
    shapes.extend(chain_dims(config.input_dim(), &config.itc_encoder_hidden, None));
    shapes.push((config.repr_dim(), config.latent_dim));
    shapes.push((config.repr_dim(), config.latent_dim));
    shapes.extend(chain_dims(config.latent_dim, &config.itc_decoder_hidden, Some(n)));
    shapes
}

impl ModelParams {
    fn from_layers(config: &ModelConfig, mut layers: Vec<Layer>) -> Self {
        let n_dlc = config.dlc_hidden.len() + 1;
        let n_enc = config.itc_encoder_hidden.len();
        let decoder = layers.split_off(n_dlc + n_enc + 2);
        let logvar_head = layers.pop().expect("logvar head");
        let mu_head = layers.pop().expect("mu head");
        let encoder = layers.split_off(n_dlc);
        Self {
            dlc: layers,
            encoder,
            mu_head,
            logvar_head,
            decoder,
            logvar_clamp: config.logvar_clamp,
        }
    }

    /// All-zero parameters with the configured shapes.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = layer_shapes(config)
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        Ok(Self::from_layers(config, layers))
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.dlc
            .iter()
            .chain(&self.encoder)
            .chain(std::iter::once(&self.mu_head))
            .chain(std::iter::once(&self.logvar_head))
            .chain(&self.decoder)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.dlc
            .iter_mut()
            .chain(self.encoder.iter_mut())
            .chain(std::iter::once(&mut self.mu_head))
            .chain(std::iter::once(&mut self.logvar_head))
            .chain(self.decoder.iter_mut())
    }

    /// Weight and bias tensors in canonical order.
    pub fn tensors(&self) -> Vec<&DenseArray> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseArray> {
        self.layers_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Copy of `self` with parameters replaced from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.n_params() {
            return Err(Error::shape(
                "ModelParams::with_flat",
                format!("{} values for {} parameters", flat.len(), self.n_params()),
            ));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Check that the layer shapes are the ones `config` prescribes.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let expected = layer_shapes(config);
        let actual: Vec<(usize, usize)> = self.layers().map(|l| (l.fan_in(), l.fan_out())).collect();
        let layout_ok = self.dlc.len() == config.dlc_hidden.len() + 1
            && self.encoder.len() == config.itc_encoder_hidden.len()
            && self.decoder.len() == config.itc_decoder_hidden.len() + 1;
        if expected != actual || !layout_ok {
            return Err(Error::shape(
                "ModelParams",
                format!("layer shapes {actual:?} do not match config {expected:?}"),
            ));
        }
        if self.layers().any(|l| l.bias.shape() != [1, l.fan_out()]) {
            return Err(Error::shape("ModelParams", "bias must be a 1 x out row"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.dlc[0].fan_in()
    }

    pub fn n_locations(&self) -> usize {
        self.dlc.last().expect("dlc has an output layer").fan_out()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.fan_out()
    }
}

/// Xavier-uniform weights and zero biases, drawn from the config seed.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = layer_shapes(config)
        .into_iter()
        .map(|(i, o)| Layer::xavier(i, o, &mut rng))
        .collect();
    Ok(ModelParams::from_layers(config, layers))
}

fn check_len(context: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::shape(
            context,
            format!("expected length {expected}, got {got}"),
        ));
    }
    Ok(())
}

/// Feedforward pass: tanh on every layer except the last when `linear_out`.
fn mlp(layers: &[Layer], x: &[f64], linear_out: bool) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        h = layer.apply(&h);
        if !(linear_out && i + 1 == layers.len()) {
            h.iter_mut().for_each(|v| *v = v.tanh());
        }
    }
    h
}

fn finite(context: &str, v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::non_finite(context))
    }
}

pub fn dlc_forward(params: &ModelParams, window: &[f64]) -> Result<Vec<f64>> {
    check_len("dlc_forward window", window.len(), params.input_dim())?;
    finite("dlc_forward", mlp(&params.dlc, window, true))
}

/// Encoder representation `r`; the window itself when there are no encoder layers.
pub fn itc_encode(params: &ModelParams, window: &[f64]) -> Result<Vec<f64>> {
    check_len("itc_encode window", window.len(), params.input_dim())?;
    finite("itc_encode", mlp(&params.encoder, window, false))
}

/// Mean and standard deviation of the latent posterior. The variance head
/// predicts a log-variance, clamped before exponentiation.
pub fn itc_latent(params: &ModelParams, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("itc_latent representation", r.len(), params.mu_head.fan_in())?;
    let (lo, hi) = params.logvar_clamp;
    let mu = params.mu_head.apply(r);
    let sigma = params
        .logvar_head
        .apply(r)
        .into_iter()
        .map(|v| (0.5 * v.clamp(lo, hi)).exp())
        .collect();
    Ok((finite("itc_latent mu", mu)?, sigma))
}

/// Reparameterized draw `z = mu + sigma * epsilon`.
pub fn itc_sample(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    check_len("itc_sample sigma", sigma.len(), mu.len())?;
    check_len("itc_sample epsilon", epsilon.len(), mu.len())?;
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::NonPositiveSigma { index, value });
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

pub fn itc_decode(params: &ModelParams, z: &[f64]) -> Result<Vec<f64>> {
    check_len("itc_decode latent", z.len(), params.latent_dim())?;
    finite("itc_decode", mlp(&params.decoder, z, true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentMode<'a> {
    /// Use `z = mu`.
    Mean,
    /// Use `z = mu + sigma * epsilon` with the given standard-normal draws.
    Sample(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub x_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    /// `x_hat + delta_hat`, elementwise.
    pub combined: Vec<f64>,
    pub latent: GaussianLatent,
}

pub fn model_forward(params: &ModelParams, window: &[f64], mode: LatentMode<'_>) -> Result<ModelOutput> {
    let x_hat = dlc_forward(params, window)?;
    let r = itc_encode(params, window)?;
    let (mu, sigma) = itc_latent(params, &r)?;
    let z = match mode {
        LatentMode::Mean => mu.clone(),
        LatentMode::Sample(eps) => itc_sample(&mu, &sigma, eps)?,
    };
    let delta_hat = itc_decode(params, &z)?;
    let combined = finite(
        "model_forward",
        x_hat.iter().zip(&delta_hat).map(|(a, b)| a + b).collect(),
    )?;
    Ok(ModelOutput {
        x_hat,
        delta_hat,
        combined,
        latent: GaussianLatent { mu, sigma, z },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_locations: 2,
            window: 3,
            dlc_hidden: vec![5, 4],
            itc_encoder_hidden: vec![6],
            latent_dim: 3,
            itc_decoder_hidden: vec![4],
            seed: 42,
            logvar_clamp: (-10.0, 10.0),
        }
    }

    fn linear_config(hidden: Vec<usize>) -> ModelConfig {
        ModelConfig {
            n_locations: 1,
            window: 1,
            dlc_hidden: hidden.clone(),
            itc_encoder_hidden: hidden.clone(),
            latent_dim: 1,
            itc_decoder_hidden: hidden,
            seed: 0,
            logvar_clamp: (-10.0, 10.0),
        }
    }

    fn randomized(config: &ModelConfig, seed: u64) -> ModelParams {
        let p = init_params(&config.clone().with_seed(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let flat: Vec<f64> = p.flatten().iter().map(|w| w + rng.random_range(-0.3..0.3)).collect();
        p.with_flat(&flat).unwrap()
    }

    // Independent reference: explicit index loops, no shared helpers.
    fn trace(layers: &[Layer], x: &[f64], tanh_last: bool) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, l) in layers.iter().enumerate() {
            let (fi, fo) = (l.weight.shape()[0], l.weight.shape()[1]);
            let mut next = vec![0.0; fo];
            for j in 0..fo {
                let mut acc = l.bias.data()[j];
                for i in 0..fi {
                    acc += h[i] * l.weight.data()[i * fo + j];
                }
                next[j] = if k + 1 < layers.len() || tanh_last { acc.tanh() } else { acc };
            }
            h = next;
        }
        h
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let c = tiny_config();
        let a = init_params(&c).unwrap();
        let b = init_params(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.layers().all(|l| l.bias.data().iter().all(|&v| v == 0.0)));
        let other = init_params(&c.clone().with_seed(43)).unwrap();
        assert_ne!(a.flatten(), other.flatten());
        a.check_config(&c).unwrap();
    }

    #[test]
    fn init_respects_xavier_bounds() {
        let c = ModelConfig::new(3, 4);
        let p = init_params(&c).unwrap();
        for l in p.layers() {
            let limit = (6.0 / (l.fan_in() + l.fan_out()) as f64).sqrt();
            assert!(l.weight.data().iter().all(|w| w.abs() <= limit));
        }
        assert_eq!(p.dlc.len(), 3);
        assert_eq!(p.dlc[0].weight.shape(), &[12, 64]);
        assert_eq!(p.latent_dim(), 16);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny_config();
        c.logvar_clamp = (1.0, 1.0);
        assert!(init_params(&c).is_err());
        let mut c = tiny_config();
        c.window = 0;
        assert!(init_params(&c).is_err());
        let mut c = tiny_config();
        c.dlc_hidden = vec![0];
        assert!(init_params(&c).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let c = tiny_config();
        let p = ModelParams::zeros(&c).unwrap();
        let w = vec![0.7; 6];
        assert_eq!(dlc_forward(&p, &w).unwrap(), vec![0.0; 2]);
        assert_eq!(itc_encode(&p, &w).unwrap(), vec![0.0; 6]);
        assert_eq!(itc_decode(&p, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 2]);
        let (mu, sigma) = itc_latent(&p, &[0.3; 6]).unwrap();
        assert_eq!(mu, vec![0.0; 3]);
        assert_eq!(sigma, vec![1.0; 3]);
        let out = model_forward(&p, &w, LatentMode::Mean).unwrap();
        assert_eq!(out.combined, vec![0.0; 2]);
    }

    #[test]
    fn single_linear_layers() {
        let c = linear_config(vec![]);
        let mut p = ModelParams::zeros(&c).unwrap();
        p.dlc[0].weight.data_mut()[0] = 2.0;
        p.dlc[0].bias.data_mut()[0] = 1.0;
        assert_eq!(dlc_forward(&p, &[3.0]).unwrap(), vec![7.0]);
        p.decoder[0].weight.data_mut()[0] = -1.0;
        assert_eq!(itc_decode(&p, &[2.0]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn single_tanh_encoder_layer() {
        let c = linear_config(vec![1]);
        let mut p = ModelParams::zeros(&c).unwrap();
        p.encoder[0].weight.data_mut()[0] = 1.0;
        assert_eq!(itc_encode(&p, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn wrong_window_length() {
        let p = init_params(&tiny_config()).unwrap();
        assert!(matches!(dlc_forward(&p, &[0.0; 5]), Err(Error::ShapeMismatch { .. })));
        assert!(itc_encode(&p, &[0.0; 7]).is_err());
        assert!(itc_decode(&p, &[0.0; 2]).is_err());
    }

    #[test]
    fn forward_passes_match_hand_trace() {
        let c = tiny_config();
        for seed in 0..5 {
            let p = randomized(&c, seed);
            let w: Vec<f64> = (0..6).map(|i| (i as f64 * 0.37 - 1.0) * (seed as f64 + 1.0) / 3.0).collect();
            close(&dlc_forward(&p, &w).unwrap(), &trace(&p.dlc, &w, false));
            let r = itc_encode(&p, &w).unwrap();
            close(&r, &trace(&p.encoder, &w, true));
            let z = [0.4, -1.2, 0.9];
            close(&itc_decode(&p, &z).unwrap(), &trace(&p.decoder, &z, false));
        }
    }

    #[test]
    fn logvar_is_clamped() {
        let c = linear_config(vec![]);
        let mut p = ModelParams::zeros(&c).unwrap();
        p.logvar_head.bias.data_mut()[0] = 10.0 + 100.0;
        let (_, sigma) = itc_latent(&p, &[0.0]).unwrap();
        assert_eq!(sigma, vec![(10.0_f64 / 2.0).exp()]);
        p.logvar_head.bias.data_mut()[0] = -1e6;
        let (mu, sigma) = itc_latent(&p, &[0.0]).unwrap();
        assert_eq!(sigma, vec![(-5.0_f64).exp()]);
        // sigma at its floor keeps z within exp(lo/2)|eps| of mu
        let z = itc_sample(&mu, &sigma, &[3.0]).unwrap();
        assert!((z[0] - mu[0]).abs() <= (-5.0_f64).exp() * 3.0 + 1e-15);
    }

    #[test]
    fn sigma_positive_over_random_draws() {
        let c = tiny_config();
        let p = randomized(&c, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, sigma) = itc_latent(&p, &r).unwrap();
            assert!(sigma.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn reparameterized_sample() {
        assert_eq!(itc_sample(&[0.0], &[1.0], &[0.5]).unwrap(), vec![0.5]);
        assert_eq!(
            itc_sample(&[1.0, 2.0], &[0.5, 1.0], &[-1.0, 1.0]).unwrap(),
            vec![0.5, 3.0]
        );
        assert!(matches!(
            itc_sample(&[0.0], &[0.0], &[1.0]),
            Err(Error::NonPositiveSigma { .. })
        ));
        assert!(itc_sample(&[0.0, 1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn model_forward_modes() {
        let c = tiny_config();
        let p = randomized(&c, 3);
        let w = [0.1, -0.2, 0.3, 0.5, -0.7, 0.05];
        let a = model_forward(&p, &w, LatentMode::Mean).unwrap();
        let b = model_forward(&p, &w, LatentMode::Mean).unwrap();
        assert_eq!(a, b);
        let zero = model_forward(&p, &w, LatentMode::Sample(&[0.0; 3])).unwrap();
        assert_eq!(a, zero);
        let s = model_forward(&p, &w, LatentMode::Sample(&[1.0, -1.0, 0.5])).unwrap();
        assert_eq!(s.x_hat, a.x_hat);
        assert_ne!(s.delta_hat, a.delta_hat);
        for out in [&a, &s] {
            for i in 0..2 {
                assert_eq!(out.combined[i].to_bits(), (out.x_hat[i] + out.delta_hat[i]).to_bits());
            }
        }
    }

    #[test]
    fn flat_round_trip_and_shape_check() {
        let c = tiny_config();
        let p = init_params(&c).unwrap();
        let back = p.with_flat(&p.flatten()).unwrap();
        assert_eq!(back, p);
        assert!(p.with_flat(&[0.0; 3]).is_err());
        let mut other = c.clone();
        other.latent_dim = 4;
        assert!(p.check_config(&other).is_err());
    }
}
