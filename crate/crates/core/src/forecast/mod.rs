//! Closed-loop rollout and error-growth diagnostics.
//!
//! The first input window is the tail of the supplied history. After each
//! step the oldest row is dropped and the step's prediction appended, so
//! from step `d + 1` on the model only ever sees its own outputs.

mod growth;

pub use growth::{error_growth, per_step_rmse, ErrorGrowth, MAX_FIT_STEPS, MIN_GROWTH_STEPS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{dlc_forward, model_forward, LatentMode, ModelParams};
use crate::numcore::DenseArray;

/// Components of one predicted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
}

/// Anything that maps a flattened window to a base prediction and a
/// difference correction.
pub trait Predictor {
    fn window(&self) -> usize;
    fn n_locations(&self) -> usize;
    /// Number of standard-normal draws consumed per sampled step.
    fn noise_dim(&self) -> usize {
        0
    }
    fn step(&self, window: &[f64], epsilon: Option<&[f64]>) -> Result<StepOutput>;
}

impl Predictor for ModelParams {
    fn window(&self) -> usize {
        self.input_dim() / self.n_locations()
    }

    fn n_locations(&self) -> usize {
        ModelParams::n_locations(self)
    }

    fn noise_dim(&self) -> usize {
        self.latent_dim()
    }

    fn step(&self, window: &[f64], epsilon: Option<&[f64]>) -> Result<StepOutput> {
        let mode = match epsilon {
            Some(eps) => LatentMode::Sample(eps),
            None => LatentMode::Mean,
        };
        let out = model_forward(self, window, mode)?;
        Ok(StepOutput {
            x_hat: out.x_hat,
            delta_hat: out.delta_hat,
        })
    }
}

/// The dependency learner alone: the tracker's correction is forced to zero.
#[derive(Debug, Clone, Copy)]
pub struct DlcOnly<'a>(pub &'a ModelParams);

impl Predictor for DlcOnly<'_> {
    fn window(&self) -> usize {
        Predictor::window(self.0)
    }

    fn n_locations(&self) -> usize {
        ModelParams::n_locations(self.0)
    }

    fn step(&self, window: &[f64], _epsilon: Option<&[f64]>) -> Result<StepOutput> {
        let x_hat = dlc_forward(self.0, window)?;
        let delta_hat = vec![0.0; x_hat.len()];
        Ok(StepOutput { x_hat, delta_hat })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Latent mean; deterministic.
    Mean,
    /// Reparameterized draws from a seeded stream, for ensembles.
    Sample { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// `H x N`, equal to `x_hat_trace + delta_trace` elementwise.
    pub predictions: DenseArray,
    pub x_hat_trace: DenseArray,
    pub delta_trace: DenseArray,
    pub horizon: usize,
}

fn check_inputs<P: Predictor + ?Sized>(model: &P, history: &DenseArray, horizon: usize) -> Result<()> {
    let d = model.window();
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    if history.cols() != model.n_locations() || history.shape().len() != 2 {
        return Err(Error::shape(
            "rollout history",
            format!(
                "history has shape {:?}, model expects {} locations",
                history.shape(),
                model.n_locations()
            ),
        ));
    }
    if history.rows() < d {
        return Err(Error::InsufficientHistory {
            needed: d,
            got: history.rows(),
        });
    }
    Ok(())
}

fn initial_window(history: &DenseArray, d: usize) -> Vec<f64> {
    let n = history.cols();
    let t = history.rows();
    history.data()[(t - d) * n..].to_vec()
}

fn slide(window: &mut Vec<f64>, next: &[f64]) {
    let n = next.len();
    window.drain(..n);
    window.extend_from_slice(next);
}

struct Traces {
    n: usize,
    predictions: Vec<f64>,
    x_hat: Vec<f64>,
    delta: Vec<f64>,
}

impl Traces {
    fn new(horizon: usize, n: usize) -> Self {
        Self {
            n,
            predictions: Vec::with_capacity(horizon * n),
            x_hat: Vec::with_capacity(horizon * n),
            delta: Vec::with_capacity(horizon * n),
        }
    }

    fn push(&mut self, step: usize, x_hat: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        if x_hat.len() != self.n || delta.len() != self.n {
            return Err(Error::shape(
                format!("rollout step {step}"),
                format!("predictor returned {} / {} values for {} locations", x_hat.len(), delta.len(), self.n),
            ));
        }
        let combined: Vec<f64> = x_hat.iter().zip(delta).map(|(a, b)| a + b).collect();
        if !combined.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(format!("rollout step {step}")));
        }
        self.predictions.extend_from_slice(&combined);
        self.x_hat.extend_from_slice(x_hat);
        self.delta.extend_from_slice(delta);
        Ok(combined)
    }

    fn finish(self, horizon: usize) -> Result<ForecastResult> {
        let n = self.n;
        Ok(ForecastResult {
            predictions: DenseArray::matrix(horizon, n, self.predictions)?,
            x_hat_trace: DenseArray::matrix(horizon, n, self.x_hat)?,
            delta_trace: DenseArray::matrix(horizon, n, self.delta)?,
            horizon,
        })
    }
}

/// One-step-ahead closed-loop prediction for `horizon` steps.
///
/// Only the last `d` rows of `history` are read.
pub fn rollout<P: Predictor + ?Sized>(
    model: &P,
    history: &DenseArray,
    horizon: usize,
    mode: RolloutMode,
) -> Result<ForecastResult> {
    check_inputs(model, history, horizon)?;
    let mut window = initial_window(history, model.window());
    let mut traces = Traces::new(horizon, model.n_locations());
    let mut rng = match mode {
        RolloutMode::Mean => None,
        RolloutMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut eps = vec![0.0; model.noise_dim()];
    for step in 0..horizon {
        let noise = match rng.as_mut() {
            Some(rng) => {
                eps.iter_mut().for_each(|e| *e = StandardNormal.sample(rng));
                Some(eps.as_slice())
            }
            None => None,
        };
        let out = model.step(&window, noise).map_err(|e| match e {
            Error::NonFinite { context } => Error::non_finite(format!("{context} at rollout step {step}")),
            other => other,
        })?;
        let combined = traces.push(step, &out.x_hat, &out.delta_hat)?;
        slide(&mut window, &combined);
    }
    traces.finish(horizon)
}

fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

fn from_order_key(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

/// Largest finite `delta` with `base + delta < target`, assuming one exists.
/// Rounded addition is monotone in `delta`, so bisection over the ordered
/// finite doubles is exact.
fn last_offset_below(base: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (order_key(-f64::MAX), order_key(f64::MAX));
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if base + from_order_key(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    from_order_key(lo)
}

/// A finite `delta` with `base + delta == target` in double precision, if
/// any exists. Prefers the naive difference when it already works.
///
/// Some pairs admit none: when `|target|` is small relative to `|base|`,
/// every rounded sum lies on a grid coarser than `target`'s own spacing.
pub fn exact_offset(base: f64, target: f64) -> Option<f64> {
    if !base.is_finite() || !target.is_finite() {
        return None;
    }
    let naive = target - base;
    if base + naive == target {
        return Some(naive);
    }
    let above = last_offset_below(base, target).next_up();
    (above.is_finite() && base + above == target).then_some(above)
}

/// [`exact_offset`] when it exists, otherwise the offset whose sum lands
/// nearest to `target`.
pub fn oracle_offset(base: f64, target: f64) -> f64 {
    if let Some(d) = exact_offset(base, target) {
        return d;
    }
    let naive = target - base;
    if !base.is_finite() || !target.is_finite() {
        return naive;
    }
    let below = last_offset_below(base, target);
    let above = below.next_up();
    if (target - (base + below)).abs() <= ((base + above) - target).abs() {
        below
    } else {
        above
    }
}

/// Rollout in which the correction at each step is the ideal one: the
/// difference between the true next value and the model's base prediction.
///
/// Isolates how much a perfect difference tracker could contribute. The
/// tracker itself is not evaluated.
pub fn rollout_with_oracle_delta<P: Predictor + ?Sized>(
    model: &P,
    history: &DenseArray,
    truth: &DenseArray,
    horizon: usize,
) -> Result<ForecastResult> {
    check_inputs(model, history, horizon)?;
    let n = model.n_locations();
    if truth.rows() < horizon || truth.cols() != n {
        return Err(Error::shape(
            "rollout_with_oracle_delta truth",
            format!("need {horizon} x {n}, got {:?}", truth.shape()),
        ));
    }
    let mut window = initial_window(history, model.window());
    let mut traces = Traces::new(horizon, n);
    for step in 0..horizon {
        let out = model.step(&window, None)?;
        let delta: Vec<f64> = out
            .x_hat
            .iter()
            .zip(truth.row(step))
            .map(|(&base, &t)| oracle_offset(base, t))
            .collect();
        let combined = traces.push(step, &out.x_hat, &delta)?;
        slide(&mut window, &combined);
    }
    traces.finish(horizon)
}
