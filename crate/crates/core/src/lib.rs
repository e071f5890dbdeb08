//! Closed-loop forecasting of chaotic gridded series.
//!
//! A dependency learner predicts the next observation vector from a sliding
//! window; a variational tracker estimates the next first-order difference
//! and the two are summed. Predictions are fed back into the window, so long
//! horizons are reached by repeated one-step-ahead prediction.
//!
//! Also provided: MAE/RMSE/DTW metrics, grid I/O and synthetic chaotic
//! generators, and multi-scale teleconnection networks built from a Haar
//! maximal-overlap wavelet transform.

pub mod data;
pub mod error;
pub mod forecast;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod telenet;
pub mod training;

pub use data::{Checkpoint, GridSeries, Location, Normalizer};
pub use error::{Error, Result};
pub use forecast::{rollout, ForecastResult, RolloutMode};
pub use model::{ModelConfig, ModelParams};
pub use numcore::DenseArray;
pub use training::{train, TrainConfig};
