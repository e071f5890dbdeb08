use std::path::PathBuf;
use std::str::FromStr;

use chaostrack::data::LorenzComponent;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "chaostrack", version, about = "Closed-loop forecasting of chaotic gridded series")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic chaotic grid.
    Synth(SynthArgs),
    /// Train a model on a grid and write a checkpoint.
    Train(TrainArgs),
    /// Roll a trained model forward from a history grid.
    Predict(PredictArgs),
    /// Score predictions against a truth grid (MAE, RMSE, DTW).
    Evaluate(EvaluateArgs),
    /// Build multi-scale teleconnection networks.
    Telenet(TelenetArgs),
    /// Per-step error series and log-error slopes.
    Errgrowth(ErrgrowthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Logistic,
    Lorenz,
    Seasonal,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
    All,
}

impl From<Component> for LorenzComponent {
    fn from(c: Component) -> Self {
        match c {
            Component::X => LorenzComponent::X,
            Component::Y => LorenzComponent::Y,
            Component::Z => LorenzComponent::Z,
            Component::All => LorenzComponent::All,
        }
    }
}

fn parse_week(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub system: System,
    /// Number of weekly rows.
    #[arg(long)]
    pub steps: usize,
    /// Output grid; `.csv` for text, anything else for binary.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_week, default_value = "2000-01-03")]
    pub start_week: NaiveDate,

    /// Logistic growth rate.
    #[arg(long, default_value_t = 4.0)]
    pub r: f64,
    /// Logistic initial value in (0, 1).
    #[arg(long, default_value_t = 0.2)]
    pub x0: f64,

    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 28.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    pub beta: f64,
    /// Lorenz initial state `x,y,z`.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 1.0, 1.0])]
    pub initial: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = Component::X)]
    pub component: Component,

    /// Seasonal-chaotic: number of locations.
    #[arg(long, default_value_t = 4)]
    pub locations: usize,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 52.0)]
    pub period: f64,
    #[arg(long, default_value_t = 0.3)]
    pub chaos_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Hidden layer widths: comma separated, or `none` for no hidden layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|w| match w.trim().parse::<usize>() {
                Ok(0) => Err("layer widths must be positive".to_string()),
                Ok(v) => Ok(v),
                Err(e) => Err(format!("bad width {w:?}: {e}")),
            })
            .collect::<Result<_, _>>()
            .map(Widths)
    }
}

impl std::fmt::Display for Widths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Input grid.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
    /// Window length `d`.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// Leading fraction of the series used for training.
    #[arg(long, default_value_t = 1.0)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Weight of the per-sample KL term.
    #[arg(long, default_value_t = 1.0)]
    pub kl_weight: f64,
    /// Seed for shuffling and latent noise; also initialization unless
    /// `--init-seed` is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long, default_value = "64,64")]
    pub dlc_hidden: Widths,
    #[arg(long, default_value = "64")]
    pub encoder_hidden: Widths,
    #[arg(long, default_value_t = 16)]
    pub latent_dim: usize,
    #[arg(long, default_value = "64")]
    pub decoder_hidden: Widths,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mean,
    Sample,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Grid whose last `d` rows seed the rollout.
    #[arg(long)]
    pub history: PathBuf,
    /// Use only the first K rows of the history grid.
    #[arg(long)]
    pub history_weeks: Option<usize>,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = Mode::Mean)]
    pub mode: Mode,
    /// Noise seed for `--mode sample`.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Zero the difference tracker's output.
    #[arg(long)]
    pub dlc_only: bool,
    /// Predictions grid.
    #[arg(long)]
    pub out: PathBuf,
    /// Base-prediction trace; defaults to `<out stem>.xhat.csv`.
    #[arg(long)]
    pub xhat_out: Option<PathBuf>,
    /// Difference trace; defaults to `<out stem>.delta.csv`.
    #[arg(long)]
    pub delta_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TelenetArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Scales to analyze; scale `s` covers `2^(s-2)`..`2^(s-1)` weeks.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scales: Vec<usize>,
    #[arg(long, default_value_t = chaostrack::telenet::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Decomposition depth; defaults to the deepest requested scale.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Region box `name:lat_min:lat_max:lon_min:lon_max`; repeatable.
    #[arg(long = "region")]
    pub regions: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ErrgrowthArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Prediction grid to score; repeatable.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    /// Checkpoint to roll out in mean mode; repeatable.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// History grid for checkpoint sources.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub history_weeks: Option<usize>,
    /// Steps to roll out for checkpoint sources; defaults to every truth
    /// week after the history.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Also score each checkpoint with the difference tracker zeroed.
    #[arg(long)]
    pub dlc_only: bool,
    /// Per-step RMSE CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Slope CSV; defaults to `<out stem>.slopes.csv`.
    #[arg(long)]
    pub slopes_out: Option<PathBuf>,
}
