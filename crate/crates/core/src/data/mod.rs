//! Grid ingestion and persistence, normalization, synthetic generators and
//! model checkpoints.

mod checkpoint;
mod grid;
mod normalize;
mod synth;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use grid::{
    decode_grid, default_start_week, encode_grid, load_grid, parse_csv, save_grid, to_csv,
    GridFormat, GridSeries, Location, GRID_MAGIC, GRID_VERSION,
};
pub use normalize::{Normalizer, STD_FLOOR};
pub use synth::{
    gen_logistic, gen_lorenz, gen_seasonal_chaotic, logistic_trajectory, lorenz_trajectory,
    LorenzComponent, LorenzParams, SeasonalParams,
};
