//! Deterministic chaotic fixtures standing in for observed temperature grids.

use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridSeries, Location};
use crate::error::{Error, Result};
use crate::numcore::DenseArray;

fn check_len(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidConfig("a generated series needs at least one step".into()));
    }
    Ok(())
}

/// Logistic map trajectory `x_{t+1} = r x_t (1 - x_t)` starting at `x0`.
pub fn logistic_trajectory(r: f64, x0: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    let mut x = x0;
    for _ in 0..steps {
        out.push(x);
        x = r * x * (1.0 - x);
    }
    out
}

pub fn gen_logistic(r: f64, x0: f64, steps: usize, start_week: NaiveDate) -> Result<GridSeries> {
    check_len(steps)?;
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::InvalidConfig(format!("x0 must lie in (0, 1), got {x0}")));
    }
    let values = logistic_trajectory(r, x0, steps);
    GridSeries::new(
        DenseArray::matrix(steps, 1, values)?,
        vec![Location::new("x", 0.0, 0.0)],
        start_week,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LorenzComponent {
    X,
    Y,
    Z,
    All,
}

fn lorenz_rhs(p: &LorenzParams, s: [f64; 3]) -> [f64; 3] {
    [
        p.sigma * (s[1] - s[0]),
        s[0] * (p.rho - s[2]) - s[1],
        s[0] * s[1] - p.beta * s[2],
    ]
}

fn rk4_step(p: &LorenzParams, s: [f64; 3], dt: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let k1 = lorenz_rhs(p, s);
    let k2 = lorenz_rhs(p, add(s, k1, dt / 2.0));
    let k3 = lorenz_rhs(p, add(s, k2, dt / 2.0));
    let k4 = lorenz_rhs(p, add(s, k3, dt));
    let mut out = s;
    for i in 0..3 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Lorenz-63 trajectory integrated with classical RK4; row 0 is `initial`.
pub fn lorenz_trajectory(params: &LorenzParams, initial: [f64; 3], dt: f64, steps: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(steps);
    let mut s = initial;
    for _ in 0..steps {
        out.push(s);
        s = rk4_step(params, s, dt);
    }
    out
}

pub fn gen_lorenz(
    params: &LorenzParams,
    initial: [f64; 3],
    dt: f64,
    steps: usize,
    component: LorenzComponent,
    start_week: NaiveDate,
) -> Result<GridSeries> {
    check_len(steps)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let traj = lorenz_trajectory(params, initial, dt, steps);
    let (cols, names): (Vec<usize>, Vec<&str>) = match component {
        LorenzComponent::X => (vec![0], vec!["x"]),
        LorenzComponent::Y => (vec![1], vec!["y"]),
        LorenzComponent::Z => (vec![2], vec!["z"]),
        LorenzComponent::All => (vec![0, 1, 2], vec!["x", "y", "z"]),
    };
    let data = traj
        .iter()
        .flat_map(|s| cols.iter().map(move |&c| s[c]))
        .collect();
    let locations = names.into_iter().map(|n| Location::new(n, 0.0, 0.0)).collect();
    GridSeries::new(DenseArray::matrix(steps, cols.len(), data)?, locations, start_week)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalParams {
    pub amplitude: f64,
    pub period_weeks: f64,
    pub chaos_weight: f64,
}

impl Default for SeasonalParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            period_weeks: 52.0,
            chaos_weight: 0.3,
        }
    }
}

/// Seasonal cycle plus a chaotic irregular component, one column per location.
///
/// Location `i` carries `amplitude * sin(2 pi (t / period + i / N))` plus
/// `chaos_weight` times an r = 4 logistic trajectory rescaled to `[-1, 1]`.
/// Each location's logistic start point is drawn from `seed`.
pub fn gen_seasonal_chaotic(
    params: &SeasonalParams,
    seed: u64,
    steps: usize,
    n_locations: usize,
    start_week: NaiveDate,
) -> Result<GridSeries> {
    check_len(steps)?;
    if params.period_weeks < 2.0 {
        return Err(Error::InvalidConfig(format!(
            "period must be at least 2 weeks, got {}",
            params.period_weeks
        )));
    }
    if n_locations == 0 {
        return Err(Error::InvalidConfig("need at least one location".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let irregular: Vec<Vec<f64>> = (0..n_locations)
        .map(|_| {
            let x0 = rng.random_range(0.05..0.95);
            logistic_trajectory(4.0, x0, steps)
        })
        .collect();
    let mut data = Vec::with_capacity(steps * n_locations);
    for t in 0..steps {
        for (i, chaos) in irregular.iter().enumerate() {
            let phase = 2.0 * PI * (t as f64 / params.period_weeks + i as f64 / n_locations as f64);
            data.push(params.amplitude * phase.sin() + params.chaos_weight * (2.0 * chaos[t] - 1.0));
        }
    }
    let locations = (0..n_locations)
        .map(|i| {
            let frac = (i as f64 + 0.5) / n_locations as f64;
            Location::new(format!("loc{i}"), -60.0 + 120.0 * frac, -180.0 + 360.0 * frac)
        })
        .collect();
    GridSeries::new(DenseArray::matrix(steps, n_locations, data)?, locations, start_week)
}
