use serde::{Deserialize, Serialize};

use super::grid::GridSeries;
use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-location z-score transform (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(series: &GridSeries) -> Result<Self> {
        Self::fit_values(series.values())
    }

    pub fn fit_values(values: &DenseArray) -> Result<Self> {
        let (t, n) = (values.rows(), values.cols());
        if t < 2 {
            return Err(Error::SeriesTooShort { needed: 2, got: t });
        }
        let mut mean = vec![0.0; n];
        for r in 0..t {
            for (m, v) in mean.iter_mut().zip(values.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        let mut var = vec![0.0; n];
        for r in 0..t {
            for ((s, v), m) in var.iter_mut().zip(values.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / t as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn n_locations(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, values: &DenseArray) -> Result<()> {
        if values.cols() != self.mean.len() {
            return Err(Error::shape(
                "Normalizer",
                format!(
                    "fitted on {} locations, applied to {}",
                    self.mean.len(),
                    values.cols()
                ),
            ));
        }
        Ok(())
    }

    pub fn apply_values(&self, values: &DenseArray) -> Result<DenseArray> {
        self.check(values)?;
        let mut out = values.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert_values(&self, values: &DenseArray) -> Result<DenseArray> {
        self.check(values)?;
        let mut out = values.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    /// Map normalized differences back to data units (scale only, no shift).
    pub fn invert_differences(&self, values: &DenseArray) -> Result<DenseArray> {
        self.check(values)?;
        let mut out = values.clone();
        for r in 0..out.rows() {
            for (v, s) in out.row_mut(r).iter_mut().zip(&self.std) {
                *v *= s;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, series: &GridSeries) -> Result<GridSeries> {
        series.with_values(self.apply_values(series.values())?)
    }

    pub fn invert(&self, series: &GridSeries) -> Result<GridSeries> {
        series.with_values(self.invert_values(series.values())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::grid::{default_start_week, Location};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(t: usize, n: usize, data: Vec<f64>) -> GridSeries {
        let locs = (0..n).map(|i| Location::new(format!("l{i}"), 0.0, 0.0)).collect();
        GridSeries::new(DenseArray::matrix(t, n, data).unwrap(), locs, default_start_week()).unwrap()
    }

    #[test]
    fn two_point_column() {
        let g = grid(2, 1, vec![0.0, 2.0]);
        let norm = Normalizer::fit(&g).unwrap();
        assert_eq!(norm.mean, vec![1.0]);
        assert_eq!(norm.std, vec![1.0]);
        assert_eq!(norm.apply(&g).unwrap().values().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_is_floored() {
        let g = grid(4, 2, vec![3.0, 1.0, 3.0, 2.0, 3.0, 3.0, 3.0, 4.0]);
        let norm = Normalizer::fit(&g).unwrap();
        assert_eq!(norm.std[0], STD_FLOOR);
        let z = norm.apply(&g).unwrap();
        assert!(z.values().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn needs_two_rows() {
        let g = grid(1, 1, vec![1.0]);
        assert!(matches!(
            Normalizer::fit(&g),
            Err(Error::SeriesTooShort { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn round_trip_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..50 * 6).map(|_| rng.random_range(-30.0..45.0)).collect();
        let g = grid(50, 6, data);
        let norm = Normalizer::fit(&g).unwrap();
        let z = norm.apply(&g).unwrap();
        for c in 0..6 {
            let col = z.values().column(c);
            let m: f64 = col.iter().sum::<f64>() / 50.0;
            let v: f64 = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        let back = norm.invert(&z).unwrap();
        let dev = back
            .values()
            .data()
            .iter()
            .zip(g.values().data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "{dev}");
    }
}
