//! Multi-scale teleconnection networks.
//!
//! A grid is split into dyadic temporal scales with a Haar maximal-overlap
//! wavelet transform. At each scale, locations whose wavelet coefficients
//! correlate strongly are linked.
//!
//! Scale `s` covers periods of `2^(s-2)` to `2^(s-1)` weeks and maps to
//! decomposition level `j = s - 2`, so scale 3 is level 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GridSeries, Location};
use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// Default absolute-correlation threshold for a link.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Decomposition level for a scale.
pub fn scale_to_level(scale: usize) -> Option<usize> {
    scale.checked_sub(2).filter(|&j| j >= 1)
}

/// Non-decimated Haar decomposition of every location.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDecomposition {
    /// Wavelet coefficients `W_j`, `T x N`, for `j = 1..=levels`.
    pub coefficients: Vec<DenseArray>,
    /// Additive detail components `D_j`, `T x N`.
    pub details: Vec<DenseArray>,
    /// Smooth component `S_J`, `T x N`.
    pub smooth: DenseArray,
    pub levels: usize,
}

impl ScaleDecomposition {
    /// `sum_j D_j + S_J`.
    pub fn reconstruct(&self) -> DenseArray {
        let mut out = self.smooth.clone();
        for d in &self.details {
            for (o, v) in out.data_mut().iter_mut().zip(d.data()) {
                *o += v;
            }
        }
        out
    }
}

/// One level of the pyramid on a single circular series.
fn analysis_step(v: &[f64], lag: usize) -> (Vec<f64>, Vec<f64>) {
    let t_len = v.len();
    let mut w = vec![0.0; t_len];
    let mut s = vec![0.0; t_len];
    for t in 0..t_len {
        let back = v[(t + t_len - lag % t_len) % t_len];
        w[t] = 0.5 * (v[t] - back);
        s[t] = 0.5 * (v[t] + back);
    }
    (w, s)
}

/// Inverse of [`analysis_step`]; `w` may be `None` for zero coefficients.
fn synthesis_step(w: Option<&[f64]>, s: &[f64], lag: usize) -> Vec<f64> {
    let t_len = s.len();
    (0..t_len)
        .map(|t| {
            let fwd = (t + lag) % t_len;
            let smooth = 0.5 * (s[t] + s[fwd]);
            match w {
                Some(w) => smooth + 0.5 * (w[t] - w[fwd]),
                None => smooth,
            }
        })
        .collect()
}

fn level_lag(j: usize) -> usize {
    1 << (j - 1)
}

struct LocationDecomp {
    coefficients: Vec<Vec<f64>>,
    details: Vec<Vec<f64>>,
    smooth: Vec<f64>,
}

fn decompose_location(x: &[f64], levels: usize) -> LocationDecomp {
    let mut coefficients = Vec::with_capacity(levels);
    let mut v = x.to_vec();
    for j in 1..=levels {
        let (w, s) = analysis_step(&v, level_lag(j));
        coefficients.push(w);
        v = s;
    }
    let zeros = vec![0.0; x.len()];
    let details = (1..=levels)
        .map(|j| {
            let mut d = synthesis_step(Some(&coefficients[j - 1]), &zeros, level_lag(j));
            for k in (1..j).rev() {
                d = synthesis_step(None, &d, level_lag(k));
            }
            d
        })
        .collect();
    let mut smooth = v;
    for k in (1..=levels).rev() {
        smooth = synthesis_step(None, &smooth, level_lag(k));
    }
    LocationDecomp {
        coefficients,
        details,
        smooth,
    }
}

fn columns_to_matrix(t_len: usize, cols: &[&Vec<f64>]) -> DenseArray {
    let n = cols.len();
    let mut data = vec![0.0; t_len * n];
    for (i, c) in cols.iter().enumerate() {
        for (t, &v) in c.iter().enumerate() {
            data[t * n + i] = v;
        }
    }
    DenseArray::matrix(t_len, n, data).expect("matrix shape")
}

/// Haar maximal-overlap wavelet transform with `levels` levels.
pub fn modwt(series: &GridSeries, levels: usize) -> Result<ScaleDecomposition> {
    modwt_values(series.values(), levels)
}

/// As [`modwt`], on a bare `T x N` array.
pub fn modwt_values(values: &DenseArray, levels: usize) -> Result<ScaleDecomposition> {
    let t_len = values.rows();
    if levels == 0 {
        return Err(Error::InvalidConfig("modwt needs at least one level".into()));
    }
    let needed = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if levels >= usize::BITS as usize || t_len < needed {
        return Err(Error::LevelsTooDeep {
            levels,
            needed,
            got: t_len,
        });
    }
    let per_loc: Vec<LocationDecomp> = (0..values.cols())
        .into_par_iter()
        .map(|i| decompose_location(&values.column(i), levels))
        .collect();
    let gather = |f: &dyn Fn(&LocationDecomp) -> &Vec<f64>| {
        columns_to_matrix(t_len, &per_loc.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ScaleDecomposition {
        coefficients: (0..levels).map(|j| gather(&|d| &d.coefficients[j])).collect(),
        details: (0..levels).map(|j| gather(&|d| &d.details[j])).collect(),
        smooth: gather(&|d| &d.smooth),
        levels,
    })
}

/// Pairwise correlation of locations at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSimilarity {
    pub scale: usize,
    /// `N x N`, symmetric, unit diagonal.
    pub matrix: DenseArray,
    /// Locations with no variance at this scale; their off-diagonal
    /// similarities are set to 0.
    pub zero_variance: Vec<usize>,
}

/// Pearson correlation between the level `s - 2` wavelet coefficients of
/// every location pair, skipping the first `2^j` boundary coefficients.
pub fn scale_similarity(decomp: &ScaleDecomposition, scale: usize) -> Result<ScaleSimilarity> {
    let level = scale_to_level(scale)
        .filter(|&j| j <= decomp.levels)
        .ok_or(Error::ScaleOutOfRange {
            scale,
            min: 3,
            max: decomp.levels + 2,
        })?;
    let w = &decomp.coefficients[level - 1];
    let (t_len, n) = (w.rows(), w.cols());
    let skip = (1usize << level).min(t_len);

    let centered: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let col: Vec<f64> = (skip..t_len).map(|t| w.get(t, i)).collect();
            let mean = if col.is_empty() { 0.0 } else { col.iter().sum::<f64>() / col.len() as f64 };
            let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let ss = c.iter().map(|v| v * v).sum::<f64>();
            (c, ss)
        })
        .collect();
    let zero_variance: Vec<usize> = (0..n).filter(|&i| !(centered[i].1 > 0.0)).collect();
    if !zero_variance.is_empty() {
        log::warn!(
            "scale {scale}: {} location(s) have zero variance; their similarities are set to 0",
            zero_variance.len()
        );
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 1.0;
                    }
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    let (ca, sa) = &centered[a];
                    let (cb, sb) = &centered[b];
                    if !(*sa > 0.0 && *sb > 0.0) {
                        return 0.0;
                    }
                    let sxy: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                    (sxy / (sa * sb).sqrt()).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(ScaleSimilarity {
        scale,
        matrix: DenseArray::from_rows(&rows)?,
        zero_variance,
    })
}

/// Thresholded similarity graph at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleNetwork {
    pub scale: usize,
    pub similarity: DenseArray,
    /// Row-major `N x N`.
    pub adjacency: Vec<bool>,
    pub degrees: Vec<usize>,
}

impl ScaleNetwork {
    pub fn n_locations(&self) -> usize {
        self.degrees.len()
    }

    pub fn linked(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_locations() + j]
    }

    /// Undirected links as `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_locations();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.linked(i, j))
            .collect()
    }
}

/// Link every distinct pair with `|similarity| >= threshold`.
pub fn build_network(similarity: &DenseArray, scale: usize, threshold: f64) -> Result<ScaleNetwork> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n = similarity.rows();
    if similarity.shape() != [n, n] {
        return Err(Error::shape(
            "build_network",
            format!("similarity must be square, got {:?}", similarity.shape()),
        ));
    }
    let mut adjacency = vec![false; n * n];
    let mut degrees = vec![0; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = similarity.get(i, j).abs().max(similarity.get(j, i).abs());
            if s >= threshold {
                adjacency[i * n + j] = true;
                adjacency[j * n + i] = true;
                degrees[i] += 1;
                degrees[j] += 1;
            }
        }
    }
    Ok(ScaleNetwork {
        scale,
        similarity: similarity.clone(),
        adjacency,
        degrees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRecord {
    pub lat: f64,
    pub lon: f64,
    pub degree: usize,
    pub scale: usize,
}

/// One record per location, in location order.
pub fn degree_heatmap(network: &ScaleNetwork, locations: &[Location]) -> Result<Vec<DegreeRecord>> {
    if locations.len() != network.n_locations() {
        return Err(Error::shape(
            "degree_heatmap",
            format!("{} locations for a network of {}", locations.len(), network.n_locations()),
        ));
    }
    Ok(locations
        .iter()
        .zip(&network.degrees)
        .map(|(loc, &degree)| DegreeRecord {
            lat: loc.lat,
            lon: loc.lon,
            degree,
            scale: network.scale,
        })
        .collect())
}

/// Named latitude/longitude box; bounds inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Region {
    pub fn new(name: impl Into<String>, lat: (f64, f64), lon: (f64, f64)) -> Result<Self> {
        let r = Self {
            name: name.into(),
            lat_min: lat.0,
            lat_max: lat.1,
            lon_min: lon.0,
            lon_max: lon.1,
        };
        let ok = r.lat_min <= r.lat_max
            && r.lon_min <= r.lon_max
            && r.lat_min >= -90.0
            && r.lat_max <= 90.0
            && r.lon_min >= -180.0
            && r.lon_max <= 180.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid region bounds for {}", r.name)));
        }
        Ok(r)
    }

    pub fn contains(&self, loc: &Location) -> bool {
        (self.lat_min..=self.lat_max).contains(&loc.lat) && (self.lon_min..=self.lon_max).contains(&loc.lon)
    }
}

/// Tag given to endpoints outside every tagging region.
pub const UNTAGGED_REGION: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEdge {
    pub source: Location,
    pub target: Location,
    pub similarity: f64,
    pub target_region: String,
}

/// Links with at least one endpoint in `region`, oriented so the source lies
/// inside it. Each target is tagged with the first region in `tags` that
/// contains it.
pub fn connection_map(
    network: &ScaleNetwork,
    locations: &[Location],
    region: &Region,
    tags: &[Region],
) -> Result<Vec<RegionEdge>> {
    if locations.len() != network.n_locations() {
        return Err(Error::shape(
            "connection_map",
            format!("{} locations for a network of {}", locations.len(), network.n_locations()),
        ));
    }
    let inside: Vec<bool> = locations.iter().map(|l| region.contains(l)).collect();
    if !inside.iter().any(|&b| b) {
        log::warn!("region {} contains no locations", region.name);
        return Ok(Vec::new());
    }
    let tag = |loc: &Location| {
        tags.iter()
            .find(|r| r.contains(loc))
            .map_or(UNTAGGED_REGION.to_string(), |r| r.name.clone())
    };
    Ok(network
        .edges()
        .into_iter()
        .filter_map(|(i, j)| match (inside[i], inside[j]) {
            (true, _) => Some((i, j)),
            (false, true) => Some((j, i)),
            _ => None,
        })
        .map(|(s, t)| RegionEdge {
            source: locations[s].clone(),
            target: locations[t].clone(),
            similarity: network.similarity.get(s, t),
            target_region: tag(&locations[t]),
        })
        .collect())
}
