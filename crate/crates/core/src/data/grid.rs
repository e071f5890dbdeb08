use std::collections::HashSet;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

pub const GRID_MAGIC: [u8; 4] = *b"CTGR";
pub const GRID_VERSION: u32 = 1;

/// Monday 2000-01-03, used when a generator is not given a start week.
pub fn default_start_week() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

impl Location {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self {
            id: id.into(),
            lat,
            lon,
        }
    }
}

/// Weekly observations: rows are weeks, columns are locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    values: DenseArray,
    locations: Vec<Location>,
    start_week: NaiveDate,
}

impl GridSeries {
    pub fn new(values: DenseArray, locations: Vec<Location>, start_week: NaiveDate) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::shape(
                "GridSeries",
                format!("values must be 2-D, got shape {:?}", values.shape()),
            ));
        }
        if values.rows() == 0 {
            return Err(Error::EmptySeries);
        }
        if values.cols() != locations.len() {
            return Err(Error::shape(
                "GridSeries",
                format!(
                    "{} value columns but {} locations",
                    values.cols(),
                    locations.len()
                ),
            ));
        }
        let mut seen = HashSet::new();
        for loc in &locations {
            validate_id(&loc.id)?;
            if !seen.insert(loc.id.as_str()) {
                return Err(Error::DuplicateLocation(loc.id.clone()));
            }
            if !(-90.0..=90.0).contains(&loc.lat) || !(-180.0..=180.0).contains(&loc.lon) {
                return Err(Error::InvalidConfig(format!(
                    "location {} has out-of-range coordinates ({}, {})",
                    loc.id, loc.lat, loc.lon
                )));
            }
        }
        let n = locations.len();
        if let Some(pos) = values.data().iter().position(|v| v.is_nan()) {
            return Err(Error::NanCell {
                line: pos / n + 1,
                column: pos % n + 1,
            });
        }
        Ok(Self {
            values,
            locations,
            start_week,
        })
    }

    pub fn values(&self) -> &DenseArray {
        &self.values
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn start_week(&self) -> NaiveDate {
        self.start_week
    }

    /// Number of weeks (T).
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of locations (N).
    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn week(&self, t: usize) -> NaiveDate {
        add_weeks(self.start_week, t)
    }

    pub fn location_ids(&self) -> Vec<&str> {
        self.locations.iter().map(|l| l.id.as_str()).collect()
    }

    /// Rows `start..end`, with the start week moved accordingly.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidConfig(format!(
                "row range {start}..{end} invalid for a series of {} weeks",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.slice_rows(start, end),
            locations: self.locations.clone(),
            start_week: self.week(start),
        })
    }

    /// Same locations and calendar, different values.
    pub fn with_values(&self, values: DenseArray) -> Result<Self> {
        Self::new(values, self.locations.clone(), self.start_week)
    }
}

pub(crate) fn add_weeks(start: NaiveDate, weeks: usize) -> NaiveDate {
    start
        .checked_add_days(Days::new(7 * weeks as u64))
        .expect("week index within calendar range")
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.trim() != id || id.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidConfig(format!(
            "location id {id:?} must be non-empty with no surrounding whitespace, commas or quotes"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Binary,
}

impl GridFormat {
    /// `.csv` selects CSV, anything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => GridFormat::Csv,
            _ => GridFormat::Binary,
        }
    }
}

/// Load a grid, detecting the format from the magic bytes.
pub fn load_grid(path: impl AsRef<Path>) -> Result<GridSeries> {
    let bytes = std::fs::read(path)?;
    decode_grid(&bytes)
}

pub fn decode_grid(bytes: &[u8]) -> Result<GridSeries> {
    if bytes.starts_with(&GRID_MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 1,
            message: format!("not UTF-8 text and not a binary grid: {e}"),
        })?;
        parse_csv(text)
    }
}

pub fn save_grid(series: &GridSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_grid(series, GridFormat::from_path(path));
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_grid(series: &GridSeries, format: GridFormat) -> Vec<u8> {
    match format {
        GridFormat::Csv => to_csv(series).into_bytes(),
        GridFormat::Binary => encode_binary(series),
    }
}

/// CSV layout:
///
/// ```text
/// #lat,<lat1>,<lat2>,...
/// #lon,<lon1>,<lon2>,...
/// week,<id1>,<id2>,...
/// 2000-01-03,<v11>,<v12>,...
/// ```
///
/// The `#lat`/`#lon` lines are optional on input (coordinates default to 0).
/// Values are written in shortest round-trip form, so a CSV round trip is
/// bit-exact.
pub fn to_csv(series: &GridSeries) -> String {
    let mut out = String::new();
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(",");
    out.push_str("#lat,");
    out.push_str(&join(&mut series.locations.iter().map(|l| l.lat.to_string())));
    out.push('\n');
    out.push_str("#lon,");
    out.push_str(&join(&mut series.locations.iter().map(|l| l.lon.to_string())));
    out.push('\n');
    out.push_str("week,");
    out.push_str(&series.location_ids().join(","));
    out.push('\n');
    for t in 0..series.len() {
        out.push_str(&series.week(t).format("%Y-%m-%d").to_string());
        for v in series.values.row(t) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

fn parse_coords(line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad coordinate {f:?}: {e}"),
            })
        })
        .collect()
}

pub fn parse_csv(text: &str) -> Result<GridSeries> {
    let mut lats: Option<Vec<f64>> = None;
    let mut lons: Option<Vec<f64>> = None;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut start: Option<NaiveDate> = None;
    let mut n_rows = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if let Some(tag) = fields[0].strip_prefix('#') {
            match tag.trim() {
                "lat" => lats = Some(parse_coords(line_no, &fields[1..])?),
                "lon" => lons = Some(parse_coords(line_no, &fields[1..])?),
                _ => {}
            }
            continue;
        }
        let Some(ids) = &header else {
            if fields[0].trim() != "week" {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected header starting with `week`".into(),
                });
            }
            let ids: Vec<String> = fields[1..].iter().map(|s| s.trim().to_string()).collect();
            if ids.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "header names no locations".into(),
                });
            }
            let mut seen = HashSet::new();
            for id in &ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::DuplicateLocation(id.clone()));
                }
            }
            header = Some(ids);
            continue;
        };
        if fields.len() != ids.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", ids.len() + 1, fields.len()),
            });
        }
        let week = NaiveDate::parse_from_str(fields[0].trim(), "%Y-%m-%d").map_err(|e| {
            Error::Parse {
                line: line_no,
                message: format!("bad week date {:?}: {e}", fields[0]),
            }
        })?;
        match start {
            None => start = Some(week),
            Some(s) => {
                if week != add_weeks(s, n_rows) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "week {week} breaks the weekly cadence (expected {})",
                            add_weeks(s, n_rows)
                        ),
                    });
                }
            }
        }
        for (j, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad value {f:?} in column {}: {e}", j + 2),
            })?;
            if v.is_nan() {
                return Err(Error::NanCell {
                    line: line_no,
                    column: j + 2,
                });
            }
            rows.push(v);
        }
        n_rows += 1;
    }

    let ids = header.ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let start = start.ok_or(Error::Parse {
        line: text.lines().count().max(1),
        message: "no data rows".into(),
    })?;
    let n = ids.len();
    let check = |v: &Option<Vec<f64>>, what: &str| -> Result<Vec<f64>> {
        match v {
            Some(v) if v.len() == n => Ok(v.clone()),
            Some(v) => Err(Error::Parse {
                line: 1,
                message: format!("#{what} has {} entries for {n} locations", v.len()),
            }),
            None => Ok(vec![0.0; n]),
        }
    };
    let lats = check(&lats, "lat")?;
    let lons = check(&lons, "lon")?;
    let locations = ids
        .into_iter()
        .zip(lats.into_iter().zip(lons))
        .map(|(id, (lat, lon))| Location { id, lat, lon })
        .collect();
    GridSeries::new(DenseArray::matrix(n_rows, n, rows)?, locations, start)
}

fn encode_binary(series: &GridSeries) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + series.values.len() * 8);
    buf.extend_from_slice(&GRID_MAGIC);
    buf.write_u32::<LittleEndian>(GRID_VERSION).unwrap();
    buf.write_u64::<LittleEndian>(series.len() as u64).unwrap();
    buf.write_u64::<LittleEndian>(series.n_locations() as u64).unwrap();
    let date = series.start_week.format("%Y-%m-%d").to_string();
    buf.write_u32::<LittleEndian>(date.len() as u32).unwrap();
    buf.write_all(date.as_bytes()).unwrap();
    for loc in &series.locations {
        buf.write_u32::<LittleEndian>(loc.id.len() as u32).unwrap();
        buf.write_all(loc.id.as_bytes()).unwrap();
        buf.write_f64::<LittleEndian>(loc.lat).unwrap();
        buf.write_f64::<LittleEndian>(loc.lon).unwrap();
    }
    for &v in series.values.data() {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
    buf
}

fn corrupt(e: std::io::Error) -> Error {
    Error::Corrupt(format!("truncated binary grid: {e}"))
}

fn read_string(cur: &mut Cursor<&[u8]>, max: usize) -> Result<String> {
    let len = cur.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    if len > max {
        return Err(Error::Corrupt(format!("string length {len} exceeds {max}")));
    }
    let mut bytes = vec![0u8; len];
    cur.read_exact(&mut bytes).map_err(corrupt)?;
    String::from_utf8(bytes).map_err(|e| Error::Corrupt(format!("invalid UTF-8: {e}")))
}

fn decode_binary(bytes: &[u8]) -> Result<GridSeries> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(corrupt)?;
    if magic != GRID_MAGIC {
        return Err(Error::BadMagic {
            expected: GRID_MAGIC,
            found: magic,
        });
    }
    let version = cur.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != GRID_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: GRID_VERSION,
        });
    }
    let t = cur.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
    let n = cur.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
    let needed = t.checked_mul(n).and_then(|c| c.checked_mul(8));
    if needed.is_none_or(|b| b > bytes.len()) {
        return Err(Error::Corrupt(format!(
            "header claims {t}x{n} values, file has {} bytes",
            bytes.len()
        )));
    }
    let date = read_string(&mut cur, 32)?;
    let start = NaiveDate::parse_from_str(&date, "%Y-%m-%d")
        .map_err(|e| Error::Corrupt(format!("bad start week {date:?}: {e}")))?;
    let mut locations = Vec::with_capacity(n);
    for _ in 0..n {
        let id = read_string(&mut cur, 4096)?;
        let lat = cur.read_f64::<LittleEndian>().map_err(corrupt)?;
        let lon = cur.read_f64::<LittleEndian>().map_err(corrupt)?;
        locations.push(Location { id, lat, lon });
    }
    let mut values = vec![0.0; t * n];
    cur.read_f64_into::<LittleEndian>(&mut values).map_err(corrupt)?;
    if (cur.position() as usize) != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after grid values".into()));
    }
    GridSeries::new(DenseArray::matrix(t, n, values)?, locations, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(t: usize, n: usize, seed: u64) -> GridSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..t * n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let locations = (0..n)
            .map(|i| Location::new(format!("p{i}"), -10.0 + i as f64, 20.5 * i as f64 - 40.0))
            .collect();
        GridSeries::new(DenseArray::matrix(t, n, values).unwrap(), locations, default_start_week())
            .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let g = random_grid(10, 4, 1);
        let back = decode_grid(&encode_grid(&g, GridFormat::Binary)).unwrap();
        assert_eq!(back, g);
        for (a, b) in back.values().data().iter().zip(g.values().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let g = random_grid(7, 3, 2);
        let back = parse_csv(&to_csv(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let g = random_grid(5, 2, 3);
        for name in ["g.csv", "g.ctgr"] {
            let p = dir.path().join(name);
            save_grid(&g, &p).unwrap();
            assert_eq!(load_grid(&p).unwrap(), g);
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = "week,a,b,a\n2000-01-03,1,2,3\n";
        match parse_csv(text) {
            Err(Error::DuplicateLocation(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(parse_csv(""), Err(Error::Parse { .. })));
        assert!(matches!(decode_grid(b""), Err(Error::Parse { .. })));
    }

    #[test]
    fn nan_cell_is_rejected() {
        let text = "week,a,b\n2000-01-03,1,2\n2000-01-10,NaN,2\n";
        assert!(matches!(
            parse_csv(text),
            Err(Error::NanCell { line: 3, column: 2 })
        ));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "week,a\n2000-01-03,1\n2000-01-10,x\n";
        match parse_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let gap = "week,a\n2000-01-03,1\n2000-01-24,2\n";
        assert!(matches!(parse_csv(gap), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn coordinates_are_optional() {
        let g = parse_csv("week,a\n2000-01-03,1.5\n").unwrap();
        assert_eq!(g.locations()[0], Location::new("a", 0.0, 0.0));
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn bad_magic_and_version() {
        let g = random_grid(2, 1, 4);
        let mut bytes = encode_grid(&g, GridFormat::Binary);
        bytes[4] = 9;
        assert!(matches!(
            decode_grid(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
        let truncated = &encode_grid(&g, GridFormat::Binary)[..20];
        assert!(decode_grid(truncated).is_err());
    }

    #[test]
    fn slice_shifts_calendar() {
        let g = random_grid(10, 2, 5);
        let s = g.slice(3, 6).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.start_week(), g.week(3));
        assert_eq!(s.values().row(0), g.values().row(3));
        assert!(g.slice(5, 5).is_err());
    }
}
