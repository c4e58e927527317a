//! Monthly PDSI grids stored as a (time, row, col) tensor.
//!
//! The on-disk PDSC v1 layout is little-endian:
//!
//! | offset | type      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | `[u8; 4]` | magic `PDSC`                   |
//! | 4      | `u32`     | version (= 1)                  |
//! | 8      | `u32`     | t_len                          |
//! | 12     | `u32`     | rows                           |
//! | 16     | `u32`     | cols                           |
//! | 20     | `i64`     | start month (months since 1958-01) |
//! | 28     | `f32 * n` | values, t-major then row then col; NaN = missing |

use std::fs;
use std::io::{BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::labels::ClassScheme;

pub const PDSC_MAGIC: &[u8; 4] = b"PDSC";
pub const PDSC_VERSION: u32 = 1;
pub const PDSC_HEADER_LEN: usize = 28;

/// Sanity bound on valid PDSI magnitudes.
pub const PDSI_BOUND: f32 = 20.0;

#[derive(Debug, Clone)]
pub struct PdsiCube {
    t_len: usize,
    rows: usize,
    cols: usize,
    start_month: i64,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl PdsiCube {
    /// Builds a cube from row-major values. NaN entries become missing.
    pub fn new(
        t_len: usize,
        rows: usize,
        cols: usize,
        start_month: i64,
        values: Vec<f32>,
    ) -> Result<Self> {
        let mask = values.iter().map(|v| !v.is_nan()).collect();
        Self::with_mask(t_len, rows, cols, start_month, values, mask)
    }

    /// Builds a cube with an explicit validity mask; masked slots are stored as NaN.
    pub fn with_mask(
        t_len: usize,
        rows: usize,
        cols: usize,
        start_month: i64,
        mut values: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if t_len == 0 || rows == 0 || cols == 0 {
            return arg_err(format!("cube dims must be positive, got {t_len}x{rows}x{cols}"));
        }
        let n = t_len
            .checked_mul(rows)
            .and_then(|x| x.checked_mul(cols))
            .ok_or_else(|| Error::Argument("cube dims overflow".into()))?;
        if values.len() != n || mask.len() != n {
            return arg_err(format!(
                "expected {n} entries, got {} values and {} mask flags",
                values.len(),
                mask.len()
            ));
        }
        for (i, (v, &ok)) in values.iter_mut().zip(&mask).enumerate() {
            if !ok {
                *v = f32::NAN;
            } else if !v.is_finite() || v.abs() > PDSI_BOUND {
                return arg_err(format!("entry {i} holds {v}, outside [-20, 20]"));
            }
        }
        Ok(Self { t_len, rows, cols, start_month, values, mask })
    }

    /// A cube with every entry set to `value`.
    pub fn filled(t_len: usize, rows: usize, cols: usize, value: f32) -> Result<Self> {
        Self::new(t_len, rows, cols, 0, vec![value; t_len * rows * cols])
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start_month(&self) -> i64 {
        self.start_month
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t_len, self.rows, self.cols)
    }

    pub fn grid_len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn index(&self, t: usize, row: usize, col: usize) -> usize {
        (t * self.rows + row) * self.cols + col
    }

    /// Value at an entry; NaN when missing.
    #[inline]
    pub fn value(&self, t: usize, row: usize, col: usize) -> f32 {
        self.values[self.index(t, row, col)]
    }

    #[inline]
    pub fn is_valid(&self, t: usize, row: usize, col: usize) -> bool {
        self.mask[self.index(t, row, col)]
    }

    /// Value with missing entries read as 0.0.
    #[inline]
    pub fn value_or_zero(&self, t: usize, row: usize, col: usize) -> f32 {
        let i = self.index(t, row, col);
        if self.mask[i] {
            self.values[i]
        } else {
            0.0
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// One month as a row-major grid slice.
    pub fn month(&self, t: usize) -> &[f32] {
        let g = self.grid_len();
        &self.values[t * g..(t + 1) * g]
    }

    pub fn month_mask(&self, t: usize) -> &[bool] {
        let g = self.grid_len();
        &self.mask[t * g..(t + 1) * g]
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(&v, _)| v)
    }

    /// Bit-exact equality on dims, start month, values, and mask.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.start_month == other.start_month
            && self.mask == other.mask
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Months `range` as a new cube; the start month shifts accordingly.
    pub fn slice_months(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.t_len {
            return arg_err(format!(
                "month range {range:?} invalid for cube of {} months",
                self.t_len
            ));
        }
        let g = self.grid_len();
        let span = range.start * g..range.end * g;
        Ok(Self {
            t_len: range.len(),
            rows: self.rows,
            cols: self.cols,
            start_month: self.start_month + range.start as i64,
            values: self.values[span.clone()].to_vec(),
            mask: self.mask[span].to_vec(),
        })
    }

    /// Spatial window `rows x cols` over every month.
    pub fn sub_grid(&self, rows: Range<usize>, cols: Range<usize>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() || rows.end > self.rows || cols.end > self.cols {
            return arg_err(format!(
                "sub-grid {rows:?} x {cols:?} outside {}x{} grid",
                self.rows, self.cols
            ));
        }
        let n = self.t_len * rows.len() * cols.len();
        let mut values = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for t in 0..self.t_len {
            for r in rows.clone() {
                let base = self.index(t, r, 0);
                values.extend_from_slice(&self.values[base + cols.start..base + cols.end]);
                mask.extend_from_slice(&self.mask[base + cols.start..base + cols.end]);
            }
        }
        Ok(Self {
            t_len: self.t_len,
            rows: rows.len(),
            cols: cols.len(),
            start_month: self.start_month,
            values,
            mask,
        })
    }

    /// Joins cubes along time. Spatial dims must agree.
    pub fn concat_months(parts: &[&PdsiCube]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        let mut mask = Vec::new();
        let mut t_len = 0;
        for p in parts {
            if (p.rows, p.cols) != (first.rows, first.cols) {
                return arg_err("spatial dims differ between parts");
            }
            values.extend_from_slice(&p.values);
            mask.extend_from_slice(&p.mask);
            t_len += p.t_len;
        }
        Ok(Self { t_len, rows: first.rows, cols: first.cols, start_month: first.start_month, values, mask })
    }

    /// Empirical quantile of valid values (nearest-rank on the sorted sample).
    pub fn quantile(&self, q: f64) -> Result<f32> {
        if !(0.0..=1.0).contains(&q) {
            return arg_err(format!("quantile {q} outside [0, 1]"));
        }
        let mut v: Vec<f32> = self.valid_values().collect();
        if v.is_empty() {
            return Err(Error::EmptyData("cube has no valid entries".into()));
        }
        v.sort_by(f32::total_cmp);
        let idx = ((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1);
        Ok(v[idx])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PDSC_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(PDSC_MAGIC);
        out.extend_from_slice(&PDSC_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.t_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&self.start_month.to_le_bytes());
        for (&v, &m) in self.values.iter().zip(&self.mask) {
            let v = if m { v } else { f32::NAN };
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != PDSC_MAGIC {
            return Err(Error::Format("missing PDSC magic".into()));
        }
        if bytes.len() < PDSC_HEADER_LEN {
            return Err(Error::Corrupt(format!(
                "header truncated at {} of {PDSC_HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != PDSC_VERSION {
            return Err(Error::UnsupportedVersion { found: version, expected: PDSC_VERSION });
        }
        let (t_len, rows, cols) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
        let start_month = i64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let n = t_len
            .checked_mul(rows)
            .and_then(|x| x.checked_mul(cols))
            .ok_or_else(|| Error::Corrupt("dims overflow".into()))?;
        let payload = &bytes[PDSC_HEADER_LEN..];
        if payload.len() != 4 * n {
            return Err(Error::Corrupt(format!(
                "payload holds {} bytes, dims {t_len}x{rows}x{cols} need {}",
                payload.len(),
                4 * n
            )));
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(t_len, rows, cols, start_month, values)
            .map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Reads `t,row,col,pdsi` records; absent entries become missing.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        t_len: usize,
        rows: usize,
        cols: usize,
        start_month: i64,
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let expected = ["t", "row", "col", "pdsi"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Format(format!("expected header t,row,col,pdsi, got {headers:?}")));
        }
        let n = t_len * rows * cols;
        let mut values = vec![f32::NAN; n];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let parse_idx = |i: usize, bound: usize| -> Result<usize> {
                let v: usize = field(i)
                    .parse()
                    .map_err(|_| Error::Format(format!("record {}: bad index {:?}", line + 1, field(i))))?;
                if v >= bound {
                    return Err(Error::Format(format!("record {}: index {v} out of range", line + 1)));
                }
                Ok(v)
            };
            let (t, r, c) = (parse_idx(0, t_len)?, parse_idx(1, rows)?, parse_idx(2, cols)?);
            let v: f32 = field(3)
                .parse()
                .map_err(|_| Error::Format(format!("record {}: bad value {:?}", line + 1, field(3))))?;
            values[(t * rows + r) * cols + c] = v;
        }
        Self::new(t_len, rows, cols, start_month, values)
    }

    pub fn load_csv(
        path: impl AsRef<Path>,
        t_len: usize,
        rows: usize,
        cols: usize,
        start_month: i64,
    ) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(BufReader::new(f), t_len, rows, cols, start_month)
    }
}

/// Drought prevalence summary for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub span_months: usize,
    pub pct_normal: f64,
    pub pct_drought: f64,
}

/// Chronological split: months `[0, floor(train_frac * t_len))` train, the rest test.
pub fn out_of_time_split(cube: &PdsiCube, train_frac: f64) -> Result<(PdsiCube, PdsiCube)> {
    let n_train = split_point(cube.t_len(), train_frac)?;
    Ok((cube.slice_months(0..n_train)?, cube.slice_months(n_train..cube.t_len())?))
}

/// Number of training months for a split, with the same checks as [`out_of_time_split`].
pub fn split_point(t_len: usize, train_frac: f64) -> Result<usize> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return arg_err(format!("train fraction {train_frac} must lie in (0, 1)"));
    }
    let n_train = (train_frac * t_len as f64).floor() as usize;
    if n_train == 0 || n_train >= t_len {
        return arg_err(format!(
            "split of {t_len} months at {train_frac} leaves an empty side"
        ));
    }
    Ok(n_train)
}

/// Row and column ranges of the centered crop keeping `keep_area_frac` of the area.
pub fn center_window(rows: usize, cols: usize, keep_area_frac: f64) -> Result<(Range<usize>, Range<usize>)> {
    if !(keep_area_frac > 0.0 && keep_area_frac <= 1.0) {
        return arg_err(format!("keep fraction {keep_area_frac} must lie in (0, 1]"));
    }
    let side = keep_area_frac.sqrt();
    let new_rows = ((rows as f64 * side).round() as usize).clamp(1, rows);
    let new_cols = ((cols as f64 * side).round() as usize).clamp(1, cols);
    let r0 = (rows - new_rows) / 2;
    let c0 = (cols - new_cols) / 2;
    Ok((r0..r0 + new_rows, c0..c0 + new_cols))
}

/// Centered sub-grid holding `keep_area_frac` of the area; time axis untouched.
pub fn crop_center(cube: &PdsiCube, keep_area_frac: f64) -> Result<PdsiCube> {
    let (r, c) = center_window(cube.rows(), cube.cols(), keep_area_frac)?;
    cube.sub_grid(r, c)
}

/// Percent of valid entries above / at-or-below the scheme's single threshold.
pub fn summarize(cube: &PdsiCube, scheme: &ClassScheme) -> Result<RegionStats> {
    let threshold = scheme
        .binary_threshold()
        .ok_or_else(|| Error::Argument("summary needs a binary scheme".into()))?;
    let (mut drought, mut total) = (0usize, 0usize);
    for v in cube.valid_values() {
        total += 1;
        if v as f64 <= threshold {
            drought += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyData("cube has no valid entries".into()));
    }
    let pct_drought = 100.0 * drought as f64 / total as f64;
    Ok(RegionStats { span_months: cube.t_len(), pct_normal: 100.0 - pct_drought, pct_drought })
}
