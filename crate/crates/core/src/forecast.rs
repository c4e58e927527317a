//! Per-cell, per-month class probabilities produced by any model.

use std::io::{Read, Write};
use std::ops::Range;

use crate::error::{arg_err, Error, Result};
use crate::features::Provenance;

#[derive(Debug, Clone)]
pub struct ForecastCube {
    t_len: usize,
    rows: usize,
    cols: usize,
    n_classes: usize,
    start_month: i64,
    /// (t, row, col, class); NaN where no forecast was made.
    probs: Vec<f64>,
}

impl ForecastCube {
    /// A cube with no predicted entries.
    pub fn empty(t_len: usize, rows: usize, cols: usize, n_classes: usize, start_month: i64) -> Self {
        Self {
            t_len,
            rows,
            cols,
            n_classes,
            start_month,
            probs: vec![f64::NAN; t_len * rows * cols * n_classes],
        }
    }

    /// Builds from per-sample probability rows keyed by provenance.
    pub fn from_samples(
        dims: (usize, usize, usize),
        n_classes: usize,
        start_month: i64,
        provenance: &[Provenance],
        probs: &[Vec<f64>],
    ) -> Result<Self> {
        if provenance.len() != probs.len() {
            return arg_err("provenance and probability rows differ in length");
        }
        let mut out = Self::empty(dims.0, dims.1, dims.2, n_classes, start_month);
        for (p, row) in provenance.iter().zip(probs) {
            out.set(p.t, p.row, p.col, row)?;
        }
        Ok(out)
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

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t_len, self.rows, self.cols)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn start_month(&self) -> i64 {
        self.start_month
    }

    pub fn with_start_month(mut self, start_month: i64) -> Self {
        self.start_month = start_month;
        self
    }

    #[inline]
    fn offset(&self, t: usize, row: usize, col: usize) -> usize {
        ((t * self.rows + row) * self.cols + col) * self.n_classes
    }

    pub fn set(&mut self, t: usize, row: usize, col: usize, probs: &[f64]) -> Result<()> {
        if probs.len() != self.n_classes {
            return arg_err(format!("expected {} class probabilities, got {}", self.n_classes, probs.len()));
        }
        if t >= self.t_len || row >= self.rows || col >= self.cols {
            return arg_err(format!("forecast index ({t}, {row}, {col}) out of range"));
        }
        let o = self.offset(t, row, col);
        self.probs[o..o + self.n_classes].copy_from_slice(probs);
        Ok(())
    }

    /// Class probabilities at an entry, `None` when unpredicted.
    #[inline]
    pub fn get(&self, t: usize, row: usize, col: usize) -> Option<&[f64]> {
        let o = self.offset(t, row, col);
        let p = &self.probs[o..o + self.n_classes];
        (!p[0].is_nan()).then_some(p)
    }

    /// Drought score for binary forecasts: probability of class 1.
    #[inline]
    pub fn score(&self, t: usize, row: usize, col: usize) -> Option<f64> {
        self.get(t, row, col).map(|p| p[1])
    }

    /// Most probable class, ties to the lower index.
    pub fn argmax(&self, t: usize, row: usize, col: usize) -> Option<u8> {
        self.get(t, row, col).map(argmax)
    }

    pub fn is_month_predicted(&self, t: usize) -> bool {
        (0..self.rows).any(|r| (0..self.cols).any(|c| self.get(t, r, c).is_some()))
    }

    pub fn predicted_months(&self) -> Vec<usize> {
        (0..self.t_len).filter(|&t| self.is_month_predicted(t)).collect()
    }

    /// Clears every month outside `months`.
    pub fn restrict_months(&mut self, months: Range<usize>) {
        let g = self.rows * self.cols * self.n_classes;
        for t in (0..self.t_len).filter(|t| !months.contains(t)) {
            self.probs[t * g..(t + 1) * g].fill(f64::NAN);
        }
    }

    pub fn sub_grid(&self, rows: Range<usize>, cols: Range<usize>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() || rows.end > self.rows || cols.end > self.cols {
            return arg_err("sub-grid outside forecast grid");
        }
        let mut out = Self::empty(self.t_len, rows.len(), cols.len(), self.n_classes, self.start_month);
        for t in 0..self.t_len {
            for (i, r) in rows.clone().enumerate() {
                for (j, c) in cols.clone().enumerate() {
                    let (src, dst) = (self.offset(t, r, c), out.offset(t, i, j));
                    out.probs[dst..dst + self.n_classes].copy_from_slice(&self.probs[src..src + self.n_classes]);
                }
            }
        }
        Ok(out)
    }

    /// Entry-wise arithmetic mean of member forecasts. An entry is predicted
    /// only where every member predicts it.
    pub fn mean(members: &[ForecastCube]) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::Argument("empty ensemble".into()))?;
        if members.iter().any(|m| m.dims() != first.dims() || m.n_classes != first.n_classes) {
            return arg_err("ensemble members disagree on shape");
        }
        let n = members.len() as f64;
        let probs = (0..first.probs.len())
            .map(|i| members.iter().map(|m| m.probs[i]).sum::<f64>() / n)
            .collect();
        Ok(Self { probs, ..first.clone() })
    }

    /// Writes `t,row,col,p0..pK` for predicted entries.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Format(e.to_string());
        let mut header = vec!["t".to_string(), "row".into(), "col".into()];
        header.extend((0..self.n_classes).map(|k| format!("p{k}")));
        w.write_record(&header).map_err(err)?;
        for t in 0..self.t_len {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    if let Some(p) = self.get(t, r, c) {
                        let mut rec = vec![t.to_string(), r.to_string(), c.to_string()];
                        rec.extend(p.iter().map(|v| format!("{v:.17e}")));
                        w.write_record(&rec).map_err(err)?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads the CSV written by [`ForecastCube::write_csv`].
    pub fn read_csv<R: Read>(reader: R, dims: (usize, usize, usize), start_month: i64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let err = |e: csv::Error| Error::Format(e.to_string());
        let header = rdr.headers().map_err(err)?.clone();
        if header.len() < 5 || &header[0] != "t" || &header[1] != "row" || &header[2] != "col" {
            return Err(Error::Format("expected header t,row,col,p0..pK".into()));
        }
        let k = header.len() - 3;
        let mut out = Self::empty(dims.0, dims.1, dims.2, k, start_month);
        for rec in rdr.records() {
            let rec = rec.map_err(err)?;
            let idx = |i: usize| -> Result<usize> {
                rec[i].trim().parse().map_err(|_| Error::Format(format!("bad index {:?}", &rec[i])))
            };
            let probs: Vec<f64> = (3..3 + k)
                .map(|i| rec[i].trim().parse().map_err(|_| Error::Format(format!("bad probability {:?}", &rec[i]))))
                .collect::<Result<_>>()?;
            out.set(idx(0)?, idx(1)?, idx(2)?, &probs).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(out)
    }
}

/// Bit-level equality; unpredicted (NaN) entries compare equal.
impl PartialEq for ForecastCube {
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.n_classes == other.n_classes
            && self.start_month == other.start_month
            && self.probs.iter().zip(&other.probs).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn argmax(p: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best as u8
}
