//! Classification metrics and per-cell metric maps with median aggregation.
//!
//! Undefined metrics (single-class truth for ROC AUC, no positives for
//! average precision, empty input for accuracy) are `None`, never errors.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{arg_err, Error, Result};
use crate::forecast::ForecastCube;
use crate::labels::LabelCube;

/// Probability cut used to turn binary scores into labels.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Probability that a random positive outscores a random negative, ties ½.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks over positives; ranks are 1-based
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: mean precision at the rank of each positive, walking
/// scores in descending order with ties kept in input order.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

/// F1 of the positive class; 0 when precision + recall = 0.
pub fn f1(pred: &[u8], labels: &[u8]) -> f64 {
    assert_eq!(pred.len(), labels.len());
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &y) in pred.iter().zip(labels) {
        match (p == 1, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn accuracy(pred: &[u8], labels: &[u8]) -> Option<f64> {
    assert_eq!(pred.len(), labels.len());
    if labels.is_empty() {
        return None;
    }
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Some(hits as f64 / labels.len() as f64)
}

/// Exact sample median; mean of the middle two for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    RocAuc,
    PrAuc,
    F1,
    Accuracy,
}

impl Metric {
    pub const BINARY: [Metric; 3] = [Metric::RocAuc, Metric::PrAuc, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::PrAuc => "pr_auc",
            Metric::F1 => "f1",
            Metric::Accuracy => "accuracy",
        }
    }

    fn binary_only(self) -> bool {
        !matches!(self, Metric::Accuracy)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roc_auc" => Ok(Metric::RocAuc),
            "pr_auc" => Ok(Metric::PrAuc),
            "f1" => Ok(Metric::F1),
            "accuracy" => Ok(Metric::Accuracy),
            other => arg_err(format!("unknown metric {other:?}")),
        }
    }
}

/// One metric value per cell (NaN where undefined) and the median over defined cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub median: f64,
    pub n_defined: usize,
}

impl MetricMap {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return arg_err("metric values do not match grid");
        }
        let n_defined = values.iter().filter(|v| !v.is_nan()).count();
        let median = median(&values).ok_or_else(|| Error::EmptyMetric("no cell has a defined value".into()))?;
        Ok(Self { rows, cols, values, median, n_defined })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn sub_grid(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.rows || cols.end > self.cols {
            return arg_err("sub-grid outside metric map");
        }
        let values = rows.clone().flat_map(|r| cols.clone().map(move |c| (r, c))).map(|(r, c)| self.get(r, c)).collect();
        Self::from_values(rows.len(), cols.len(), values)
    }

    /// Writes `row,col,value` with `nan` for undefined cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["row", "col", "value"]).map_err(err)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.get(r, c);
                let s = if v.is_nan() { "nan".to_string() } else { v.to_string() };
                w.write_record([r.to_string(), c.to_string(), s]).map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let err = |e: csv::Error| Error::Format(e.to_string());
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(err)?;
            let p = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            let r: usize = p(0).parse().map_err(|_| Error::Format("bad row".into()))?;
            let c: usize = p(1).parse().map_err(|_| Error::Format("bad col".into()))?;
            let v: f64 = if p(2) == "nan" { f64::NAN } else { p(2).parse().map_err(|_| Error::Format("bad value".into()))? };
            cells.push((r, c, v));
        }
        let rows = cells.iter().map(|x| x.0 + 1).max().unwrap_or(0);
        let cols = cells.iter().map(|x| x.1 + 1).max().unwrap_or(0);
        let mut values = vec![f64::NAN; rows * cols];
        for (r, c, v) in cells {
            values[r * cols + c] = v;
        }
        Self::from_values(rows, cols, values)
    }
}

/// Metric of one cell's temporal vector, `None` when undefined.
pub fn cell_metric(forecast: &ForecastCube, labels: &LabelCube, row: usize, col: usize, metric: Metric) -> Option<f64> {
    let mut scores = Vec::new();
    let mut probs_argmax = Vec::new();
    let mut truth = Vec::new();
    for t in 0..forecast.t_len() {
        let (Some(p), Some(y)) = (forecast.get(t, row, col), labels.get(t, row, col)) else { continue };
        if forecast.n_classes() == 2 {
            scores.push(p[1]);
        }
        probs_argmax.push(crate::forecast::argmax(p));
        truth.push(y);
    }
    match metric {
        Metric::RocAuc => roc_auc(&scores, &truth),
        Metric::PrAuc => pr_auc(&scores, &truth),
        Metric::F1 => {
            let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= DECISION_THRESHOLD)).collect();
            (!truth.is_empty()).then(|| f1(&pred, &truth))
        }
        Metric::Accuracy => accuracy(&probs_argmax, &truth),
    }
}

/// Per-cell metric over predicted, valid months, with the median over defined cells.
pub fn per_cell_map(forecast: &ForecastCube, labels: &LabelCube, metric: Metric) -> Result<MetricMap> {
    if forecast.dims() != labels.dims() {
        return arg_err(format!("forecast dims {:?} differ from label dims {:?}", forecast.dims(), labels.dims()));
    }
    if metric.binary_only() && forecast.n_classes() != 2 {
        return arg_err(format!("{metric} needs a binary forecast"));
    }
    if forecast.predicted_months().is_empty() {
        return arg_err("forecast has no predicted month");
    }
    let (rows, cols) = (forecast.rows(), forecast.cols());
    let values: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|i| cell_metric(forecast, labels, i / cols, i % cols, metric).unwrap_or(f64::NAN))
        .collect();
    MetricMap::from_values(rows, cols, values).map_err(|_| Error::EmptyMetric(format!("{metric} undefined on every cell")))
}
