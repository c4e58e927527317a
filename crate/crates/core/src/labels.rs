//! Drought classes from PDSI values.
//!
//! Binary schemes label drought as class 1 (PDSI at or below the threshold).
//! Multiclass schemes order classes from driest (0) to wettest.

use crate::cube::PdsiCube;
use crate::error::{arg_err, Result};

/// PDSI drought threshold used for the binary task.
pub const DROUGHT_THRESHOLD: f64 = -2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScheme {
    thresholds: Vec<f64>,
}

impl ClassScheme {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return arg_err("a class scheme needs at least one threshold");
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return arg_err("thresholds must be finite");
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return arg_err(format!("thresholds {thresholds:?} are not strictly increasing"));
        }
        Ok(Self { thresholds })
    }

    pub fn binary(threshold: f64) -> Self {
        Self { thresholds: vec![threshold] }
    }

    /// Thresholds (-1, 1).
    pub fn three_class() -> Self {
        Self { thresholds: vec![-1.0, 1.0] }
    }

    /// Thresholds (-3, -1, 1, 3).
    pub fn five_class() -> Self {
        Self { thresholds: vec![-3.0, -1.0, 1.0, 3.0] }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn n_classes(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn is_binary(&self) -> bool {
        self.thresholds.len() == 1
    }

    pub fn binary_threshold(&self) -> Option<f64> {
        self.is_binary().then(|| self.thresholds[0])
    }

    /// Class of one value under this scheme's labelling convention.
    pub fn classify(&self, value: f64) -> u8 {
        match self.binary_threshold() {
            Some(t) => u8::from(value <= t),
            None => multiclass_index(&self.thresholds, value),
        }
    }

    /// Labels a cube: binarized for one threshold, binned otherwise.
    pub fn label(&self, cube: &PdsiCube) -> LabelCube {
        match self.binary_threshold() {
            Some(t) => binarize(cube, t),
            None => bin_multiclass(cube, self),
        }
    }
}

/// Number of thresholds strictly below `value`.
fn multiclass_index(thresholds: &[f64], value: f64) -> u8 {
    thresholds.iter().take_while(|&&t| t < value).count() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelCube {
    t_len: usize,
    rows: usize,
    cols: usize,
    n_classes: usize,
    labels: Vec<u8>,
    mask: Vec<bool>,
}

impl LabelCube {
    pub fn new(
        t_len: usize,
        rows: usize,
        cols: usize,
        n_classes: usize,
        labels: Vec<u8>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = t_len * rows * cols;
        if labels.len() != n || mask.len() != n {
            return arg_err("label cube size does not match dims");
        }
        if n_classes < 2 {
            return arg_err("need at least two classes");
        }
        if labels.iter().zip(&mask).any(|(&l, &m)| m && l as usize >= n_classes) {
            return arg_err("label outside class range");
        }
        Ok(Self { t_len, rows, cols, n_classes, labels, mask })
    }

    fn from_cube(cube: &PdsiCube, n_classes: usize, f: impl Fn(f64) -> u8) -> Self {
        let labels = cube
            .values()
            .iter()
            .zip(cube.mask())
            .map(|(&v, &m)| if m { f(v as f64) } else { 0 })
            .collect();
        let (t_len, rows, cols) = cube.dims();
        Self { t_len, rows, cols, n_classes, labels, mask: cube.mask().to_vec() }
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

    #[inline]
    pub fn index(&self, t: usize, row: usize, col: usize) -> usize {
        (t * self.rows + row) * self.cols + col
    }

    /// Label at an entry, `None` when masked.
    #[inline]
    pub fn get(&self, t: usize, row: usize, col: usize) -> Option<u8> {
        let i = self.index(t, row, col);
        self.mask[i].then(|| self.labels[i])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Counts per class over valid entries.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for (&l, &m) in self.labels.iter().zip(&self.mask) {
            if m {
                h[l as usize] += 1;
            }
        }
        h
    }

    pub fn slice_months(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.t_len {
            return arg_err(format!("month range {start}..{end} invalid"));
        }
        let g = self.rows * self.cols;
        Ok(Self {
            t_len: end - start,
            rows: self.rows,
            cols: self.cols,
            n_classes: self.n_classes,
            labels: self.labels[start * g..end * g].to_vec(),
            mask: self.mask[start * g..end * g].to_vec(),
        })
    }

    pub fn sub_grid(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() || rows.end > self.rows || cols.end > self.cols {
            return arg_err("sub-grid outside label grid");
        }
        let mut labels = Vec::new();
        let mut mask = Vec::new();
        for t in 0..self.t_len {
            for r in rows.clone() {
                let b = self.index(t, r, 0);
                labels.extend_from_slice(&self.labels[b + cols.start..b + cols.end]);
                mask.extend_from_slice(&self.mask[b + cols.start..b + cols.end]);
            }
        }
        Ok(Self {
            t_len: self.t_len,
            rows: rows.len(),
            cols: cols.len(),
            n_classes: self.n_classes,
            labels,
            mask,
        })
    }
}

/// Drought (1) iff PDSI <= threshold.
pub fn binarize(cube: &PdsiCube, threshold: f64) -> LabelCube {
    LabelCube::from_cube(cube, 2, |v| u8::from(v <= threshold))
}

/// Class index = number of scheme thresholds strictly below the value.
pub fn bin_multiclass(cube: &PdsiCube, scheme: &ClassScheme) -> LabelCube {
    LabelCube::from_cube(cube, scheme.n_classes(), |v| multiclass_index(scheme.thresholds(), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    ExtremeDry,
    SevereDry,
    ModerateDry,
    MildDry,
    Normal,
    MildWet,
    ModerateWet,
    SevereWet,
    ExtremeWet,
}

impl Severity {
    pub fn name(self) -> &'static str {
        match self {
            Severity::ExtremeDry => "Extreme dry spell",
            Severity::SevereDry => "Severe dry spell",
            Severity::ModerateDry => "Moderate dry spell",
            Severity::MildDry => "Mild dry spell",
            Severity::Normal => "Normal",
            Severity::MildWet => "Mild wet spell",
            Severity::ModerateWet => "Moderate wet spell",
            Severity::SevereWet => "Severe wet spell",
            Severity::ExtremeWet => "Extreme wet spell",
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Nine-bin PDSI severity class.
///
/// Dry bins close on their wet edge (-2.00 is moderate dry, -1.00 mild dry),
/// wet bins close on their dry edge (1.00 is mild wet), Normal is (-1, 1).
pub fn severity_class(value: f64) -> Severity {
    if value <= -4.0 {
        Severity::ExtremeDry
    } else if value <= -3.0 {
        Severity::SevereDry
    } else if value <= -2.0 {
        Severity::ModerateDry
    } else if value <= -1.0 {
        Severity::MildDry
    } else if value < 1.0 {
        Severity::Normal
    } else if value < 2.0 {
        Severity::MildWet
    } else if value < 3.0 {
        Severity::ModerateWet
    } else if value < 4.0 {
        Severity::SevereWet
    } else {
        Severity::ExtremeWet
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(vals: &[f32]) -> PdsiCube {
        PdsiCube::new(1, 1, vals.len(), 0, vals.to_vec()).unwrap()
    }

    #[test]
    fn binarize_examples() {
        let l = binarize(&cube(&[-2.5, 0.0, -2.0, -1.99]), -2.0);
        assert_eq!(l.labels(), &[1, 0, 1, 0]);
    }

    #[test]
    fn multiclass_examples() {
        let l = bin_multiclass(&cube(&[-1.5, 0.0, 2.0, -1.0, 1.0]), &ClassScheme::three_class());
        assert_eq!(l.labels(), &[0, 1, 2, 0, 1]);
        let l5 = bin_multiclass(&cube(&[-4.0, 3.5]), &ClassScheme::five_class());
        assert_eq!(l5.labels(), &[0, 4]);
        assert_eq!(l5.n_classes(), 5);
    }

    #[test]
    fn severity_examples() {
        assert_eq!(severity_class(4.5).name(), "Extreme wet spell");
        assert_eq!(severity_class(-2.5).name(), "Moderate dry spell");
        assert_eq!(severity_class(0.0).name(), "Normal");
        assert_eq!(severity_class(-2.0), Severity::ModerateDry);
        assert_eq!(severity_class(-4.0), Severity::ExtremeDry);
        assert_eq!(severity_class(4.0), Severity::ExtremeWet);
        assert_eq!(severity_class(-0.999), Severity::Normal);
        assert_eq!(severity_class(0.99), Severity::Normal);
    }

    #[test]
    fn scheme_validation() {
        assert!(ClassScheme::new(vec![]).is_err());
        assert!(ClassScheme::new(vec![1.0, 1.0]).is_err());
        assert!(ClassScheme::new(vec![f64::NAN]).is_err());
        assert_eq!(ClassScheme::five_class().n_classes(), 5);
    }

    #[test]
    fn mask_and_dims_preserved() {
        let c = PdsiCube::new(2, 1, 2, 0, vec![1.0, f32::NAN, -3.0, 0.0]).unwrap();
        let l = binarize(&c, -2.0);
        assert_eq!(l.mask(), c.mask());
        assert_eq!(l.get(0, 0, 1), None);
        assert_eq!(l.get(1, 0, 0), Some(1));
        assert_eq!(l.dims(), c.dims());
    }

    proptest! {
        #[test]
        fn histogram_matches_interval_oracle(vals in prop::collection::vec(-6.0f32..6.0, 1..80)) {
            let scheme = ClassScheme::five_class();
            let labels = bin_multiclass(&cube(&vals), &scheme);
            let mut oracle = vec![0usize; 5];
            let edges = [f64::NEG_INFINITY, -3.0, -1.0, 1.0, 3.0, f64::INFINITY];
            for &v in &vals {
                let v = v as f64;
                let k = (0..5).find(|&k| v > edges[k] && v <= edges[k + 1]).unwrap();
                oracle[k] += 1;
            }
            prop_assert_eq!(labels.histogram(), oracle);
        }

        #[test]
        fn binary_agrees_with_single_threshold_bins(vals in prop::collection::vec(-6.0f32..6.0, 1..50)) {
            let c = cube(&vals);
            let b = binarize(&c, -2.0);
            let m = bin_multiclass(&c, &ClassScheme::binary(-2.0));
            for (x, y) in b.labels().iter().zip(m.labels()) {
                prop_assert_eq!(*x, 1 - *y);
            }
        }

        #[test]
        fn class_monotone_in_value(a in -8.0f64..8.0, b in -8.0f64..8.0) {
            let s = ClassScheme::five_class();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(multiclass_index(s.thresholds(), lo) <= multiclass_index(s.thresholds(), hi));
        }
    }
}
