//! Per-cell supervised samples: lagged PDSI over a k x k neighborhood.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::cube::PdsiCube;
use crate::error::{arg_err, Error, Result};
use crate::labels::LabelCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    pub history_len: usize,
    pub horizon: usize,
    pub neighborhood: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { history_len: 1, horizon: 1, neighborhood: 3 }
    }
}

impl WindowSpec {
    pub fn new(history_len: usize, horizon: usize, neighborhood: usize) -> Result<Self> {
        let s = Self { history_len, horizon, neighborhood };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.horizon == 0 {
            return arg_err("history_len and horizon must be >= 1");
        }
        if self.neighborhood == 0 || self.neighborhood % 2 == 0 {
            return arg_err(format!("neighborhood {} must be odd", self.neighborhood));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.history_len * self.neighborhood * self.neighborhood
    }

    /// First target month with a full history window.
    pub fn first_target(&self) -> usize {
        self.history_len + self.horizon - 1
    }

    /// History months feeding target month `t`.
    pub fn history_months(&self, t: usize) -> Range<usize> {
        let last = t - self.horizon;
        last + 1 - self.history_len..last + 1
    }
}

/// Sample origin: target month, row, col.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub t: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    width: usize,
    n_classes: usize,
    features: Vec<f64>,
    targets: Vec<u8>,
    provenance: Vec<Provenance>,
}

impl DesignMatrix {
    pub fn from_parts(
        width: usize,
        n_classes: usize,
        features: Vec<f64>,
        targets: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || features.len() != width * targets.len() {
            return arg_err("feature buffer does not match width x samples");
        }
        if targets.iter().any(|&y| y as usize >= n_classes) {
            return arg_err("target outside class range");
        }
        let provenance = (0..targets.len()).map(|i| Provenance { t: i, row: 0, col: 0 }).collect();
        Ok(Self { width, n_classes, features, targets, provenance })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.width)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Samples whose target month lies in `months`.
    pub fn select_months(&self, months: Range<usize>) -> Self {
        let keep: Vec<usize> = (0..self.n_samples()).filter(|&i| months.contains(&self.provenance[i].t)).collect();
        self.select(&keep)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.width);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Self {
            width: self.width,
            n_classes: self.n_classes,
            features,
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Writes `t,row,col,y,f0..fN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "row".into(), "col".into(), "y".into()];
        header.extend((0..self.width).map(|j| format!("f{j}")));
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_samples() {
            let p = self.provenance[i];
            let mut rec = vec![p.t.to_string(), p.row.to_string(), p.col.to_string(), self.targets[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

fn check_shapes(cube: &PdsiCube, labels: &LabelCube, spec: &WindowSpec) -> Result<()> {
    spec.validate()?;
    if cube.dims() != labels.dims() {
        return arg_err(format!("label dims {:?} differ from cube dims {:?}", labels.dims(), cube.dims()));
    }
    if cube.t_len() < spec.history_len + spec.horizon {
        return arg_err(format!(
            "cube of {} months too short for history {} + horizon {}",
            cube.t_len(),
            spec.history_len,
            spec.horizon
        ));
    }
    Ok(())
}

/// Every sample with a full history and a valid target, ordered by (t, row, col).
pub fn build_design(cube: &PdsiCube, labels: &LabelCube, spec: &WindowSpec) -> Result<DesignMatrix> {
    build_design_for_months(cube, labels, spec, 0..cube.t_len())
}

/// As [`build_design`], restricted to target months in `months`.
pub fn build_design_for_months(
    cube: &PdsiCube,
    labels: &LabelCube,
    spec: &WindowSpec,
    months: Range<usize>,
) -> Result<DesignMatrix> {
    check_shapes(cube, labels, spec)?;
    let first = spec.first_target().max(months.start);
    let last = months.end.min(cube.t_len());
    let width = spec.width();
    let per_month: Vec<(Vec<f64>, Vec<u8>, Vec<Provenance>)> = (first..last.max(first))
        .into_par_iter()
        .map(|t| {
            let mut feats = Vec::new();
            let mut ys = Vec::new();
            let mut prov = Vec::new();
            for row in 0..cube.rows() {
                for col in 0..cube.cols() {
                    let Some(y) = labels.get(t, row, col) else { continue };
                    write_window(cube, spec, t, row, col, &mut feats);
                    ys.push(y);
                    prov.push(Provenance { t, row, col });
                }
            }
            (feats, ys, prov)
        })
        .collect();
    let n: usize = per_month.iter().map(|m| m.1.len()).sum();
    let mut features = Vec::with_capacity(n * width);
    let mut targets = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for (f, y, p) in per_month {
        features.extend(f);
        targets.extend(y);
        provenance.extend(p);
    }
    Ok(DesignMatrix { width, n_classes: labels.n_classes(), features, targets, provenance })
}

/// Appends one sample's features: history months oldest first, each a
/// row-major k x k patch; out-of-grid and missing neighbors read 0.0.
pub fn write_window(cube: &PdsiCube, spec: &WindowSpec, t: usize, row: usize, col: usize, out: &mut Vec<f64>) {
    let half = (spec.neighborhood / 2) as isize;
    for m in spec.history_months(t) {
        for dr in -half..=half {
            for dc in -half..=half {
                let (r, c) = (row as isize + dr, col as isize + dc);
                let v = if r < 0 || c < 0 || r >= cube.rows() as isize || c >= cube.cols() as isize {
                    0.0
                } else {
                    cube.value_or_zero(m, r as usize, c as usize) as f64
                };
                out.push(v);
            }
        }
    }
}

/// Per-feature mean and standard deviation, fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl FeatureScaling {
    pub fn fit(design: &DesignMatrix) -> Self {
        let w = design.width();
        let n = design.n_samples().max(1) as f64;
        let mut mean = vec![0.0; w];
        for row in design.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for row in design.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let sd = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, sd }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.mean[j]) / self.sd[j];
        }
    }

    pub fn apply(&self, design: &DesignMatrix) -> DesignMatrix {
        let mut out = design.clone();
        let w = design.width();
        for row in out.features_mut().chunks_exact_mut(w) {
            for j in 0..w {
                row[j] = (row[j] - self.mean[j]) / self.sd[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::binarize;
    use proptest::prelude::*;

    fn ramp(t: usize, r: usize, c: usize) -> PdsiCube {
        PdsiCube::new(t, r, c, 0, (0..t * r * c).map(|i| ((i * 7) % 23) as f32 * 0.5 - 5.0).collect()).unwrap()
    }

    #[test]
    fn sample_count_and_width() {
        let cube = ramp(10, 4, 4);
        let labels = binarize(&cube, -2.0);
        let d = build_design(&cube, &labels, &WindowSpec::new(2, 1, 3).unwrap()).unwrap();
        assert_eq!(d.n_samples(), 8 * 16);
        assert_eq!(d.width(), 18);
        assert_eq!(d.provenance()[0], Provenance { t: 2, row: 0, col: 0 });
    }

    #[test]
    fn corner_padding() {
        let cube = PdsiCube::filled(3, 4, 4, 1.0).unwrap();
        let labels = binarize(&cube, -2.0);
        let d = build_design(&cube, &labels, &WindowSpec::new(1, 1, 3).unwrap()).unwrap();
        let corner = d.row(0);
        assert_eq!(corner.iter().filter(|&&v| v == 0.0).count(), 5);
        assert_eq!(corner, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn degenerate_window_is_lagged_value() {
        let cube = ramp(12, 3, 3);
        let labels = binarize(&cube, -2.0);
        let spec = WindowSpec::new(1, 4, 1).unwrap();
        let d = build_design(&cube, &labels, &spec).unwrap();
        for (i, p) in d.provenance().iter().enumerate() {
            assert_eq!(d.row(i), &[cube.value(p.t - 4, p.row, p.col) as f64]);
            assert_eq!(d.targets()[i], labels.get(p.t, p.row, p.col).unwrap());
        }
    }

    #[test]
    fn masked_targets_dropped_and_masked_inputs_zero() {
        let mut vals = vec![1.0f32; 3 * 2 * 2];
        vals[2 * 4 + 1] = f32::NAN; // t=2 (0,1)
        vals[4] = f32::NAN; // t=1 (0,0)
        let cube = PdsiCube::new(3, 2, 2, 0, vals).unwrap();
        let labels = binarize(&cube, -2.0);
        let d = build_design(&cube, &labels, &WindowSpec::new(1, 1, 1).unwrap()).unwrap();
        // targets t=1,2 over 4 cells, minus the two masked ones
        assert_eq!(d.n_samples(), 6);
        let i = d.provenance().iter().position(|p| *p == Provenance { t: 2, row: 0, col: 0 }).unwrap();
        assert_eq!(d.row(i), &[0.0]);
    }

    #[test]
    fn too_short_rejected() {
        let cube = ramp(3, 2, 2);
        let labels = binarize(&cube, -2.0);
        assert!(build_design(&cube, &labels, &WindowSpec::new(3, 1, 3).unwrap()).is_err());
        assert!(WindowSpec::new(1, 1, 2).is_err());
    }

    #[test]
    fn csv_export_header() {
        let cube = ramp(3, 1, 2);
        let labels = binarize(&cube, -2.0);
        let d = build_design(&cube, &labels, &WindowSpec::new(1, 1, 1).unwrap()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,row,col,y,f0\n1,0,0,"));
        assert_eq!(text.lines().count(), 1 + d.n_samples());
    }

    #[test]
    fn scaling_standardizes() {
        let d = DesignMatrix::from_parts(2, 2, vec![1.0, 5.0, 3.0, 5.0, 5.0, 5.0], vec![0, 1, 0]).unwrap();
        let s = FeatureScaling::fit(&d);
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert_eq!(s.sd[1], 1.0);
        let z = s.apply(&d);
        assert!((z.row(0)[0] + z.row(2)[0]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn no_leakage_and_count(t_len in 4usize..12, hist in 1usize..3, horizon in 1usize..3, seed in 0u64..50) {
            prop_assume!(t_len >= hist + horizon);
            let cube = crate::synth::generate(&crate::synth::SynthParams {
                t_len, rows: 3, cols: 4, seed, ..Default::default()
            }).unwrap();
            let labels = binarize(&cube, -0.5);
            let spec = WindowSpec::new(hist, horizon, 3).unwrap();
            let d = build_design(&cube, &labels, &spec).unwrap();
            prop_assert_eq!(d.n_samples(), (t_len - hist - horizon + 1) * 12);
            for p in d.provenance() {
                let months = spec.history_months(p.t);
                prop_assert!(months.end <= p.t + 1 - horizon);
                prop_assert_eq!(months.len(), hist);
            }
        }

        #[test]
        fn translation_consistency(seed in 0u64..50) {
            let cube = crate::synth::generate(&crate::synth::SynthParams {
                t_len: 5, rows: 5, cols: 6, seed, ..Default::default()
            }).unwrap();
            // shift content one column to the right
            let mut shifted = vec![0.0f32; 5 * 5 * 6];
            for t in 0..5 { for r in 0..5 { for c in 1..6 {
                shifted[(t * 5 + r) * 6 + c] = cube.value(t, r, c - 1);
            }}}
            let shifted = PdsiCube::new(5, 5, 6, 0, shifted).unwrap();
            let spec = WindowSpec::new(2, 1, 3).unwrap();
            let a = build_design(&cube, &binarize(&cube, 0.0), &spec).unwrap();
            let b = build_design(&shifted, &binarize(&shifted, 0.0), &spec).unwrap();
            let find = |d: &DesignMatrix, p: Provenance| d.provenance().iter().position(|q| *q == p).unwrap();
            for t in 2..5 { for r in 1..4 { for c in 1..4 {
                let i = find(&a, Provenance { t, row: r, col: c });
                let j = find(&b, Provenance { t, row: r, col: c + 1 });
                prop_assert_eq!(a.row(i), b.row(j));
            }}}
        }
    }
}
