//! SVG heatmaps of metric maps and probability fields.
//!
//! One `<rect>` per cell, colored by linear interpolation between two
//! palette endpoints over `[vmin, vmax]`; NaN cells are gray. Output bytes
//! depend only on the inputs.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{arg_err, Error, Result};
use crate::forecast::ForecastCube;
use crate::metrics::MetricMap;

pub const NAN_FILL: &str = "#9e9e9e";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    fn lerp(self, other: Rgb, t: f64) -> Rgb {
        let f = |a: u8, b: u8| (a as f64 + t * (b as f64 - a as f64)).round().clamp(0.0, 255.0) as u8;
        Rgb(f(self.0, other.0), f(self.1, other.1), f(self.2, other.2))
    }
}

impl FromStr for Rgb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let h = s.trim().trim_start_matches('#');
        if h.len() != 6 || !h.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::Argument(format!("color {s:?} is not #rrggbb")));
        }
        let byte = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).expect("hex checked");
        Ok(Rgb(byte(0), byte(2), byte(4)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStyle {
    pub low: Rgb,
    pub high: Rgb,
    /// Defaults to the data minimum.
    pub vmin: Option<f64>,
    /// Defaults to the data maximum.
    pub vmax: Option<f64>,
    pub cell_px: u32,
    pub title: Option<String>,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        Self { low: Rgb(0xd7, 0x30, 0x27), high: Rgb(0x1a, 0x98, 0x50), vmin: None, vmax: None, cell_px: 12, title: None }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fill color for `v` on `[lo, hi]`; a degenerate range maps to the midpoint.
pub fn color_for(v: f64, lo: f64, hi: f64, style: &HeatmapStyle) -> String {
    if v.is_nan() {
        return NAN_FILL.into();
    }
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    style.low.lerp(style.high, t).hex()
}

/// Row-major `rows x cols` grid as an SVG document.
pub fn heatmap_svg(rows: usize, cols: usize, values: &[f64], style: &HeatmapStyle) -> Result<String> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return arg_err("heatmap needs a non-empty grid matching its values");
    }
    if style.cell_px == 0 {
        return arg_err("cell_px must be >= 1");
    }
    let finite = values.iter().copied().filter(|v| !v.is_nan());
    let lo = style.vmin.unwrap_or_else(|| finite.clone().fold(f64::INFINITY, f64::min));
    let hi = style.vmax.unwrap_or_else(|| finite.fold(f64::NEG_INFINITY, f64::max));
    let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 1.0) };

    let px = style.cell_px as usize;
    let top = if style.title.is_some() { 20 } else { 0 };
    let (map_w, map_h) = (cols * px, rows * px);
    let legend_h = 40;
    let width = map_w.max(160);
    let height = top + map_h + legend_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    if let Some(t) = &style.title {
        let _ = writeln!(s, r#"<text x="0" y="14" font-family="sans-serif" font-size="12">{}</text>"#, escape(t));
    }
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{px}" height="{px}" fill="{}"/>"#,
                c * px,
                top + r * px,
                color_for(v, lo, hi, style)
            );
        }
    }
    // legend: ten-step ramp with end labels
    let ly = top + map_h + 6;
    let step_w = 14;
    for i in 0..10 {
        let t = i as f64 / 9.0;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{ly}" width="{step_w}" height="10" fill="{}"/>"#,
            i * step_w,
            style.low.lerp(style.high, t).hex()
        );
    }
    let _ = writeln!(s, r#"<rect x="{}" y="{ly}" width="10" height="10" fill="{NAN_FILL}"/>"#, 10 * step_w + 6);
    let ty = ly + 24;
    let _ = writeln!(s, r#"<text x="0" y="{ty}" font-family="sans-serif" font-size="10">{lo:.4}</text>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{ty}" font-family="sans-serif" font-size="10" text-anchor="end">{hi:.4}</text>"#,
        10 * step_w
    );
    let _ = writeln!(s, r#"<text x="{}" y="{ty}" font-family="sans-serif" font-size="10">nan</text>"#, 10 * step_w + 6);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn metric_map_svg(map: &MetricMap, style: &HeatmapStyle) -> Result<String> {
    heatmap_svg(map.rows, map.cols, &map.values, style)
}

/// Probability of `class` at month `t`; unpredicted cells are NaN.
pub fn probability_field_svg(f: &ForecastCube, t: usize, class: usize, style: &HeatmapStyle) -> Result<String> {
    if t >= f.t_len() || class >= f.n_classes() {
        return arg_err(format!("month {t} / class {class} outside forecast"));
    }
    let values: Vec<f64> = (0..f.rows() * f.cols())
        .map(|i| f.get(t, i / f.cols(), i % f.cols()).map_or(f64::NAN, |p| p[class]))
        .collect();
    heatmap_svg(f.rows(), f.cols(), &values, style)
}

pub fn write_svg(svg: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fills(svg: &str) -> Vec<&str> {
        svg.lines()
            .filter(|l| l.starts_with("<rect") && l.contains("width=\"12\""))
            .map(|l| l.split("fill=\"").nth(1).unwrap().trim_end_matches("\"/>"))
            .collect()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let st = HeatmapStyle::default();
        let svg = heatmap_svg(1, 2, &[0.0, 1.0], &st).unwrap();
        assert_eq!(fills(&svg), vec![st.low.hex(), st.high.hex()]);
        let svg = heatmap_svg(2, 2, &[0.7; 4], &st).unwrap();
        let f = fills(&svg);
        assert!(f.iter().all(|&c| c == f[0]));
        assert_eq!(f[0], st.low.lerp(st.high, 0.5).hex());
    }

    #[test]
    fn nan_is_gray_and_output_is_stable() {
        let st = HeatmapStyle { title: Some("roc_auc <median>".into()), ..Default::default() };
        let vals = [0.5, f64::NAN, 0.9, 0.7];
        let a = heatmap_svg(2, 2, &vals, &st).unwrap();
        assert_eq!(a, heatmap_svg(2, 2, &vals, &st).unwrap());
        assert_eq!(fills(&a)[1], NAN_FILL);
        assert!(a.contains("&lt;median&gt;"));
        assert!(a.contains("0.5000") && a.contains("0.9000"));
    }

    #[test]
    fn parses_colors() {
        assert_eq!("#0a0B0c".parse::<Rgb>().unwrap(), Rgb(10, 11, 12));
        assert!("#12345".parse::<Rgb>().is_err());
        assert!(heatmap_svg(0, 2, &[], &HeatmapStyle::default()).is_err());
    }
}
