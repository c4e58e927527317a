//! Render a per-cell ROC AUC map and a drought-probability field as SVG.

use droughtcast::cube::split_point;
use droughtcast::models::{train_model, ModelKind, TrainSettings};
use droughtcast::render::{metric_map_svg, probability_field_svg, write_svg, HeatmapStyle};
use droughtcast::{generate, per_cell_map, ClassScheme, Metric, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 240, rows: 16, cols: 16, ..Default::default() })?;
    let labels = ClassScheme::binary(cube.quantile(0.3)? as f64).label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let (model, _) = train_model(ModelKind::LogReg, &cube, &labels, split, &TrainSettings::default(), 0)?;
    let mut f = model.forecast(&cube, &labels)?;
    f.restrict_months(split..cube.t_len());

    let dir = std::env::temp_dir();
    let map = per_cell_map(&f, &labels, Metric::RocAuc)?;
    let style = HeatmapStyle { vmin: Some(0.5), vmax: Some(1.0), title: Some("logreg roc_auc".into()), ..Default::default() };
    write_svg(&metric_map_svg(&map, &style)?, dir.join("droughtcast_roc_auc.svg"))?;

    let style = HeatmapStyle { vmin: Some(0.0), vmax: Some(1.0), title: Some(format!("P(drought), month {split}")), ..Default::default() };
    write_svg(&probability_field_svg(&f, split, 1, &style)?, dir.join("droughtcast_prob.svg"))?;
    println!("median roc_auc={:.4}; wrote SVGs to {}", map.median, dir.display());
    Ok(())
}
