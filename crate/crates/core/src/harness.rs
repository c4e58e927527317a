//! Experiment suites: horizon sweep, per-region table, crop and zoom studies,
//! seed ensembles and the multiclass study.
//!
//! Every run trains on the first `train_frac` of the months, forecasts the
//! whole timeline from past data only, and is scored on the remaining test
//! months. Report values are per-cell metric medians.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::cube::{center_window, crop_center, split_point, PdsiCube};
use crate::error::{arg_err, Error, Result};
use crate::forecast::ForecastCube;
use crate::labels::{ClassScheme, LabelCube};
use crate::metrics::{per_cell_map, Metric, MetricMap};
use crate::models::{train_model, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub region: String,
    pub horizon: Option<usize>,
    /// A seed number or `ensemble`.
    pub seed: Option<String>,
    pub crop: Option<f64>,
    /// `train/eval` kept-area fractions for zoom rows.
    pub area: Option<String>,
    pub metric: Metric,
    pub value: f64,
    pub config_hash: String,
}

pub const REPORT_HEADER: [&str; 10] =
    ["experiment", "model", "region", "horizon", "seed", "crop", "area", "metric", "value", "config_hash"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    /// Training log records, each prefixed with the run it belongs to.
    pub log: Vec<String>,
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

impl ReportTable {
    pub fn extend(&mut self, other: ReportTable) {
        self.rows.extend(other.rows);
        self.log.extend(other.log);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(REPORT_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.model.clone(),
                r.region.clone(),
                r.horizon.map(|h| h.to_string()).unwrap_or_default(),
                r.seed.clone().unwrap_or_default(),
                r.crop.map(|c| c.to_string()).unwrap_or_default(),
                r.area.clone().unwrap_or_default(),
                r.metric.name().to_string(),
                fmt_value(r.value),
                r.config_hash.clone(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Rows for one model and metric, in table order.
    pub fn select<'a>(&'a self, model: &'a str, metric: Metric) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.model == model && r.metric == metric)
    }
}

/// Metrics reported for a scheme: ROC AUC, PR AUC and F1 for binary
/// problems, accuracy otherwise.
pub fn metrics_for(scheme: &ClassScheme) -> Vec<Metric> {
    if scheme.is_binary() {
        Metric::BINARY.to_vec()
    } else {
        vec![Metric::Accuracy]
    }
}

/// Per-cell maps over test months `[from, t_len)`.
pub fn evaluate(forecast: &ForecastCube, labels: &LabelCube, from: usize, metrics: &[Metric]) -> Result<Vec<MetricMap>> {
    let mut f = forecast.clone();
    f.restrict_months(from..f.t_len());
    metrics.iter().map(|&m| per_cell_map(&f, labels, m)).collect()
}

fn median_or_nan(map: Result<MetricMap>) -> Result<f64> {
    match map {
        Ok(m) => Ok(m.median),
        Err(Error::EmptyMetric(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Prepared data for one region.
struct Task<'a> {
    cube: &'a PdsiCube,
    scheme: ClassScheme,
    labels: LabelCube,
    split: usize,
}

impl<'a> Task<'a> {
    fn new(cube: &'a PdsiCube, cfg: &ExperimentConfig) -> Result<Self> {
        let scheme = cfg.scheme_for(cube)?;
        let labels = scheme.label(cube);
        let split = split_point(cube.t_len(), cfg.train_frac)?;
        Ok(Self { cube, scheme, labels, split })
    }

    fn run(&self, cfg: &ExperimentConfig, kind: ModelKind, horizon: usize, seed: u64) -> Result<(ForecastCube, Vec<String>)> {
        let settings = cfg.settings_for(horizon);
        let (model, log) = train_model(kind, self.cube, &self.labels, self.split, &settings, seed)?;
        let f = model.forecast(self.cube, &self.labels)?;
        Ok((f, log))
    }
}

#[derive(Clone)]
struct RowKey<'a> {
    experiment: &'a str,
    model: &'a str,
    region: &'a str,
    horizon: Option<usize>,
    seed: Option<String>,
    crop: Option<f64>,
    area: Option<String>,
    hash: &'a str,
}

impl RowKey<'_> {
    fn row(&self, metric: Metric, value: f64) -> ReportRow {
        ReportRow {
            experiment: self.experiment.into(),
            model: self.model.into(),
            region: self.region.into(),
            horizon: self.horizon,
            seed: self.seed.clone(),
            crop: self.crop,
            area: self.area.clone(),
            metric,
            value,
            config_hash: self.hash.into(),
        }
    }

    fn prefix(&self) -> String {
        let mut s = format!("experiment={} model={} region={}", self.experiment, self.model, self.region);
        if let Some(h) = self.horizon {
            s += &format!(" horizon={h}");
        }
        if let Some(seed) = &self.seed {
            s += &format!(" seed={seed}");
        }
        if let Some(a) = &self.area {
            s += &format!(" area={a}");
        }
        s
    }
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds.first().copied().unwrap_or(0)
}

fn first_horizon(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.horizons.first().copied().ok_or_else(|| Error::Argument("horizons list is empty".into()))
}

fn sweep(experiment: &str, region: &str, cube: &PdsiCube, cfg: &ExperimentConfig, horizons: &[usize]) -> Result<ReportTable> {
    if horizons.is_empty() {
        return arg_err("horizons list is empty");
    }
    let task = Task::new(cube, cfg)?;
    let metrics = metrics_for(&task.scheme);
    let hash = cfg.hash();
    let seed = first_seed(cfg);
    let runs: Vec<(ModelKind, usize)> = cfg.models.iter().flat_map(|&m| horizons.iter().map(move |&h| (m, h))).collect();
    let parts: Vec<Result<ReportTable>> = runs
        .par_iter()
        .map(|&(kind, h)| {
            let key = RowKey {
                experiment,
                model: kind.name(),
                region,
                horizon: Some(h),
                seed: Some(seed.to_string()),
                crop: None,
                area: None,
                hash: &hash,
            };
            let (f, log) = task.run(cfg, kind, h, seed).map_err(|e| e.context(key.prefix()))?;
            let mut out = ReportTable { log: log.iter().map(|l| format!("{} {l}", key.prefix())).collect(), ..Default::default() };
            let mut g = f;
            g.restrict_months(task.split..g.t_len());
            for &m in &metrics {
                out.rows.push(key.row(m, median_or_nan(per_cell_map(&g, &task.labels, m))?));
            }
            Ok(out)
        })
        .collect();
    let mut table = ReportTable::default();
    for p in parts {
        table.extend(p?);
    }
    Ok(table)
}

/// One row per (model, horizon, metric) on the test split.
pub fn horizon_sweep(cube: &PdsiCube, cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    sweep("horizon", &cfg.region, cube, cfg, &cfg.horizons)
}

/// Rows per region at a fixed horizon, then `region=mean` rows holding the
/// unweighted mean of the per-region medians.
pub fn region_table(regions: &[(String, PdsiCube)], cfg: &ExperimentConfig, horizon: usize) -> Result<ReportTable> {
    if regions.is_empty() {
        return arg_err("region table needs at least one region");
    }
    cfg.validate()?;
    let mut table = ReportTable::default();
    for (name, cube) in regions {
        table.extend(sweep("region", name, cube, cfg, &[horizon])?);
    }
    let hash = cfg.hash();
    let mut means = Vec::new();
    for kind in &cfg.models {
        let mut seen: Vec<Metric> = Vec::new();
        for r in table.rows.iter().filter(|r| r.model == kind.name()) {
            if !seen.contains(&r.metric) {
                seen.push(r.metric);
            }
        }
        for m in seen {
            let vals: Vec<f64> = table.select(kind.name(), m).map(|r| r.value).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let key = RowKey {
                experiment: "region",
                model: kind.name(),
                region: "mean",
                horizon: Some(horizon),
                seed: Some(first_seed(cfg).to_string()),
                crop: None,
                area: None,
                hash: &hash,
            };
            means.push(key.row(m, mean));
        }
    }
    table.rows.extend(means);
    Ok(table)
}

/// Trains once per model on the full grid and reports the median ROC AUC of
/// the metric map after removing each centered crop fraction of the area.
pub fn crop_study(cube: &PdsiCube, cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    let horizon = first_horizon(cfg)?;
    for &c in &cfg.crop_fracs {
        if !(0.0..=0.9).contains(&c) {
            return arg_err(format!("crop fraction {c} outside [0, 0.9]"));
        }
        let (r, k) = center_window(cube.rows(), cube.cols(), 1.0 - c)?;
        if r.len() * k.len() < 4 {
            return arg_err(format!("crop {c} leaves fewer than 4 cells"));
        }
    }
    let task = Task::new(cube, cfg)?;
    if !task.scheme.is_binary() {
        return arg_err("crop study scores ROC AUC and needs a binary scheme");
    }
    let hash = cfg.hash();
    let seed = first_seed(cfg);
    let parts: Vec<Result<ReportTable>> = cfg
        .models
        .par_iter()
        .map(|&kind| {
            let base = RowKey {
                experiment: "crop",
                model: kind.name(),
                region: &cfg.region,
                horizon: Some(horizon),
                seed: Some(seed.to_string()),
                crop: None,
                area: None,
                hash: &hash,
            };
            let (f, log) = task.run(cfg, kind, horizon, seed).map_err(|e| e.context(base.prefix()))?;
            let map = evaluate(&f, &task.labels, task.split, &[Metric::RocAuc])?.remove(0);
            let mut out = ReportTable { log: log.iter().map(|l| format!("{} {l}", base.prefix())).collect(), ..Default::default() };
            for &c in &cfg.crop_fracs {
                let (r, k) = center_window(map.rows, map.cols, 1.0 - c)?;
                let sub = map.sub_grid(r, k);
                let v = match sub {
                    Ok(m) => m.median,
                    Err(_) => f64::NAN,
                };
                out.rows.push(RowKey { crop: Some(c), ..base.clone() }.row(Metric::RocAuc, v));
            }
            Ok(out)
        })
        .collect();
    let mut table = ReportTable::default();
    for p in parts {
        table.extend(p?);
    }
    Ok(table)
}

/// Upper-triangular train-area x eval-area matrix of median scores.
///
/// One model is trained per training area on the centered crop of the
/// input cube; each is evaluated on every equal or smaller centered crop
/// without retraining.
pub fn zoom_study(cube: &PdsiCube, cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    let areas = &cfg.zoom_areas;
    if areas.is_empty() {
        return arg_err("zoom study needs at least one area");
    }
    if areas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) || areas.windows(2).any(|w| w[1] >= w[0]) {
        return arg_err("zoom areas must be strictly descending within (0, 1]");
    }
    let windows: Vec<_> = areas.iter().map(|&a| center_window(cube.rows(), cube.cols(), a)).collect::<Result<_>>()?;
    for w in windows.windows(2) {
        let (outer, inner) = (&w[0], &w[1]);
        let inside = |o: &std::ops::Range<usize>, i: &std::ops::Range<usize>| o.start <= i.start && i.end <= o.end;
        if !inside(&outer.0, &inner.0) || !inside(&outer.1, &inner.1) {
            return arg_err("zoom areas do not give nested centered windows on this grid");
        }
    }
    let horizon = first_horizon(cfg)?;
    let scheme = cfg.scheme_for(cube)?;
    let metric = if scheme.is_binary() { Metric::RocAuc } else { Metric::Accuracy };
    let split = split_point(cube.t_len(), cfg.train_frac)?;
    let crops: Vec<(PdsiCube, LabelCube)> = areas
        .iter()
        .map(|&a| {
            let c = crop_center(cube, a)?;
            let l = scheme.label(&c);
            Ok((c, l))
        })
        .collect::<Result<_>>()?;
    let hash = cfg.hash();
    let seed = first_seed(cfg);
    let settings = cfg.settings_for(horizon);
    let runs: Vec<(ModelKind, usize)> = cfg.models.iter().flat_map(|&m| (0..areas.len()).map(move |i| (m, i))).collect();
    let parts: Vec<Result<ReportTable>> = runs
        .par_iter()
        .map(|&(kind, i)| {
            let (tc, tl) = &crops[i];
            let area_tag = |j: usize| format!("{}/{}", areas[i], areas[j]);
            let key = RowKey {
                experiment: "zoom",
                model: kind.name(),
                region: &cfg.region,
                horizon: Some(horizon),
                seed: Some(seed.to_string()),
                crop: None,
                area: Some(area_tag(i)),
                hash: &hash,
            };
            let (model, log) = train_model(kind, tc, tl, split, &settings, seed).map_err(|e| e.context(key.prefix()))?;
            let mut out = ReportTable { log: log.iter().map(|l| format!("{} {l}", key.prefix())).collect(), ..Default::default() };
            for (j, (ec, el)) in crops.iter().enumerate().skip(i) {
                let f = model.forecast(ec, el)?;
                let mut g = f;
                g.restrict_months(split..g.t_len());
                let v = median_or_nan(per_cell_map(&g, el, metric))?;
                out.rows.push(RowKey { area: Some(area_tag(j)), ..key.clone() }.row(metric, v));
            }
            Ok(out)
        })
        .collect();
    let mut table = ReportTable::default();
    for p in parts {
        table.extend(p?);
    }
    Ok(table)
}

/// Per-seed rows plus a `seed=ensemble` row scoring the mean of the member
/// probability cubes.
pub fn seed_ensemble(cube: &PdsiCube, cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    if cfg.seeds.len() < 2 {
        return arg_err("seed ensemble needs at least two seeds");
    }
    let horizon = first_horizon(cfg)?;
    let task = Task::new(cube, cfg)?;
    let metrics = metrics_for(&task.scheme);
    let hash = cfg.hash();
    let mut table = ReportTable::default();
    for &kind in &cfg.models {
        let key = |seed: String| RowKey {
            experiment: "ensemble",
            model: kind.name(),
            region: &cfg.region,
            horizon: Some(horizon),
            seed: Some(seed),
            crop: None,
            area: None,
            hash: &hash,
        };
        let members: Vec<Result<(ForecastCube, Vec<String>)>> =
            cfg.seeds.par_iter().map(|&s| task.run(cfg, kind, horizon, s).map_err(|e| e.context(key(s.to_string()).prefix()))).collect();
        let mut forecasts = Vec::new();
        for (&s, m) in cfg.seeds.iter().zip(members) {
            let (f, log) = m?;
            let k = key(s.to_string());
            table.log.extend(log.iter().map(|l| format!("{} {l}", k.prefix())));
            for (&metric, map) in metrics.iter().zip(evaluate_or_nan(&f, &task, &metrics)?) {
                table.rows.push(k.row(metric, map));
            }
            forecasts.push(f);
        }
        let ens = ForecastCube::mean(&forecasts)?;
        let k = key("ensemble".into());
        for (&metric, v) in metrics.iter().zip(evaluate_or_nan(&ens, &task, &metrics)?) {
            table.rows.push(k.row(metric, v));
        }
    }
    Ok(table)
}

fn evaluate_or_nan(f: &ForecastCube, task: &Task<'_>, metrics: &[Metric]) -> Result<Vec<f64>> {
    let mut g = f.clone();
    g.restrict_months(task.split..g.t_len());
    metrics.iter().map(|&m| median_or_nan(per_cell_map(&g, &task.labels, m))).collect()
}

/// Median accuracy per (model, horizon) for a 3- or 5-class scheme.
pub fn multiclass_study(cube: &PdsiCube, cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    let k = cfg.scheme_for(cube)?.n_classes();
    if k != 3 && k != 5 {
        return arg_err(format!("multiclass study expects 3 or 5 classes, scheme has {k}"));
    }
    sweep("multiclass", &cfg.region, cube, cfg, &cfg.horizons)
}
