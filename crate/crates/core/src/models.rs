//! One interface over every forecaster: train on the months before a split,
//! forecast any cube of the same kind, persist to a single file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::convlstm::{self, checkpoint, ConvLstmHyper, TrainedConvLstm};
use crate::cube::PdsiCube;
use crate::error::{arg_err, Error, Result};
use crate::features::{build_design_for_months, DesignMatrix, WindowSpec};
use crate::forecast::ForecastCube;
use crate::gbdt::{fit_gbdt_with_validation, predict_gbdt, GbdtHyper, GbdtModel};
use crate::labels::LabelCube;
use crate::linear::{fit_logreg, fit_majority, parse_records, predict_logreg, predict_rolling, BaselineModel, LinearModel, LogRegHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Baseline,
    Rolling,
    LogReg,
    Gbdt,
    ConvLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Baseline, ModelKind::Rolling, ModelKind::LogReg, ModelKind::Gbdt, ModelKind::ConvLstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Rolling => "rolling",
            ModelKind::LogReg => "logreg",
            ModelKind::Gbdt => "gbdt",
            ModelKind::ConvLstm => "convlstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown model {s:?} (expected baseline, rolling, logreg, gbdt or convlstm)")))
    }
}

/// Everything a model needs beyond the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    /// History length and neighborhood for the feature models; the horizon
    /// here is the one every model forecasts at.
    pub window: WindowSpec,
    pub rolling_window: usize,
    /// Fraction of the training months held out for early stopping (gbdt, convlstm).
    pub val_frac: f64,
    pub logreg: LogRegHyper,
    pub gbdt: GbdtHyper,
    pub convlstm: ConvLstmHyper,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            rolling_window: 6,
            val_frac: 0.2,
            logreg: LogRegHyper::default(),
            gbdt: GbdtHyper::default(),
            convlstm: ConvLstmHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Baseline(BaselineModel),
    Rolling { window: usize, horizon: usize, fallback: BaselineModel },
    LogReg { spec: WindowSpec, model: LinearModel },
    Gbdt { spec: WindowSpec, model: GbdtModel },
    ConvLstm(TrainedConvLstm),
}

/// Months `[0, n)` of the cube and labels.
fn head(cube: &PdsiCube, labels: &LabelCube, n: usize) -> Result<(PdsiCube, LabelCube)> {
    Ok((cube.slice_months(0..n)?, labels.slice_months(0, n)?))
}

fn val_start(n_train: usize, val_frac: f64, first_target: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&val_frac) || val_frac == 0.0 {
        return arg_err(format!("val_frac {val_frac} must lie in (0, 1)"));
    }
    let v0 = n_train - ((n_train as f64 * val_frac).round() as usize).max(1);
    if v0 <= first_target {
        return arg_err(format!("{n_train} training months leave no room for a validation span"));
    }
    Ok(v0)
}

/// Fits `kind` on target months `[0, n_train)`; returns the model and its
/// training log (one line per record).
pub fn train_model(
    kind: ModelKind,
    cube: &PdsiCube,
    labels: &LabelCube,
    n_train: usize,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(TrainedModel, Vec<String>)> {
    if cube.dims() != labels.dims() {
        return arg_err("cube and labels differ in shape");
    }
    if n_train == 0 || n_train > cube.t_len() {
        return arg_err(format!("training span {n_train} outside [1, {}]", cube.t_len()));
    }
    let spec = settings.window;
    spec.validate()?;
    let ctx = |e: Error| e.context(format!("training {kind}"));
    match kind {
        ModelKind::Baseline => {
            let (_, l) = head(cube, labels, n_train)?;
            Ok((TrainedModel::Baseline(fit_majority(&l).map_err(ctx)?), Vec::new()))
        }
        ModelKind::Rolling => {
            let (_, l) = head(cube, labels, n_train)?;
            let fallback = fit_majority(&l).map_err(ctx)?;
            Ok((TrainedModel::Rolling { window: settings.rolling_window, horizon: spec.horizon, fallback }, Vec::new()))
        }
        ModelKind::LogReg => {
            let design = build_design_for_months(cube, labels, &spec, 0..n_train)?;
            let fit = fit_logreg(&design, &settings.logreg).map_err(ctx)?;
            let log = vec![format!(
                "epochs={} converged={} objective={:.10e}",
                fit.epochs,
                fit.converged,
                fit.objective_trace.last().copied().unwrap_or(f64::NAN)
            )];
            Ok((TrainedModel::LogReg { spec, model: fit.model }, log))
        }
        ModelKind::Gbdt => {
            let v0 = val_start(n_train, settings.val_frac, spec.first_target())?;
            let train = build_design_for_months(cube, labels, &spec, 0..v0)?;
            let val = build_design_for_months(cube, labels, &spec, v0..n_train)?;
            let val = (val.n_samples() > 0).then_some(val);
            let fit = fit_gbdt_with_validation(&train, val.as_ref(), &settings.gbdt).map_err(ctx)?;
            let log = vec![format!(
                "rounds={} status={:?} train_loss={:.10e}",
                fit.model.n_rounds(),
                fit.status,
                fit.train_loss.last().copied().unwrap_or(f64::NAN)
            )];
            Ok((TrainedModel::Gbdt { spec, model: fit.model }, log))
        }
        ModelKind::ConvLstm => {
            let hyper = ConvLstmHyper { horizon: spec.horizon, n_classes: labels.n_classes(), seed, ..settings.convlstm.clone() };
            hyper.validate()?;
            let v0 = val_start(n_train, settings.val_frac, hyper.first_target())?;
            let (train, tl) = head(cube, labels, v0)?;
            let lo = v0 - hyper.first_target();
            let val = cube.slice_months(lo..n_train)?;
            let vl = labels.slice_months(lo, n_train)?;
            let (model, log) = convlstm::fit(&train, &tl, &val, &vl, &hyper).map_err(ctx)?;
            let mut lines: Vec<String> = log.records.iter().map(|r| r.to_line()).collect();
            lines.push(format!("best_epoch={} stopped_early={}", log.best_epoch, log.stopped_early));
            Ok((TrainedModel::ConvLstm(model), lines))
        }
    }
}

fn from_design(cube: &PdsiCube, design: &DesignMatrix, n_classes: usize, probs: &[Vec<f64>]) -> Result<ForecastCube> {
    ForecastCube::from_samples(cube.dims(), n_classes, cube.start_month(), design.provenance(), probs)
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Baseline(_) => ModelKind::Baseline,
            TrainedModel::Rolling { .. } => ModelKind::Rolling,
            TrainedModel::LogReg { .. } => ModelKind::LogReg,
            TrainedModel::Gbdt { .. } => ModelKind::Gbdt,
            TrainedModel::ConvLstm(_) => ModelKind::ConvLstm,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Baseline(b) | TrainedModel::Rolling { fallback: b, .. } => b.class_prior.len(),
            TrainedModel::LogReg { model, .. } => model.n_classes,
            TrainedModel::Gbdt { model, .. } => model.n_classes,
            TrainedModel::ConvLstm(m) => m.hyper.n_classes,
        }
    }

    /// Forecasts every month of `cube` the model can reach from past data.
    ///
    /// `labels` feeds the rolling baseline (past labels only) and selects the
    /// samples the feature models score; other models ignore it.
    pub fn forecast(&self, cube: &PdsiCube, labels: &LabelCube) -> Result<ForecastCube> {
        if cube.dims() != labels.dims() {
            return arg_err("cube and labels differ in shape");
        }
        if labels.n_classes() != self.n_classes() {
            return arg_err(format!("labels have {} classes, model has {}", labels.n_classes(), self.n_classes()));
        }
        match self {
            TrainedModel::Baseline(b) => Ok(b.predict(cube.dims(), cube.start_month())),
            TrainedModel::Rolling { window, horizon, fallback } => {
                Ok(predict_rolling(labels, *window, *horizon, fallback)?.with_start_month(cube.start_month()))
            }
            TrainedModel::LogReg { spec, model } => {
                let design = build_design_for_months(cube, labels, spec, 0..cube.t_len())?;
                from_design(cube, &design, model.n_classes, &predict_logreg(model, &design)?)
            }
            TrainedModel::Gbdt { spec, model } => {
                let design = build_design_for_months(cube, labels, spec, 0..cube.t_len())?;
                from_design(cube, &design, model.n_classes, &predict_gbdt(model, &design)?)
            }
            TrainedModel::ConvLstm(m) => convlstm::predict(m, cube),
        }
    }

    /// ConvLSTM models serialize as CLSP checkpoints; the rest as text records.
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec_lines = |s: &WindowSpec| {
            format!("history_len={}\nhorizon={}\nneighborhood={}\n", s.history_len, s.horizon, s.neighborhood)
        };
        let prior = |b: &BaselineModel| {
            let p: Vec<String> = b.class_prior.iter().map(|v| format!("{v:.17e}")).collect();
            format!("majority_class={}\nclass_prior={}\n", b.majority_class, p.join(","))
        };
        let text = match self {
            TrainedModel::ConvLstm(m) => return checkpoint::to_bytes(m),
            TrainedModel::Baseline(b) => format!("{HEADER}\nversion=1\nkind=baseline\n{}", prior(b)),
            TrainedModel::Rolling { window, horizon, fallback } => {
                format!("{HEADER}\nversion=1\nkind=rolling\nwindow={window}\nhorizon={horizon}\n{}", prior(fallback))
            }
            TrainedModel::LogReg { spec, model } => {
                format!("{HEADER}\nversion=1\nkind=logreg\n{}{BODY}\n{}", spec_lines(spec), model.to_text())
            }
            TrainedModel::Gbdt { spec, model } => {
                format!("{HEADER}\nversion=1\nkind=gbdt\n{}{BODY}\n{}", spec_lines(spec), model.to_text())
            }
        };
        text.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(checkpoint::CLSP_MAGIC) {
            return checkpoint::from_bytes(bytes).map(TrainedModel::ConvLstm);
        }
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("model file is neither CLSP nor text".into()))?;
        let (meta, body) = match text.split_once(&format!("\n{BODY}\n")) {
            Some((m, b)) => (m, Some(b)),
            None => (text, None),
        };
        let mut lines = meta.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Format("not a droughtcast model file".into()));
        }
        let kv = parse_records(lines)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("model file lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}"))) };
        if num("version")? != 1 {
            return Err(Error::UnsupportedVersion { found: num("version")? as u32, expected: 1 });
        }
        let prior = || -> Result<BaselineModel> {
            let class_prior = get("class_prior")?
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::Format("bad class_prior".into())))
                .collect::<Result<Vec<f64>>>()?;
            let majority_class = num("majority_class")? as u8;
            if class_prior.len() < 2 || majority_class as usize >= class_prior.len() {
                return Err(Error::Corrupt("class prior does not match majority class".into()));
            }
            Ok(BaselineModel { majority_class, class_prior })
        };
        let spec = || -> Result<WindowSpec> {
            WindowSpec::new(num("history_len")?, num("horizon")?, num("neighborhood")?).map_err(|e| Error::Corrupt(e.to_string()))
        };
        let body = || body.ok_or_else(|| Error::Format("model file lacks its parameter block".into()));
        match get("kind")? {
            "baseline" => Ok(TrainedModel::Baseline(prior()?)),
            "rolling" => Ok(TrainedModel::Rolling { window: num("window")?, horizon: num("horizon")?, fallback: prior()? }),
            "logreg" => Ok(TrainedModel::LogReg { spec: spec()?, model: LinearModel::from_text(body()?)? }),
            "gbdt" => Ok(TrainedModel::Gbdt { spec: spec()?, model: GbdtModel::from_text(body()?)? }),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const HEADER: &str = "droughtcast-model";
const BODY: &str = "---";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::ClassScheme;
    use crate::synth::{generate, SynthParams};

    fn task() -> (PdsiCube, LabelCube) {
        let cube = generate(&SynthParams { t_len: 80, rows: 5, cols: 5, seed: 3, ..Default::default() }).unwrap();
        let labels = ClassScheme::binary(cube.quantile(0.3).unwrap() as f64).label(&cube);
        (cube, labels)
    }

    #[test]
    fn every_kind_trains_forecasts_and_round_trips() {
        let (cube, labels) = task();
        let settings = TrainSettings {
            gbdt: GbdtHyper { n_rounds: 10, ..Default::default() },
            convlstm: ConvLstmHyper { embed_channels: 2, hidden_channels: 2, history_len: 2, max_epochs: 2, ..Default::default() },
            logreg: LogRegHyper { max_epochs: 50, ..Default::default() },
            ..Default::default()
        };
        for kind in ModelKind::ALL {
            let (m, _) = train_model(kind, &cube, &labels, 56, &settings, 1).unwrap();
            assert_eq!(m.kind(), kind);
            let f = m.forecast(&cube, &labels).unwrap();
            assert_eq!(f.dims(), cube.dims());
            assert!(f.get(79, 2, 2).is_some(), "{kind}");
            let back = TrainedModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back.to_bytes(), m.to_bytes(), "{kind}");
            assert_eq!(back.forecast(&cube, &labels).unwrap(), f, "{kind}");
        }
    }

    #[test]
    fn parses_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
