use rayon::prelude::*;

use super::{cst, forward, loss_and_grad, ConvLstmHyper, ConvLstmParams, Window};
use crate::cube::PdsiCube;
use crate::error::{arg_err, Error, Result};
use crate::forecast::ForecastCube;
use crate::labels::LabelCube;
use crate::metrics::{per_cell_map, Metric};
use crate::rng::SplitMix64;

/// Trained parameters together with the hyperparameters that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedConvLstm {
    pub hyper: ConvLstmHyper,
    pub params: ConvLstmParams<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation median ROC AUC (binary) or accuracy (multiclass); NaN when undefined.
    pub val_metric: f64,
    pub metric: Metric,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        format!("epoch={} train_loss={:.6} val_{}={:.6}", self.epoch, self.train_loss, self.metric, self.val_metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitLog {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl FitLog {
    pub fn to_text(&self) -> String {
        let mut s: String = self.records.iter().map(|r| r.to_line() + "\n").collect();
        s.push_str(&format!("best_epoch={} stopped_early={}\n", self.best_epoch, self.stopped_early));
        s
    }
}

/// Window for target month `t`; masked frames read 0.0 and targets come
/// from `labels` when given.
pub fn window_at<T: super::Real>(
    cube: &PdsiCube,
    labels: Option<&LabelCube>,
    hyper: &ConvLstmHyper,
    t: usize,
) -> Window<T> {
    let (rows, cols) = (cube.rows(), cube.cols());
    let plane = rows * cols;
    let months = hyper.history_months(t);
    let mut frames = Vec::with_capacity(months.len() * plane);
    let mut frame_mask = Vec::with_capacity(months.len() * plane);
    for m in months {
        frames.extend(cube.month(m).iter().map(|&v| if v.is_nan() { T::zero() } else { cst(v as f64) }));
        frame_mask.extend_from_slice(cube.month_mask(m));
    }
    let (mut target, mut target_mask) = (vec![0u8; plane], vec![false; plane]);
    if let Some(lab) = labels {
        for r in 0..rows {
            for c in 0..cols {
                if let Some(y) = lab.get(t, r, c) {
                    target[r * cols + c] = y;
                    target_mask[r * cols + c] = true;
                }
            }
        }
    }
    Window { rows, cols, frames, frame_mask, target, target_mask }
}

/// Forecasts every month of `cube` that has a full history window.
pub fn predict(model: &TrainedConvLstm, cube: &PdsiCube) -> Result<ForecastCube> {
    let hyper = &model.hyper;
    let (t_len, rows, cols) = cube.dims();
    if t_len < hyper.history_len {
        return arg_err(format!("cube has {t_len} months, history needs {}", hyper.history_len));
    }
    let k = hyper.n_classes;
    let plane = rows * cols;
    let first = hyper.first_target();
    let fields: Vec<(usize, Vec<f32>)> = (first..t_len.max(first))
        .into_par_iter()
        .map(|t| (t, forward(&model.params, &window_at::<f32>(cube, None, hyper, t))))
        .collect();
    let mut out = ForecastCube::empty(t_len, rows, cols, k, cube.start_month());
    let mut p = vec![0.0f64; k];
    for (t, field) in fields {
        for j in 0..plane {
            for (c, v) in p.iter_mut().enumerate() {
                *v = field[c * plane + j] as f64;
            }
            out.set(t, j / cols, j % cols, &p)?;
        }
    }
    Ok(out)
}

fn validation_score(model: &TrainedConvLstm, cube: &PdsiCube, labels: &LabelCube) -> Result<f64> {
    let metric = if model.hyper.n_classes == 2 { Metric::RocAuc } else { Metric::Accuracy };
    let f = predict(model, cube)?;
    match per_cell_map(&f, labels, metric) {
        Ok(m) => Ok(m.median),
        Err(Error::EmptyMetric(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

fn check_pair(cube: &PdsiCube, labels: &LabelCube, hyper: &ConvLstmHyper, what: &str) -> Result<()> {
    if cube.dims() != labels.dims() {
        return arg_err(format!("{what} cube and labels differ in shape"));
    }
    if labels.n_classes() != hyper.n_classes {
        return arg_err(format!("{what} labels have {} classes, model expects {}", labels.n_classes(), hyper.n_classes));
    }
    if cube.rows() == 0 || cube.cols() == 0 {
        return arg_err(format!("{what} grid is empty"));
    }
    Ok(())
}

struct Adam {
    m: ConvLstmParams<f32>,
    v: ConvLstmParams<f32>,
    step: i32,
}

impl Adam {
    fn update(&mut self, params: &mut ConvLstmParams<f32>, grad: &ConvLstmParams<f32>, h: &ConvLstmHyper) {
        self.step += 1;
        let (b1, b2) = (h.beta1, h.beta2);
        let c1 = (1.0 - b1.powi(self.step)) as f32;
        let c2 = (1.0 - b2.powi(self.step)) as f32;
        let (b1, b2, lr, eps) = (b1 as f32, b2 as f32, h.step_size as f32, h.eps as f32);
        let tensors = params.tensors_mut().into_iter().zip(grad.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Adam on mean cross-entropy with early stopping on the validation median.
///
/// Every epoch visits the training windows in an order drawn from
/// `SplitMix64::derive(seed, 1)`. Training stops once the validation score
/// has failed to improve for more than `patience` consecutive epochs, and the
/// best epoch's parameters are returned.
pub fn fit(
    train: &PdsiCube,
    train_labels: &LabelCube,
    val: &PdsiCube,
    val_labels: &LabelCube,
    hyper: &ConvLstmHyper,
) -> Result<(TrainedConvLstm, FitLog)> {
    hyper.validate()?;
    check_pair(train, train_labels, hyper, "train")?;
    check_pair(val, val_labels, hyper, "validation")?;
    if (val.rows(), val.cols()) != (train.rows(), train.cols()) {
        return arg_err("train and validation grids differ");
    }
    if val.t_len() <= hyper.first_target() {
        return arg_err(format!(
            "validation span of {} months forms no window (needs > {})",
            val.t_len(),
            hyper.first_target()
        ));
    }
    let windows: Vec<Window<f32>> = (hyper.first_target()..train.t_len().max(hyper.first_target()))
        .map(|t| window_at(train, Some(train_labels), hyper, t))
        .filter(|w| w.target_mask.iter().any(|&m| m))
        .collect();
    if windows.is_empty() {
        return arg_err("training span forms no labelled window");
    }

    let mut model = TrainedConvLstm { hyper: hyper.clone(), params: ConvLstmParams::init(hyper, hyper.seed) };
    let mut adam = Adam { m: model.params.zeros_like(), v: model.params.zeros_like(), step: 0 };
    let mut rng = SplitMix64::derive(hyper.seed, 1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let metric = if hyper.n_classes == 2 { Metric::RocAuc } else { Metric::Accuracy };

    let mut records = Vec::new();
    let mut best: Option<(f64, usize, ConvLstmParams<f32>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=hyper.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<Window<f32>> = chunk.iter().map(|&i| windows[i].clone()).collect();
            let (loss, grad) = loss_and_grad(&model.params, &batch).map_err(|e| e.context(format!("epoch {epoch}")))?;
            adam.update(&mut model.params, &grad, hyper);
            if !model.params.all_finite() {
                return Err(Error::Divergence(format!("non-finite parameters at epoch {epoch}")));
            }
            loss_sum += loss as f64;
            n_batches += 1;
        }
        let score = validation_score(&model, val, val_labels)?;
        records.push(EpochRecord { epoch, train_loss: loss_sum / n_batches as f64, val_metric: score, metric });
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score > *b || (b.is_nan() && !score.is_nan()),
        };
        if improved {
            best = Some((score, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > hyper.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    Ok((model, FitLog { records, best_epoch, stopped_early }))
}
