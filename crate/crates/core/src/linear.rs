//! Class-frequency baselines and (multinomial) logistic regression.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{arg_err, Error, Result};
use crate::features::{DesignMatrix, FeatureScaling};
use crate::forecast::ForecastCube;
use crate::labels::LabelCube;

/// Most frequent training class plus empirical class frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub majority_class: u8,
    pub class_prior: Vec<f64>,
}

/// Counts classes over valid labels; ties go to the lower class index.
pub fn fit_majority(labels: &LabelCube) -> Result<BaselineModel> {
    let hist = labels.histogram();
    let total: usize = hist.iter().sum();
    if total == 0 {
        return Err(Error::EmptyData("no valid labels to fit a baseline".into()));
    }
    let majority = majority_of(&hist);
    let class_prior = hist.iter().map(|&h| h as f64 / total as f64).collect();
    Ok(BaselineModel { majority_class: majority as u8, class_prior })
}

fn majority_of(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

impl BaselineModel {
    /// Constant forecast of the class prior at every entry of `dims`.
    pub fn predict(&self, dims: (usize, usize, usize), start_month: i64) -> ForecastCube {
        let mut f = ForecastCube::empty(dims.0, dims.1, dims.2, self.class_prior.len(), start_month);
        for t in 0..dims.0 {
            for r in 0..dims.1 {
                for c in 0..dims.2 {
                    f.set(t, r, c, &self.class_prior).expect("prior width matches");
                }
            }
        }
        f
    }
}

/// Rolling most-frequent-class forecast.
///
/// For target month `t` the forecast issued `horizon` months earlier puts all
/// mass on the most frequent valid label in months `(t - horizon - window, t - horizon]`.
/// Targets with no valid label in that span (including the first `horizon`
/// months) fall back to `fallback.class_prior`.
pub fn predict_rolling(
    labels: &LabelCube,
    window: usize,
    horizon: usize,
    fallback: &BaselineModel,
) -> Result<ForecastCube> {
    let (t_len, rows, cols) = labels.dims();
    if window == 0 || window > t_len {
        return arg_err(format!("rolling window {window} outside [1, {t_len}]"));
    }
    if horizon == 0 {
        return arg_err("horizon must be >= 1");
    }
    let k = labels.n_classes();
    if fallback.class_prior.len() != k {
        return arg_err("fallback prior has the wrong number of classes");
    }
    let mut f = ForecastCube::empty(t_len, rows, cols, k, 0);
    let mut counts = vec![0usize; k];
    let mut probs = vec![0.0; k];
    for r in 0..rows {
        for c in 0..cols {
            counts.fill(0);
            for t in 0..t_len {
                // slide the window so it covers (t - horizon - window, t - horizon]
                if t >= horizon {
                    let newest = t - horizon;
                    if let Some(y) = labels.get(newest, r, c) {
                        counts[y as usize] += 1;
                    }
                    if newest >= window {
                        if let Some(y) = labels.get(newest - window, r, c) {
                            counts[y as usize] -= 1;
                        }
                    }
                }
                if counts.iter().all(|&n| n == 0) {
                    f.set(t, r, c, &fallback.class_prior)?;
                } else {
                    probs.fill(0.0);
                    probs[majority_of(&counts)] = 1.0;
                    f.set(t, r, c, &probs)?;
                }
            }
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegHyper {
    pub l2: f64,
    pub max_epochs: usize,
    pub step_size: f64,
    pub tol: f64,
    pub standardize: bool,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        Self { l2: 1e-4, max_epochs: 500, step_size: 1.0, tol: 1e-8, standardize: false }
    }
}

/// Logistic model. Binary problems keep a single logit row for class 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub n_classes: usize,
    pub width: usize,
    /// Row-major `n_logits x width`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub scaling: Option<FeatureScaling>,
}

impl LinearModel {
    pub fn zeros(n_classes: usize, width: usize) -> Self {
        let rows = n_logits(n_classes);
        Self { n_classes, width, weights: vec![0.0; rows * width], bias: vec![0.0; rows], scaling: None }
    }

    pub fn n_logits(&self) -> usize {
        n_logits(self.n_classes)
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let nw = self.weights.len();
        self.weights.copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }

    /// Class probabilities for one (already scaled) feature row.
    pub fn probs_row(&self, x: &[f64], out: &mut [f64]) {
        let mut logits = vec![0.0; self.n_logits()];
        logits_into(&self.weights, &self.bias, self.width, x, &mut logits);
        probs_from_logits(&logits, out);
    }

    /// Plain-text record dump: one `key=value` per line, numbers with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::from("droughtcast-logreg\nversion=1\n");
        let _ = writeln!(s, "n_classes={}", self.n_classes);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "weights={}", join_f64(&self.weights));
        let _ = writeln!(s, "bias={}", join_f64(&self.bias));
        if let Some(sc) = &self.scaling {
            let _ = writeln!(s, "scaling_mean={}", join_f64(&sc.mean));
            let _ = writeln!(s, "scaling_sd={}", join_f64(&sc.sd));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("droughtcast-logreg") {
            return Err(Error::Format("not a logistic-regression record".into()));
        }
        let kv = parse_records(lines)?;
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let need = |k: &str| get(k).ok_or_else(|| Error::Format(format!("missing key {k}")));
        let version: u32 = need("version")?.parse().map_err(|_| Error::Format("bad version".into()))?;
        if version != 1 {
            return Err(Error::UnsupportedVersion { found: version, expected: 1 });
        }
        let n_classes: usize = need("n_classes")?.parse().map_err(|_| Error::Format("bad n_classes".into()))?;
        let width: usize = need("width")?.parse().map_err(|_| Error::Format("bad width".into()))?;
        let weights = split_f64(need("weights")?)?;
        let bias = split_f64(need("bias")?)?;
        if n_classes < 2 || weights.len() != n_logits(n_classes) * width || bias.len() != n_logits(n_classes) {
            return Err(Error::Corrupt("weight block does not match declared shape".into()));
        }
        let scaling = match (get("scaling_mean"), get("scaling_sd")) {
            (Some(m), Some(s)) => Some(FeatureScaling { mean: split_f64(m)?, sd: split_f64(s)? }),
            _ => None,
        };
        Ok(Self { n_classes, width, weights, bias, scaling })
    }
}

pub(crate) fn parse_records<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Vec<(String, String)>> {
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Format(format!("expected key=value, got {l:?}")))
        })
        .collect()
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

fn split_f64(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|x| x.parse().map_err(|_| Error::Format(format!("bad number {x:?}"))))
        .collect()
}

fn n_logits(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

#[inline]
fn logits_into(weights: &[f64], bias: &[f64], width: usize, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let w = &weights[k * width..(k + 1) * width];
        *o = bias[k] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Logistic for one logit, softmax otherwise.
pub fn probs_from_logits(logits: &[f64], out: &mut [f64]) {
    if logits.len() == 1 {
        let p = sigmoid(logits[0]);
        out[0] = 1.0 - p;
        out[1] = p;
    } else {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, &l) in out.iter_mut().zip(logits) {
            *o = (l - m).exp();
            z += *o;
        }
        out.iter_mut().for_each(|o| *o /= z);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

const CHUNK: usize = 4096;

/// Mean cross-entropy plus `(l2 / 2) * ||W||^2` (bias unpenalized), and its
/// gradient with respect to `[weights..., bias...]`.
///
/// Rows are reduced in fixed-size chunks summed in order, so the result does
/// not depend on the thread count.
pub fn logreg_objective(model: &LinearModel, design: &DesignMatrix, l2: f64) -> (f64, Vec<f64>) {
    let width = model.width;
    let nl = model.n_logits();
    let n = design.n_samples().max(1) as f64;
    let np = nl * width + nl;
    let partials: Vec<(f64, Vec<f64>)> = design
        .features()
        .par_chunks(CHUNK * width)
        .zip(design.targets().par_chunks(CHUNK))
        .map(|(xs, ys)| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; np];
            let mut logits = vec![0.0; nl];
            let mut probs = vec![0.0; nl.max(2)];
            for (x, &y) in xs.chunks_exact(width).zip(ys) {
                logits_into(&model.weights, &model.bias, width, x, &mut logits);
                if nl == 1 {
                    let z = logits[0];
                    let yf = y as f64;
                    loss += softplus(z) - yf * z;
                    let d = sigmoid(z) - yf;
                    for (g, xi) in grad[..width].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    grad[width] += d;
                } else {
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
                    loss += lse - logits[y as usize];
                    probs_from_logits(&logits, &mut probs);
                    for k in 0..nl {
                        let d = probs[k] - f64::from(u8::from(k == y as usize));
                        for (g, xi) in grad[k * width..(k + 1) * width].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                        grad[nl * width + k] += d;
                    }
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; np];
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let wsq: f64 = model.weights.iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * wsq;
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegFit {
    pub model: LinearModel,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

pub fn fit_logreg(design: &DesignMatrix, hyper: &LogRegHyper) -> Result<LogRegFit> {
    fit_logreg_from(design, hyper, None)
}

/// Full-batch gradient descent with step halving until the objective does
/// not increase (Armijo test, c = 1e-4); after an accepted step the next
/// trial step doubles.
pub fn fit_logreg_from(design: &DesignMatrix, hyper: &LogRegHyper, init: Option<&LinearModel>) -> Result<LogRegFit> {
    if design.n_samples() < design.n_classes() {
        return arg_err(format!(
            "{} samples cannot fit {} classes",
            design.n_samples(),
            design.n_classes()
        ));
    }
    if design.features().iter().any(|x| !x.is_finite()) {
        return arg_err("design holds non-finite features");
    }
    if !(hyper.step_size > 0.0) || !(hyper.l2 >= 0.0) {
        return arg_err("step_size must be > 0 and l2 >= 0");
    }
    let (scaling, scaled) = if hyper.standardize {
        let s = FeatureScaling::fit(design);
        let d = s.apply(design);
        (Some(s), Some(d))
    } else {
        (None, None)
    };
    let data = scaled.as_ref().unwrap_or(design);
    let mut model = match init {
        Some(m) => {
            if m.width != design.width() || m.n_classes != design.n_classes() {
                return arg_err("initial model does not match design");
            }
            m.clone()
        }
        None => LinearModel::zeros(design.n_classes(), design.width()),
    };
    model.scaling = None;

    let (mut obj, mut grad) = logreg_objective(&model, data, hyper.l2);
    if !obj.is_finite() {
        return Err(Error::Divergence("initial loss is not finite; try a smaller step_size or standardize features".into()));
    }
    let mut trace = vec![obj];
    let mut step = hyper.step_size;
    let mut params = model.to_params();
    let mut converged = false;
    let mut epochs = 0;
    while epochs < hyper.max_epochs {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= hyper.tol {
            converged = true;
            break;
        }
        epochs += 1;
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let mut cand = model.clone();
            cand.set_params(&trial);
            let (o, g) = logreg_objective(&cand, data, hyper.l2);
            if o.is_finite() && o <= obj - 1e-4 * step * gsq {
                params = trial;
                model = cand;
                obj = o;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if !obj.is_finite() {
                return Err(Error::Divergence("loss became non-finite; try a smaller step_size".into()));
            }
            // no representable descent step remains
            converged = true;
            break;
        }
        trace.push(obj);
        step *= 2.0;
    }
    model.scaling = scaling;
    Ok(LogRegFit { model, objective_trace: trace, epochs, converged })
}

/// Per-sample class probabilities; rows sum to one.
pub fn predict_logreg(model: &LinearModel, design: &DesignMatrix) -> Result<Vec<Vec<f64>>> {
    if design.width() != model.width {
        return arg_err(format!("design width {} != model width {}", design.width(), model.width));
    }
    Ok(design
        .features()
        .par_chunks(model.width)
        .map(|x| {
            let mut out = vec![0.0; model.n_classes];
            match &model.scaling {
                Some(s) => {
                    let mut z = vec![0.0; x.len()];
                    s.apply_row(x, &mut z);
                    model.probs_row(&z, &mut out);
                }
                None => model.probs_row(x, &mut out),
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_design(n: usize, w: usize, k: usize, seed: u64) -> DesignMatrix {
        let mut rng = SplitMix64::new(seed);
        let feats = (0..n * w).map(|_| rng.normal(0.0, 1.0)).collect();
        let ys = (0..n).map(|_| rng.below(k) as u8).collect();
        DesignMatrix::from_parts(w, k, feats, ys).unwrap()
    }

    #[test]
    fn majority_counts() {
        let labels = LabelCube::new(1, 1, 4, 2, vec![0, 0, 1, 0], vec![true; 4]).unwrap();
        let m = fit_majority(&labels).unwrap();
        assert_eq!(m.majority_class, 0);
        assert_eq!(m.class_prior, vec![0.75, 0.25]);
        let tie = LabelCube::new(1, 1, 2, 2, vec![1, 0], vec![true; 2]).unwrap();
        assert_eq!(fit_majority(&tie).unwrap().majority_class, 0);
        let empty = LabelCube::new(1, 1, 1, 2, vec![0], vec![false]).unwrap();
        assert!(matches!(fit_majority(&empty), Err(Error::EmptyData(_))));
    }

    #[test]
    fn rolling_window_one_is_persistence() {
        let labels = LabelCube::new(5, 1, 1, 2, vec![0, 1, 1, 0, 1], vec![true; 5]).unwrap();
        let prior = BaselineModel { majority_class: 0, class_prior: vec![0.6, 0.4] };
        let f = predict_rolling(&labels, 1, 1, &prior).unwrap();
        assert_eq!(f.get(0, 0, 0).unwrap(), &[0.6, 0.4]);
        for t in 1..5 {
            assert_eq!(f.argmax(t, 0, 0), labels.get(t - 1, 0, 0));
        }
    }

    #[test]
    fn rolling_full_window_is_global_majority() {
        let labels = LabelCube::new(6, 1, 1, 2, vec![1, 1, 0, 0, 1, 0], vec![true; 6]).unwrap();
        let prior = fit_majority(&labels).unwrap();
        let f = predict_rolling(&labels, 6, 1, &prior).unwrap();
        // months 0..=4 contain three 1s and two 0s
        assert_eq!(f.argmax(5, 0, 0), Some(1));
        assert!(predict_rolling(&labels, 0, 1, &prior).is_err());
        assert!(predict_rolling(&labels, 7, 1, &prior).is_err());
    }

    #[test]
    fn zero_model_is_half() {
        let m = LinearModel::zeros(2, 3);
        let d = random_design(4, 3, 2, 1);
        for p in predict_logreg(&m, &d).unwrap() {
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn saturation_and_normalization() {
        let mut m = LinearModel::zeros(2, 1);
        m.bias[0] = 40.0;
        let d = DesignMatrix::from_parts(1, 2, vec![0.0], vec![0]).unwrap();
        assert!(predict_logreg(&m, &d).unwrap()[0][1] >= 1.0 - 1e-6);

        let mut rng = SplitMix64::new(3);
        let mut m3 = LinearModel::zeros(4, 5);
        m3.weights.iter_mut().for_each(|w| *w = rng.normal(0.0, 2.0));
        for p in predict_logreg(&m3, &random_design(30, 5, 4, 8)).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(predict_logreg(&m3, &random_design(3, 4, 4, 8)).is_err());
    }

    #[test]
    fn logit_shift_keeps_argmax() {
        let mut rng = SplitMix64::new(5);
        let mut m = LinearModel::zeros(3, 4);
        m.weights.iter_mut().for_each(|w| *w = rng.normal(0.0, 1.0));
        let d = random_design(20, 4, 3, 6);
        let a = predict_logreg(&m, &d).unwrap();
        m.bias.iter_mut().for_each(|b| *b += 7.5);
        let b = predict_logreg(&m, &d).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(crate::forecast::argmax(x), crate::forecast::argmax(y));
        }
    }

    #[test]
    fn two_point_weight_matches_scalar_oracle() {
        // x = -1 (y=0), x = +1 (y=1); bias stays 0 by symmetry.
        // objective(w) = log(1 + e^-w) + w^2 / 2, minimized by 1-D Newton iterations.
        let d = DesignMatrix::from_parts(1, 2, vec![-1.0, 1.0], vec![0, 1]).unwrap();
        let hyper = LogRegHyper { l2: 1.0, max_epochs: 10_000, tol: 1e-12, ..Default::default() };
        let fit = fit_logreg(&d, &hyper).unwrap();
        let mut w: f64 = 0.0;
        for _ in 0..100 {
            let s = 1.0 / (1.0 + w.exp());
            let g = -s + w;
            let h = s * (1.0 - s) + 1.0;
            w -= g / h;
        }
        assert!((fit.model.weights[0] - w).abs() < 1e-9, "{} vs {w}", fit.model.weights[0]);
        assert!(fit.model.bias[0].abs() < 1e-9);
    }

    #[test]
    fn duplicated_data_same_weights() {
        let d = random_design(25, 3, 2, 11);
        let idx: Vec<usize> = (0..25).flat_map(|i| [i, i]).collect();
        let dd = d.select(&idx);
        let h = LogRegHyper { l2: 0.01, max_epochs: 300, ..Default::default() };
        let a = fit_logreg(&d, &h).unwrap();
        let b = fit_logreg(&dd, &h).unwrap();
        for (x, y) in a.model.weights.iter().zip(&b.model.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        let d = random_design(40, 3, 3, 2);
        let fit = fit_logreg(&d, &LogRegHyper { standardize: true, max_epochs: 50, ..Default::default() }).unwrap();
        let text = fit.model.to_text();
        assert!(text.starts_with("droughtcast-logreg\nversion=1\n"));
        assert_eq!(LinearModel::from_text(&text).unwrap(), fit.model);
        assert!(LinearModel::from_text("droughtcast-logreg\nversion=2\nn_classes=2\nwidth=1\nweights=0\nbias=0\n").is_err());
    }

    #[test]
    fn rejects_tiny_design() {
        let d = DesignMatrix::from_parts(1, 3, vec![0.0, 1.0], vec![0, 2]).unwrap();
        assert!(fit_logreg(&d, &LogRegHyper::default()).is_err());
    }
}
