//! Grid-to-grid ConvLSTM forecaster.
//!
//! Each history month passes through a convolutional encoder
//! (`tanh(conv(x))`, 1 → `embed_channels`), the embeddings drive one ConvLSTM
//! layer, and a 1x1 convolution on the last hidden state gives per-cell
//! logits. Binary schemes use one logit and a logistic link; multiclass
//! schemes use one logit per class and a softmax.
//!
//! Gradients are derived by hand and checked against finite differences.
//! Everything is generic over [`Real`] so training can run at 32-bit and
//! gradient checks at 64-bit.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;

use crate::error::{arg_err, Error, Result};
use crate::rng::SplitMix64;

pub mod checkpoint;
pub mod conv;
mod train;

pub use train::{fit, predict, window_at, EpochRecord, FitLog, TrainedConvLstm};

use conv::Geom;

pub trait Real: Float + Send + Sync + Debug + Sum + AddAssign + 'static {}
impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn cst<T: Real>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

/// PDSI values are multiplied by this before the encoder.
pub const INPUT_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmHyper {
    pub in_channels: usize,
    pub embed_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub n_classes: usize,
    pub history_len: usize,
    pub horizon: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ConvLstmHyper {
    fn default() -> Self {
        Self {
            in_channels: 1,
            embed_channels: 16,
            hidden_channels: 16,
            kernel: 3,
            n_classes: 2,
            history_len: 6,
            horizon: 1,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 4,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl ConvLstmHyper {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 1 {
            return arg_err("in_channels must be 1");
        }
        if self.kernel % 2 == 0 {
            return arg_err(format!("kernel {} must be odd", self.kernel));
        }
        if self.embed_channels == 0 || self.hidden_channels == 0 {
            return arg_err("embed_channels and hidden_channels must be >= 1");
        }
        if self.history_len == 0 || self.horizon == 0 {
            return arg_err("history_len and horizon must be >= 1");
        }
        if self.n_classes < 2 {
            return arg_err("n_classes must be >= 2");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return arg_err("batch_size and max_epochs must be >= 1");
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return arg_err("step_size must be > 0 and betas in [0, 1)");
        }
        Ok(())
    }

    pub fn n_logits(&self) -> usize {
        if self.n_classes == 2 {
            1
        } else {
            self.n_classes
        }
    }

    /// First target month with a full history window.
    pub fn first_target(&self) -> usize {
        self.history_len + self.horizon - 1
    }

    /// History months feeding target month `t`, oldest first.
    pub fn history_months(&self, t: usize) -> std::ops::Range<usize> {
        let last = t - self.horizon;
        last + 1 - self.history_len..last + 1
    }
}

pub const TENSOR_NAMES: [&str; 6] = ["enc_w", "enc_b", "gate_w", "gate_b", "head_w", "head_b"];

/// Gate rows are ordered input, forget, candidate, output; gate inputs are
/// `[embedding, hidden]` stacked along channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmParams<T> {
    pub embed_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub n_logits: usize,
    pub enc_w: Vec<T>,
    pub enc_b: Vec<T>,
    pub gate_w: Vec<T>,
    pub gate_b: Vec<T>,
    pub head_w: Vec<T>,
    pub head_b: Vec<T>,
}

impl<T: Real> ConvLstmParams<T> {
    pub fn zeros(hyper: &ConvLstmHyper) -> Self {
        let (e, h, k, n) = (hyper.embed_channels, hyper.hidden_channels, hyper.kernel, hyper.n_logits());
        Self {
            embed_channels: e,
            hidden_channels: h,
            kernel: k,
            n_logits: n,
            enc_w: vec![T::zero(); e * k * k],
            enc_b: vec![T::zero(); e],
            gate_w: vec![T::zero(); 4 * h * (e + h) * k * k],
            gate_b: vec![T::zero(); 4 * h],
            head_w: vec![T::zero(); n * h],
            head_b: vec![T::zero(); n],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero except the forget
    /// gate at 1.0. Draws come from `SplitMix64::derive(seed, 0)` in tensor order.
    pub fn init(hyper: &ConvLstmHyper, seed: u64) -> Self {
        let mut p = Self::zeros(hyper);
        let mut rng = SplitMix64::derive(seed, 0);
        let (e, h, k) = (p.embed_channels, p.hidden_channels, p.kernel);
        let mut fill = |w: &mut Vec<T>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = cst(rng.uniform_range(-a, a));
            }
        };
        fill(&mut p.enc_w, k * k);
        fill(&mut p.gate_w, (e + h) * k * k);
        fill(&mut p.head_w, h);
        for v in &mut p.gate_b[h..2 * h] {
            *v = T::one();
        }
        p
    }

    pub fn tensors(&self) -> [&[T]; 6] {
        [&self.enc_w, &self.enc_b, &self.gate_w, &self.gate_b, &self.head_w, &self.head_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 6] {
        [
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.gate_w,
            &mut self.gate_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    pub fn cast<U: Real>(&self) -> ConvLstmParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|&x| U::from(x).expect("finite parameter")).collect();
        ConvLstmParams {
            embed_channels: self.embed_channels,
            hidden_channels: self.hidden_channels,
            kernel: self.kernel,
            n_logits: self.n_logits,
            enc_w: c(&self.enc_w),
            enc_b: c(&self.enc_b),
            gate_w: c(&self.gate_w),
            gate_b: c(&self.gate_b),
            head_w: c(&self.head_w),
            head_b: c(&self.head_b),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x = *x * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn enc_geom(&self, rows: usize, cols: usize) -> Geom {
        Geom { c_in: 1, c_out: self.embed_channels, k: self.kernel, rows, cols }
    }

    fn gate_geom(&self, rows: usize, cols: usize) -> Geom {
        let h = self.hidden_channels;
        Geom { c_in: self.embed_channels + h, c_out: 4 * h, k: self.kernel, rows, cols }
    }
}

/// Hidden (short-term) and cell (long-term) memory, each `[h, rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmState<T> {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub hidden: Vec<T>,
    pub cell: Vec<T>,
}

impl<T: Real> ConvLstmState<T> {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        let n = channels * rows * cols;
        Self { channels, rows, cols, hidden: vec![T::zero(); n], cell: vec![T::zero(); n] }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Values kept from one recurrence step for the backward pass.
struct StepCache<T> {
    x: Vec<T>,
    /// `[embedding, previous hidden]`
    z: Vec<T>,
    /// Activated gates i, f, g, o.
    gates: Vec<T>,
    c_prev: Vec<T>,
    c: Vec<T>,
}

fn cell_step<T: Real>(
    params: &ConvLstmParams<T>,
    z: &[T],
    c_prev: &[T],
    rows: usize,
    cols: usize,
    gates: &mut Vec<T>,
    c: &mut Vec<T>,
    h: &mut Vec<T>,
) {
    let hc = params.hidden_channels;
    let n = hc * rows * cols;
    gates.resize(4 * n, T::zero());
    conv::forward(&params.gate_geom(rows, cols), z, &params.gate_w, &params.gate_b, gates);
    let (ig, rest) = gates.split_at_mut(n);
    let (fg, rest) = rest.split_at_mut(n);
    let (gg, og) = rest.split_at_mut(n);
    c.resize(n, T::zero());
    h.resize(n, T::zero());
    for j in 0..n {
        let (i, f, g, o) = (sigmoid(ig[j]), sigmoid(fg[j]), gg[j].tanh(), sigmoid(og[j]));
        ig[j] = i;
        fg[j] = f;
        gg[j] = g;
        og[j] = o;
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
}

/// One ConvLSTM update from an embedding field `[embed, rows, cols]`.
pub fn cell_forward<T: Real>(
    x_embed: &[T],
    state: &ConvLstmState<T>,
    params: &ConvLstmParams<T>,
) -> Result<ConvLstmState<T>> {
    let (rows, cols, hc) = (state.rows, state.cols, params.hidden_channels);
    let plane = rows * cols;
    if x_embed.len() != params.embed_channels * plane
        || state.channels != hc
        || state.hidden.len() != hc * plane
        || state.cell.len() != hc * plane
    {
        return arg_err("embedding and state dimensions disagree with parameters");
    }
    let mut z = x_embed.to_vec();
    z.extend_from_slice(&state.hidden);
    let mut out = ConvLstmState::zeros(hc, rows, cols);
    let mut gates = Vec::new();
    cell_step(params, &z, &state.cell, rows, cols, &mut gates, &mut out.cell, &mut out.hidden);
    Ok(out)
}

/// Input frames for one forecast plus, when training, the target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    pub rows: usize,
    pub cols: usize,
    /// `[history_len, rows, cols]`, raw PDSI units.
    pub frames: Vec<T>,
    pub frame_mask: Vec<bool>,
    /// `[rows, cols]` class labels; ignored where `target_mask` is false.
    pub target: Vec<u8>,
    pub target_mask: Vec<bool>,
}

impl<T: Real> Window<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.len() / (self.rows * self.cols)
    }
}

struct Trace<T> {
    steps: Vec<StepCache<T>>,
    h_last: Vec<T>,
    logits: Vec<T>,
}

fn run_forward<T: Real>(params: &ConvLstmParams<T>, w: &Window<T>, keep: bool) -> Trace<T> {
    let (rows, cols) = (w.rows, w.cols);
    let plane = rows * cols;
    let (e, hc) = (params.embed_channels, params.hidden_channels);
    let scale: T = cst(INPUT_SCALE);
    let mut h = vec![T::zero(); hc * plane];
    let mut c = vec![T::zero(); hc * plane];
    let mut steps = Vec::new();
    let eg = params.enc_geom(rows, cols);
    for m in 0..w.n_frames() {
        let x: Vec<T> = (0..plane)
            .map(|j| if w.frame_mask[m * plane + j] { w.frames[m * plane + j] * scale } else { T::zero() })
            .collect();
        let mut z = vec![T::zero(); (e + hc) * plane];
        conv::forward(&eg, &x, &params.enc_w, &params.enc_b, &mut z[..e * plane]);
        for v in &mut z[..e * plane] {
            *v = v.tanh();
        }
        z[e * plane..].copy_from_slice(&h);
        let (mut gates, mut c_new, mut h_new) = (Vec::new(), Vec::new(), Vec::new());
        cell_step(params, &z, &c, rows, cols, &mut gates, &mut c_new, &mut h_new);
        let c_prev = std::mem::replace(&mut c, c_new);
        h = h_new;
        if keep {
            steps.push(StepCache { x, z, gates, c_prev, c: c.clone() });
        }
    }
    let n = params.n_logits;
    let mut logits = vec![T::zero(); n * plane];
    for k in 0..n {
        let dst = &mut logits[k * plane..(k + 1) * plane];
        dst.fill(params.head_b[k]);
        for j in 0..hc {
            let wv = params.head_w[k * hc + j];
            for (a, &v) in dst.iter_mut().zip(&h[j * plane..(j + 1) * plane]) {
                *a += wv * v;
            }
        }
    }
    Trace { steps, h_last: h, logits }
}

/// Class probabilities `[n_classes, rows, cols]` for one window.
pub fn forward<T: Real>(params: &ConvLstmParams<T>, window: &Window<T>) -> Vec<T> {
    let tr = run_forward(params, window, false);
    let plane = window.rows * window.cols;
    probs_from_logits(&tr.logits, params.n_logits, plane)
}

fn probs_from_logits<T: Real>(logits: &[T], n_logits: usize, plane: usize) -> Vec<T> {
    if n_logits == 1 {
        let p: Vec<T> = logits.iter().map(|&l| sigmoid(l)).collect();
        let mut out: Vec<T> = p.iter().map(|&q| T::one() - q).collect();
        out.extend(p);
        return out;
    }
    let mut out = vec![T::zero(); n_logits * plane];
    for j in 0..plane {
        let mx = (0..n_logits).map(|k| logits[k * plane + j]).fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for k in 0..n_logits {
            let e = (logits[k * plane + j] - mx).exp();
            out[k * plane + j] = e;
            s += e;
        }
        for k in 0..n_logits {
            out[k * plane + j] = out[k * plane + j] / s;
        }
    }
    out
}

/// Summed cross-entropy over valid target cells, the number of those cells,
/// and the gradient of the sum.
pub fn window_loss_grad<T: Real>(params: &ConvLstmParams<T>, w: &Window<T>) -> (T, usize, ConvLstmParams<T>) {
    let mut grad = params.zeros_like();
    let n_valid = w.target_mask.iter().filter(|&&m| m).count();
    if n_valid == 0 {
        return (T::zero(), 0, grad);
    }
    let tr = run_forward(params, w, true);
    let (rows, cols) = (w.rows, w.cols);
    let plane = rows * cols;
    let (e, hc, nl) = (params.embed_channels, params.hidden_channels, params.n_logits);

    let mut loss = T::zero();
    let mut d_logits = vec![T::zero(); nl * plane];
    for j in (0..plane).filter(|&j| w.target_mask[j]) {
        let y = w.target[j] as usize;
        if nl == 1 {
            let l = tr.logits[j];
            let yt = if y == 1 { T::one() } else { T::zero() };
            loss += l.max(T::zero()) - l * yt + (T::one() + (-l.abs()).exp()).ln();
            d_logits[j] = sigmoid(l) - yt;
        } else {
            let mx = (0..nl).map(|k| tr.logits[k * plane + j]).fold(T::neg_infinity(), T::max);
            let s: T = (0..nl).map(|k| (tr.logits[k * plane + j] - mx).exp()).sum();
            loss += mx + s.ln() - tr.logits[y * plane + j];
            for k in 0..nl {
                let p = (tr.logits[k * plane + j] - mx).exp() / s;
                d_logits[k * plane + j] = if k == y { p - T::one() } else { p };
            }
        }
    }

    // head
    let mut dh = vec![T::zero(); hc * plane];
    for k in 0..nl {
        let dl = &d_logits[k * plane..(k + 1) * plane];
        grad.head_b[k] += dl.iter().copied().sum::<T>();
        for j in 0..hc {
            let hs = &tr.h_last[j * plane..(j + 1) * plane];
            grad.head_w[k * hc + j] += dl.iter().zip(hs).map(|(&a, &b)| a * b).sum::<T>();
            let wv = params.head_w[k * hc + j];
            for (a, &v) in dh[j * plane..(j + 1) * plane].iter_mut().zip(dl) {
                *a += wv * v;
            }
        }
    }

    // recurrence, newest step first
    let n = hc * plane;
    let gg = params.gate_geom(rows, cols);
    let eg = params.enc_geom(rows, cols);
    let mut dc = vec![T::zero(); n];
    let mut d_gates = vec![T::zero(); 4 * n];
    let mut dz = vec![T::zero(); (e + hc) * plane];
    for st in tr.steps.iter().rev() {
        let (i, f, g, o) = (&st.gates[..n], &st.gates[n..2 * n], &st.gates[2 * n..3 * n], &st.gates[3 * n..]);
        for j in 0..n {
            let tc = st.c[j].tanh();
            let d_o = dh[j] * tc;
            dc[j] += dh[j] * o[j] * (T::one() - tc * tc);
            let (d_i, d_g, d_f) = (dc[j] * g[j], dc[j] * i[j], dc[j] * st.c_prev[j]);
            d_gates[j] = d_i * i[j] * (T::one() - i[j]);
            d_gates[n + j] = d_f * f[j] * (T::one() - f[j]);
            d_gates[2 * n + j] = d_g * (T::one() - g[j] * g[j]);
            d_gates[3 * n + j] = d_o * o[j] * (T::one() - o[j]);
            dc[j] = dc[j] * f[j];
        }
        dz.fill(T::zero());
        conv::backward(&gg, &st.z, &params.gate_w, &d_gates, &mut grad.gate_w, &mut grad.gate_b, Some(&mut dz));
        let (de, dh_prev) = dz.split_at_mut(e * plane);
        for (d, &a) in de.iter_mut().zip(&st.z[..e * plane]) {
            *d = *d * (T::one() - a * a);
        }
        conv::backward(&eg, &st.x, &params.enc_w, de, &mut grad.enc_w, &mut grad.enc_b, None);
        dh.copy_from_slice(dh_prev);
    }
    (loss, n_valid, grad)
}

/// Mean cross-entropy over valid target cells of every window, and its gradient.
///
/// All-masked batches give loss 0 and a zero gradient.
pub fn loss_and_grad<T: Real>(params: &ConvLstmParams<T>, batch: &[Window<T>]) -> Result<(T, ConvLstmParams<T>)> {
    use rayon::prelude::*;
    let parts: Vec<(T, usize, ConvLstmParams<T>)> = batch.par_iter().map(|w| window_loss_grad(params, w)).collect();
    let mut grad = params.zeros_like();
    let (mut loss, mut count) = (T::zero(), 0usize);
    for (l, n, g) in &parts {
        loss += *l;
        count += n;
        grad.add_assign(g);
    }
    if count == 0 {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / cst::<T>(count as f64);
    loss = loss * inv;
    grad.scale(inv);
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {loss:?}")));
    }
    Ok((loss, grad))
}

/// Largest per-entry relative error between the analytic gradient and
/// central finite differences, for each tensor in [`TENSOR_NAMES`] order.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, floor)`; the
/// floor keeps entries whose true gradient is ~0 from dividing by noise.
pub fn gradient_check(params: &ConvLstmParams<f64>, batch: &[Window<f64>], step: f64, floor: f64) -> Result<[f64; 6]> {
    let (_, analytic) = loss_and_grad(params, batch)?;
    let mut worst = [0.0f64; 6];
    let mut probe = params.clone();
    for (ti, w) in worst.iter_mut().enumerate() {
        for i in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let (up, _) = loss_and_grad(&probe, batch)?;
            probe.tensors_mut()[ti][i] = orig - step;
            let (down, _) = loss_and_grad(&probe, batch)?;
            probe.tensors_mut()[ti][i] = orig;
            let num = (up - down) / (2.0 * step);
            let a = analytic.tensors()[ti][i];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(floor);
            *w = w.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
