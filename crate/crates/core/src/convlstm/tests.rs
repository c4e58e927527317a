use super::*;
use crate::cube::PdsiCube;
use crate::labels::{ClassScheme, LabelCube};
use crate::synth::{generate, SynthParams};

fn small_hyper(n_classes: usize) -> ConvLstmHyper {
    ConvLstmHyper { embed_channels: 3, hidden_channels: 4, history_len: 3, n_classes, ..Default::default() }
}

fn random_window(rng: &mut SplitMix64, rows: usize, cols: usize, frames: usize, k: u8) -> Window<f64> {
    let plane = rows * cols;
    Window {
        rows,
        cols,
        frames: (0..frames * plane).map(|_| rng.normal(0.0, 3.0)).collect(),
        frame_mask: (0..frames * plane).map(|_| rng.uniform() > 0.1).collect(),
        target: (0..plane).map(|_| rng.below(k as usize) as u8).collect(),
        target_mask: (0..plane).map(|_| rng.uniform() > 0.2).collect(),
    }
}

#[test]
fn zero_params_cell_algebra() {
    let h = small_hyper(2);
    let p = ConvLstmParams::<f64>::zeros(&h);
    let x = vec![0.7; 3 * 2 * 2];
    let st = ConvLstmState::zeros(4, 2, 2);
    let out = cell_forward(&x, &st, &p).unwrap();
    assert!(out.hidden.iter().chain(&out.cell).all(|&v| v == 0.0));

    let mut st = ConvLstmState::zeros(4, 2, 2);
    st.cell = (0..16).map(|i| i as f64 * 0.3 - 2.0).collect();
    let out = cell_forward(&x, &st, &p).unwrap();
    for j in 0..16 {
        let c = st.cell[j];
        assert!((out.cell[j] - 0.5 * c).abs() < 1e-15);
        assert!((out.hidden[j] - 0.5 * (0.5 * c).tanh()).abs() < 1e-15);
    }
    assert!(cell_forward(&x[..4], &st, &p).is_err());
}

#[test]
fn zero_params_give_half_and_shapes_are_kept() {
    let p = ConvLstmParams::<f32>::zeros(&small_hyper(2));
    for &(rows, cols) in &[(9, 16), (40, 200)] {
        let w = Window::<f32> {
            rows,
            cols,
            frames: vec![1.0; 3 * rows * cols],
            frame_mask: vec![true; 3 * rows * cols],
            target: vec![0; rows * cols],
            target_mask: vec![false; rows * cols],
        };
        let probs = forward(&p, &w);
        assert_eq!(probs.len(), 2 * rows * cols);
        assert!(probs.iter().all(|&v| v == 0.5));
    }
}

#[test]
fn multiclass_probabilities_sum_to_one() {
    let h = small_hyper(5);
    let p = ConvLstmParams::<f64>::init(&h, 3);
    let mut rng = SplitMix64::new(1);
    let w = random_window(&mut rng, 4, 5, 3, 5);
    let probs = forward(&p, &w);
    for j in 0..20 {
        let s: f64 = (0..5).map(|k| probs[k * 20 + j]).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for k in [2u8, 3] {
        let h = ConvLstmHyper { embed_channels: 4, hidden_channels: 4, history_len: 3, n_classes: k as usize, ..Default::default() };
        let mut p = ConvLstmParams::<f64>::init(&h, 17);
        for b in p.head_b.iter_mut() {
            *b = 0.1;
        }
        let mut rng = SplitMix64::new(99);
        let batch: Vec<Window<f64>> = (0..2).map(|_| random_window(&mut rng, 5, 6, 3, k)).collect();
        let errs = gradient_check(&p, &batch, 1e-5, 1e-6).unwrap();
        for (name, e) in TENSOR_NAMES.iter().zip(errs) {
            assert!(e <= 1e-4, "{k} classes, {name}: relative error {e}");
        }
    }
}

#[test]
fn saturated_and_masked_losses() {
    let h = small_hyper(2);
    let mut p = ConvLstmParams::<f64>::zeros(&h);
    p.head_b[0] = 40.0;
    let mut rng = SplitMix64::new(4);
    let mut w = random_window(&mut rng, 3, 3, 3, 2);
    w.target.fill(1);
    let (loss, _) = loss_and_grad(&p, &[w.clone()]).unwrap();
    assert!(loss <= 1e-6, "{loss}");

    w.target_mask.fill(false);
    let p = ConvLstmParams::<f64>::init(&h, 1);
    let (loss, g) = loss_and_grad(&p, &[w]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn masked_values_never_matter() {
    let h = small_hyper(3);
    let p = ConvLstmParams::<f64>::init(&h, 8);
    let mut rng = SplitMix64::new(12);
    let w = random_window(&mut rng, 4, 4, 3, 3);
    let mut v = w.clone();
    for (x, &m) in v.frames.iter_mut().zip(&w.frame_mask) {
        if !m {
            *x = 1e3;
        }
    }
    for (y, &m) in v.target.iter_mut().zip(&w.target_mask) {
        if !m {
            *y = 2 - *y;
        }
    }
    let (l1, g1) = loss_and_grad(&p, &[w]).unwrap();
    let (l2, g2) = loss_and_grad(&p, &[v]).unwrap();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1, g2);
}

fn tiny_task() -> (PdsiCube, LabelCube, PdsiCube, LabelCube) {
    let cube = generate(&SynthParams { t_len: 60, rows: 6, cols: 6, seed: 2, ..Default::default() }).unwrap();
    let scheme = ClassScheme::binary(cube.quantile(0.3).unwrap() as f64);
    let (train, val) = (cube.slice_months(0..44).unwrap(), cube.slice_months(44..60).unwrap());
    let (tl, vl) = (scheme.label(&train), scheme.label(&val));
    (train, tl, val, vl)
}

#[test]
fn fit_is_deterministic_and_respects_patience() {
    let (train, tl, val, vl) = tiny_task();
    let h = ConvLstmHyper {
        embed_channels: 3,
        hidden_channels: 3,
        history_len: 2,
        max_epochs: 4,
        patience: 0,
        step_size: 1e-2,
        seed: 5,
        ..Default::default()
    };
    let (a, la) = fit(&train, &tl, &val, &vl, &h).unwrap();
    let (b, lb) = fit(&train, &tl, &val, &vl, &h).unwrap();
    assert_eq!(la.to_text(), lb.to_text());
    assert_eq!(a, b);
    // patience 0: stop on the first epoch that fails to improve
    let last = la.records.len();
    if la.stopped_early {
        assert_eq!(last, la.best_epoch + 1);
    } else {
        assert_eq!(last, 4);
    }
    assert!(la.records.iter().all(|r| r.train_loss.is_finite()));
}

#[test]
fn fit_rejects_short_validation() {
    let (train, tl, val, vl) = tiny_task();
    let h = ConvLstmHyper { history_len: 16, ..small_hyper(2) };
    let err = fit(&train, &tl, &val, &vl, &h).unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
}

#[test]
fn predict_counts_windows_and_accepts_any_grid() {
    let h = ConvLstmHyper { horizon: 2, ..small_hyper(2) };
    let model = TrainedConvLstm { params: ConvLstmParams::init(&h, 1), hyper: h.clone() };
    let cube = generate(&SynthParams { t_len: 5, rows: 7, cols: 8, ..Default::default() }).unwrap();
    let f = predict(&model, &cube).unwrap();
    assert_eq!(f.predicted_months(), vec![4]);
    let s = f.score(4, 3, 3).unwrap();
    assert!(s > 0.0 && s < 1.0);
    let cropped = crate::cube::crop_center(&cube, 0.3).unwrap();
    let g = predict(&model, &cropped).unwrap();
    assert_eq!((g.rows(), g.cols()), (cropped.rows(), cropped.cols()));
}

#[test]
fn checkpoint_round_trip() {
    let h = small_hyper(3);
    let model = TrainedConvLstm { params: ConvLstmParams::init(&h, 4), hyper: h };
    let bytes = checkpoint::to_bytes(&model);
    assert_eq!(&bytes[..4], b"CLSP");
    let back = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(checkpoint::to_bytes(&back), bytes);
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(checkpoint::from_bytes(&bad), Err(Error::UnsupportedVersion { found: 9, .. })));
}
