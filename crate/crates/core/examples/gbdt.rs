//! Gradient-boosted trees with validation early stopping.

use droughtcast::cube::split_point;
use droughtcast::features::build_design_for_months;
use droughtcast::gbdt::{fit_gbdt_with_validation, predict_gbdt, GbdtHyper, GbdtModel};
use droughtcast::metrics::roc_auc;
use droughtcast::{build_design, generate, ClassScheme, SynthParams, WindowSpec};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 300, rows: 10, cols: 10, ..Default::default() })?;
    let labels = ClassScheme::binary(cube.quantile(0.3)? as f64).label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let v0 = split - split / 5;
    let spec = WindowSpec::new(2, 1, 3)?;
    let train = build_design_for_months(&cube, &labels, &spec, 0..v0)?;
    let val = build_design_for_months(&cube, &labels, &spec, v0..split)?;

    let hyper = GbdtHyper { n_rounds: 100, patience: 10, ..Default::default() };
    let fit = fit_gbdt_with_validation(&train, Some(&val), &hyper)?;
    println!("status={:?} rounds kept={}", fit.status, fit.model.n_rounds());
    println!("train loss {:.4} -> {:.4}", fit.train_loss[0], fit.train_loss[fit.train_loss.len() - 1]);

    let text = fit.model.to_text();
    assert_eq!(GbdtModel::from_text(&text)?, fit.model);
    println!("model text: {} lines", text.lines().count());

    let test = build_design(&cube, &labels, &spec)?.select_months(split..cube.t_len());
    let scores: Vec<f64> = predict_gbdt(&fit.model, &test)?.iter().map(|p| p[1]).collect();
    println!("pooled test roc_auc={:.4}", roc_auc(&scores, test.targets()).unwrap_or(f64::NAN));
    Ok(())
}
