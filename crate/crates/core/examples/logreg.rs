//! L2-regularized logistic regression on lagged neighborhood features.

use droughtcast::cube::split_point;
use droughtcast::features::build_design_for_months;
use droughtcast::linear::{fit_logreg, predict_logreg, LogRegHyper};
use droughtcast::metrics::roc_auc;
use droughtcast::{build_design, generate, ClassScheme, SynthParams, WindowSpec};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 300, rows: 10, cols: 10, ..Default::default() })?;
    let labels = ClassScheme::binary(cube.quantile(0.3)? as f64).label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let spec = WindowSpec::new(2, 1, 3)?;
    let train = build_design_for_months(&cube, &labels, &spec, 0..split)?;
    let test = build_design(&cube, &labels, &spec)?.select_months(split..cube.t_len());

    let fit = fit_logreg(&train, &LogRegHyper::default())?;
    let trace = &fit.objective_trace;
    println!("epochs={} converged={} objective {:.6} -> {:.6}", fit.epochs, fit.converged, trace[0], trace[trace.len() - 1]);
    println!("weights={:?} bias={:?}", &fit.model.weights[..4], fit.model.bias);

    let probs = predict_logreg(&fit.model, &test)?;
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    println!("pooled test roc_auc={:.4}", roc_auc(&scores, test.targets()).unwrap_or(f64::NAN));
    Ok(())
}
