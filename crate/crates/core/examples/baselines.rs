//! Majority-class and rolling-window baselines.

use droughtcast::cube::split_point;
use droughtcast::linear::{fit_majority, predict_rolling};
use droughtcast::metrics::{per_cell_map, Metric};
use droughtcast::{generate, ClassScheme, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 240, rows: 10, cols: 10, ..Default::default() })?;
    let labels = ClassScheme::binary(cube.quantile(0.3)? as f64).label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let majority = fit_majority(&labels.slice_months(0, split)?)?;
    println!("majority={} prior={:?}", majority.majority_class, majority.class_prior);

    let mut flat = majority.predict(cube.dims(), cube.start_month());
    flat.restrict_months(split..cube.t_len());
    println!("majority roc_auc={:.4}", per_cell_map(&flat, &labels, Metric::RocAuc)?.median);

    for window in [1, 6, 12] {
        let mut f = predict_rolling(&labels, window, 1, &majority)?;
        f.restrict_months(split..cube.t_len());
        println!("rolling w={window:<2} roc_auc={:.4}", per_cell_map(&f, &labels, Metric::RocAuc)?.median);
    }
    Ok(())
}
