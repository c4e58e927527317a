//! Ranking and threshold metrics, and per-cell metric maps.

use droughtcast::forecast::ForecastCube;
use droughtcast::metrics::{accuracy, f1, median, pr_auc, roc_auc};
use droughtcast::{binarize, per_cell_map, Metric, PdsiCube};

fn main() -> droughtcast::Result<()> {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.4];
    let labels = [0, 0, 1, 1, 1];
    println!("roc_auc={:?} pr_auc={:?}", roc_auc(&scores, &labels), pr_auc(&scores, &labels));
    let pred: Vec<u8> = scores.iter().map(|&s| (s >= 0.5) as u8).collect();
    println!("f1={} accuracy={:?}", f1(&pred, &labels), accuracy(&pred, &labels));
    println!("median={:?} (empty: {:?})", median(&[3.0, 1.0, 2.0, 10.0]), median(&[]));

    // 2x2 grid over 4 months; cell (1,1) never sees drought, so its AUC is undefined
    let vals: [f32; 16] = [
        -3.0, 1.0, -3.0, 1.0, //
        1.0, -3.0, 1.0, 1.0, //
        -3.0, -3.0, 1.0, 1.0, //
        1.0, 1.0, -3.0, 1.0,
    ];
    let cube = PdsiCube::new(4, 2, 2, 0, vals.to_vec())?;
    let labels = binarize(&cube, -2.0);
    let mut f = ForecastCube::empty(4, 2, 2, 2, 0);
    for t in 0..4 {
        for i in 0..4 {
            let p = if labels.get(t, i / 2, i % 2) == Some(1) { 0.7 } else { 0.2 + 0.1 * t as f64 };
            f.set(t, i / 2, i % 2, &[1.0 - p, p])?;
        }
    }
    let map = per_cell_map(&f, &labels, Metric::RocAuc)?;
    println!("cell roc_auc={:?} median={} defined={}", map.values, map.median, map.n_defined);
    Ok(())
}
