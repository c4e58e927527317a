//! Three- and five-class severity forecasts scored by per-cell accuracy.

use droughtcast::config::ExperimentConfig;
use droughtcast::harness::multiclass_study;
use droughtcast::models::ModelKind;
use droughtcast::{generate, Metric};

fn main() -> droughtcast::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 240\nsynth.rows = 10\nsynth.cols = 10\nhorizons = 1\n")?;
    cfg.models = vec![ModelKind::Baseline, ModelKind::LogReg, ModelKind::Gbdt];
    let cube = generate(&cfg.synth)?;
    for thresholds in ["-2,2", "-3,-1,1,3"] {
        cfg.set("thresholds", thresholds)?;
        let table = multiclass_study(&cube, &cfg)?;
        for r in table.rows.iter().filter(|r| r.metric == Metric::Accuracy) {
            println!("thresholds={thresholds:<10} {:<9} accuracy={:.4}", r.model, r.value);
        }
    }
    Ok(())
}
