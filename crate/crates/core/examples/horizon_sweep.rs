//! Median test ROC AUC per model as the lead time grows.

use droughtcast::config::ExperimentConfig;
use droughtcast::harness::horizon_sweep;
use droughtcast::models::ModelKind;
use droughtcast::{generate, Metric};

fn main() -> droughtcast::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 240\nsynth.rows = 10\nsynth.cols = 10\nthreshold_quantile = 0.3\nhorizons = 1,3,6,12\n")?;
    cfg.models = vec![ModelKind::Baseline, ModelKind::Rolling, ModelKind::LogReg, ModelKind::Gbdt];
    let cube = generate(&cfg.synth)?;
    let table = horizon_sweep(&cube, &cfg)?;
    for m in &cfg.models {
        let row: Vec<String> = table.select(m.name(), Metric::RocAuc).map(|r| format!("{:.3}", r.value)).collect();
        println!("{:<9} {}", m.name(), row.join("  "));
    }
    println!("config_hash={}", cfg.hash());
    Ok(())
}
