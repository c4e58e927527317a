//! Border effects: drop the outer ring of cells from scoring, and train and
//! score on nested center windows.

use droughtcast::config::ExperimentConfig;
use droughtcast::harness::{crop_study, zoom_study};
use droughtcast::models::ModelKind;
use droughtcast::synth::corrupt_border;
use droughtcast::{generate, Metric};

fn main() -> droughtcast::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 240\nsynth.rows = 20\nsynth.cols = 20\nthreshold_quantile = 0.3\nhorizons = 1\ncrop_fracs = 0,0.2,0.4\n")?;
    cfg.models = vec![ModelKind::LogReg];
    let clean = generate(&cfg.synth)?;
    let sd = {
        let n = clean.n_valid() as f64;
        let mean = clean.valid_values().map(f64::from).sum::<f64>() / n;
        (clean.valid_values().map(|v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    let cube = corrupt_border(&clean, 0.1, 3.0 * sd, 1)?;

    for r in crop_study(&cube, &cfg)?.select("logreg", Metric::RocAuc) {
        println!("crop={:?} roc_auc={:.4}", r.crop.unwrap_or(0.0), r.value);
    }
    for r in zoom_study(&cube, &cfg)?.select("logreg", Metric::RocAuc) {
        println!("area={} roc_auc={:.4}", r.area.as_deref().unwrap_or("-"), r.value);
    }
    Ok(())
}
