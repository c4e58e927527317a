//! Average the forecasts of ConvLSTMs trained from different seeds.

use droughtcast::config::ExperimentConfig;
use droughtcast::harness::seed_ensemble;
use droughtcast::models::ModelKind;
use droughtcast::{generate, Metric};

fn main() -> droughtcast::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(
        "synth.t_len = 240\nsynth.rows = 10\nsynth.cols = 10\nthreshold_quantile = 0.3\nhorizons = 1\nseeds = 0,1,2\n\
         convlstm.embed_channels = 8\nconvlstm.hidden_channels = 8\nconvlstm.history_len = 3\n\
         convlstm.step_size = 0.005\nconvlstm.max_epochs = 8\nconvlstm.patience = 3\n",
    )?;
    cfg.models = vec![ModelKind::ConvLstm];
    let cube = generate(&cfg.synth)?;
    let table = seed_ensemble(&cube, &cfg)?;
    for r in table.select("convlstm", Metric::RocAuc) {
        println!("seed={:<8} roc_auc={:.4}", r.seed.as_deref().unwrap_or("-"), r.value);
    }
    Ok(())
}
