//! Save and reload trained models; the reloaded model forecasts identically.

use droughtcast::cube::split_point;
use droughtcast::models::{train_model, ModelKind, TrainSettings, TrainedModel};
use droughtcast::{generate, ClassScheme, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 120, rows: 8, cols: 8, ..Default::default() })?;
    let labels = ClassScheme::binary(cube.quantile(0.3)? as f64).label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let mut settings = TrainSettings::default();
    settings.convlstm.embed_channels = 4;
    settings.convlstm.hidden_channels = 4;
    settings.convlstm.history_len = 3;
    settings.convlstm.max_epochs = 2;
    settings.gbdt.n_rounds = 20;

    for kind in ModelKind::ALL {
        let (model, _) = train_model(kind, &cube, &labels, split, &settings, 0)?;
        let path = std::env::temp_dir().join(format!("droughtcast_{kind}.model"));
        model.save(&path)?;
        let back = TrainedModel::load(&path)?;
        let same = back.forecast(&cube, &labels)? == model.forecast(&cube, &labels)?;
        println!("{:<9} {} bytes, identical forecast: {same}", kind.name(), model.to_bytes().len());
    }
    Ok(())
}
