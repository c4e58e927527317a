use std::time::Instant;

use droughtcast::convlstm::{self, ConvLstmHyper};
use droughtcast::cube::split_point;
use droughtcast::metrics::{per_cell_map, Metric};
use droughtcast::{generate, ClassScheme, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams::default())?;
    let scheme = ClassScheme::binary(cube.quantile(0.3)? as f64);
    let labels = scheme.label(&cube);
    let split = split_point(cube.t_len(), 0.7)?;
    let hyper = ConvLstmHyper {
        embed_channels: 8,
        hidden_channels: 8,
        history_len: 3,
        step_size: 5e-3,
        max_epochs: 15,
        patience: 4,
        ..Default::default()
    };
    let v0 = split - split / 5;
    let train = cube.slice_months(0..v0)?;
    let val = cube.slice_months(v0 - hyper.first_target()..split)?;
    let t0 = Instant::now();
    let (model, log) = convlstm::fit(&train, &scheme.label(&train), &val, &scheme.label(&val), &hyper)?;
    print!("{}", log.to_text());
    let mut f = convlstm::predict(&model, &cube)?;
    f.restrict_months(split..cube.t_len());
    let map = per_cell_map(&f, &labels, Metric::RocAuc)?;
    println!("test median roc_auc={:.4} ({:.1}s)", map.median, t0.elapsed().as_secs_f64());
    Ok(())
}
