//! Compare ConvLSTM backprop against central finite differences.

use droughtcast::convlstm::{gradient_check, window_at, ConvLstmHyper, ConvLstmParams, Window, TENSOR_NAMES};
use droughtcast::{generate, ClassScheme, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 30, rows: 5, cols: 6, ..Default::default() })?;
    for scheme in [ClassScheme::binary(cube.quantile(0.3)? as f64), ClassScheme::three_class()] {
        let labels = scheme.label(&cube);
        let hyper = ConvLstmHyper {
            embed_channels: 4,
            hidden_channels: 4,
            history_len: 3,
            n_classes: scheme.n_classes(),
            ..Default::default()
        };
        let params = ConvLstmParams::<f64>::init(&hyper, 5);
        let batch: Vec<Window<f64>> = (10..12).map(|t| window_at(&cube, Some(&labels), &hyper, t)).collect();
        let errs = gradient_check(&params, &batch, 1e-5, 1e-6)?;
        println!("{} classes, {} params", scheme.n_classes(), params.n_params());
        for (name, e) in TENSOR_NAMES.iter().zip(errs) {
            println!("  {name:<7} max rel err {e:.2e}");
        }
    }
    Ok(())
}
