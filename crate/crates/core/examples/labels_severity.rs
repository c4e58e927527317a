//! Binary, three-class and five-class labels, and the nine named PDSI bands.

use droughtcast::{generate, severity_class, ClassScheme, SynthParams};

fn main() -> droughtcast::Result<()> {
    for v in [-4.5, -3.2, -2.0, -1.0, 0.0, 1.2, 2.5, 3.9, 6.0] {
        println!("{v:>5} -> {}", severity_class(v).name());
    }
    let cube = generate(&SynthParams { t_len: 120, rows: 8, cols: 8, ..Default::default() })?;
    for scheme in [ClassScheme::binary(-2.0), ClassScheme::three_class(), ClassScheme::five_class()] {
        let labels = scheme.label(&cube);
        println!("thresholds={:?} histogram={:?}", scheme.thresholds(), labels.histogram());
    }
    Ok(())
}
