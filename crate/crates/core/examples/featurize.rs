//! Lagged neighborhood features for the tabular models.

use droughtcast::{build_design, generate, ClassScheme, SynthParams, WindowSpec};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 60, rows: 6, cols: 6, ..Default::default() })?;
    let labels = ClassScheme::binary(-2.0).label(&cube);
    let spec = WindowSpec::new(3, 2, 3)?;
    let design = build_design(&cube, &labels, &spec)?;
    println!("samples={} width={} first_target={}", design.n_samples(), design.width(), spec.first_target());
    println!("first sample {:?} target={}", design.provenance()[0], design.targets()[0]);

    let mut buf = Vec::new();
    design.write_csv(&mut buf)?;
    for line in String::from_utf8_lossy(&buf).lines().take(3) {
        println!("{line}");
    }
    Ok(())
}
