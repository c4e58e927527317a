//! Generate a synthetic region, save it, and print its drought summary.

use droughtcast::{generate, summarize, ClassScheme, PdsiCube, SynthParams};

fn main() -> droughtcast::Result<()> {
    let params = SynthParams { t_len: 240, rows: 12, cols: 12, seed: 7, ..Default::default() };
    let cube = generate(&params)?;
    let path = std::env::temp_dir().join("droughtcast_synth.pdsc");
    cube.save(&path)?;
    let back = PdsiCube::load(&path)?;
    assert!(back.bit_eq(&cube));

    let scheme = ClassScheme::binary(-2.0);
    let st = summarize(&cube, &scheme)?;
    println!("dims={:?} file={}", cube.dims(), path.display());
    println!("span_months={} pct_normal={:.2} pct_drought={:.2}", st.span_months, st.pct_normal, st.pct_drought);
    println!("q0.3={:.3}", cube.quantile(0.3)?);
    Ok(())
}
