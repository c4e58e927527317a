//! Out-of-time split and center crops of a cube.

use droughtcast::cube::center_window;
use droughtcast::{crop_center, generate, out_of_time_split, SynthParams};

fn main() -> droughtcast::Result<()> {
    let cube = generate(&SynthParams { t_len: 100, rows: 40, cols: 60, ..Default::default() })?;
    let (train, test) = out_of_time_split(&cube, 0.7)?;
    println!("train={:?} test={:?} test starts at month {}", train.dims(), test.dims(), test.start_month());
    for keep in [1.0, 0.75, 0.53, 0.27] {
        let (r, c) = center_window(cube.rows(), cube.cols(), keep)?;
        let crop = crop_center(&cube, keep)?;
        let area = crop.grid_len() as f64 / cube.grid_len() as f64;
        println!("keep={keep:<4} rows={r:?} cols={c:?} area={area:.3}");
    }
    Ok(())
}
