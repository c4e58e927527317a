//! Synthetic PDSI-like fields: a spatially smoothed AR(1) latent plus an
//! annual cycle.
//!
//! For month `t >= 1` the latent field evolves as
//! `z_t = ar_coeff * z_{t-1} + smooth(eps_t)` with `z_0 = 0`, and the emitted
//! value is `value_scale * z_t + seasonal_amp * sin(2*pi*t/12)`, clamped to the
//! valid PDSI bound.
//!
//! Noise is drawn on a grid padded by the kernel radius `R = ceil(3 * sigma)`
//! on each side, row-major, one month at a time, from [`SplitMix64`] seeded
//! with `seed`. Smoothing is a "valid" convolution with the separable
//! Gaussian kernel truncated at `R` and normalized to unit sum, so every
//! output cell sees a full kernel.

use crate::cube::{PdsiCube, PDSI_BOUND};
use crate::error::{arg_err, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub t_len: usize,
    pub rows: usize,
    pub cols: usize,
    pub ar_coeff: f64,
    pub spatial_sigma: f64,
    pub seasonal_amp: f64,
    pub noise_sd: f64,
    pub value_scale: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            t_len: 600,
            rows: 16,
            cols: 16,
            ar_coeff: 0.95,
            spatial_sigma: 1.5,
            seasonal_amp: 0.3,
            noise_sd: 1.0,
            value_scale: 4.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_len < 2 || self.rows == 0 || self.cols == 0 {
            return arg_err("synthetic cube needs t_len >= 2 and a non-empty grid");
        }
        if !(self.ar_coeff.abs() < 1.0) {
            return arg_err(format!("ar_coeff {} must satisfy |a| < 1", self.ar_coeff));
        }
        if !(self.spatial_sigma >= 0.0) || !self.spatial_sigma.is_finite() {
            return arg_err("spatial_sigma must be finite and >= 0");
        }
        if !(self.noise_sd >= 0.0) || !(self.value_scale >= 0.0) || !self.seasonal_amp.is_finite() {
            return arg_err("noise_sd and value_scale must be >= 0, seasonal_amp finite");
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian weights over `[-R, R]`, `R = ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn generate(params: &SynthParams) -> Result<PdsiCube> {
    params.validate()?;
    let SynthParams { t_len, rows, cols, .. } = *params;
    let kernel = gaussian_kernel(params.spatial_sigma);
    let radius = kernel.len() / 2;
    let (prow, pcol) = (rows + 2 * radius, cols + 2 * radius);

    let mut rng = SplitMix64::new(params.seed);
    let mut latent = vec![0.0f64; rows * cols];
    let mut noise = vec![0.0f64; prow * pcol];
    let mut horiz = vec![0.0f64; prow * cols];
    let mut values = Vec::with_capacity(t_len * rows * cols);

    for t in 0..t_len {
        if t > 0 {
            for e in noise.iter_mut() {
                *e = params.noise_sd * rng.standard_normal();
            }
            // horizontal pass
            for r in 0..prow {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        acc += w * noise[r * pcol + c + k];
                    }
                    horiz[r * cols + c] = acc;
                }
            }
            // vertical pass + AR update
            for r in 0..rows {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        acc += w * horiz[(r + k) * cols + c];
                    }
                    let z = &mut latent[r * cols + c];
                    *z = params.ar_coeff * *z + acc;
                }
            }
        }
        let season = params.seasonal_amp * (std::f64::consts::TAU * t as f64 / 12.0).sin();
        values.extend(latent.iter().map(|&z| {
            let v = params.value_scale * z + season;
            v.clamp(-(PDSI_BOUND as f64), PDSI_BOUND as f64) as f32
        }));
    }
    PdsiCube::new(t_len, rows, cols, 0, values)
}

/// Adds i.i.d. Gaussian noise to the outer border band of every month.
///
/// The band is `max(1, round(border_frac / 2 * side))` cells deep on each
/// side, so `border_frac` of each dimension is affected in total.
pub fn corrupt_border(cube: &PdsiCube, border_frac: f64, noise_sd: f64, seed: u64) -> Result<PdsiCube> {
    if !(0.0..1.0).contains(&border_frac) || !(noise_sd >= 0.0) {
        return arg_err("border_frac must lie in [0, 1) and noise_sd >= 0");
    }
    let (t_len, rows, cols) = cube.dims();
    let (dr, dc) = (border_depth(border_frac, rows), border_depth(border_frac, cols));
    let mut rng = SplitMix64::new(seed);
    let mut values = cube.values().to_vec();
    for t in 0..t_len {
        for r in 0..rows {
            for c in 0..cols {
                let border = r < dr || r >= rows - dr || c < dc || c >= cols - dc;
                if border {
                    let i = cube.index(t, r, c);
                    let bump = noise_sd * rng.standard_normal();
                    if cube.mask()[i] {
                        values[i] = (values[i] as f64 + bump)
                            .clamp(-(PDSI_BOUND as f64), PDSI_BOUND as f64) as f32;
                    }
                }
            }
        }
    }
    PdsiCube::with_mask(t_len, rows, cols, cube.start_month(), values, cube.mask().to_vec())
}

/// Border depth used by [`corrupt_border`] for a side of `side` cells.
pub fn border_depth(border_frac: f64, side: usize) -> usize {
    ((border_frac / 2.0 * side as f64).round() as usize).max(1)
}
