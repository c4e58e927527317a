//! Same-padded 2-D convolution over channel-major `[C, rows, cols]` buffers.
//!
//! Weights are laid out `[c_out, c_in, k, k]`; padding is zero and
//! `(k - 1) / 2` on every side, so the output grid equals the input grid.

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Geom {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.rows * self.cols
    }

    /// Output columns `x0..x1` that read input column `x + kx - pad` in range.
    #[inline]
    fn col_span(&self, kx: usize) -> (usize, usize) {
        let pad = self.k / 2;
        let x0 = pad.saturating_sub(kx);
        let x1 = (self.cols + pad).saturating_sub(kx).min(self.cols);
        (x0, x1)
    }

    #[inline]
    fn row_span(&self, ky: usize) -> (usize, usize) {
        let pad = self.k / 2;
        let y0 = pad.saturating_sub(ky);
        let y1 = (self.rows + pad).saturating_sub(ky).min(self.rows);
        (y0, y1)
    }
}

/// `out = conv(input, w) + b`; `out` is overwritten.
pub fn forward<T: Real>(g: &Geom, input: &[T], w: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(input.len(), g.c_in * g.plane());
    debug_assert_eq!(w.len(), g.weight_len());
    debug_assert_eq!(out.len(), g.c_out * g.plane());
    let (pl, pad, k) = (g.plane(), g.k / 2, g.k);
    for co in 0..g.c_out {
        let dst = &mut out[co * pl..(co + 1) * pl];
        dst.fill(b[co]);
        for ci in 0..g.c_in {
            let src = &input[ci * pl..(ci + 1) * pl];
            for ky in 0..k {
                let (y0, y1) = g.row_span(ky);
                for kx in 0..k {
                    let wv = w[((co * g.c_in + ci) * k + ky) * k + kx];
                    let (x0, x1) = g.col_span(kx);
                    for y in y0..y1 {
                        let iy = y + ky - pad;
                        let o = &mut dst[y * g.cols + x0..y * g.cols + x1];
                        let s = &src[iy * g.cols + x0 + kx - pad..iy * g.cols + x1 + kx - pad];
                        for (a, &v) in o.iter_mut().zip(s) {
                            *a += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight, bias and (optionally) input gradients given `d_out`.
pub fn backward<T: Real>(
    g: &Geom,
    input: &[T],
    w: &[T],
    d_out: &[T],
    d_w: &mut [T],
    d_b: &mut [T],
    mut d_in: Option<&mut [T]>,
) {
    let (pl, pad, k) = (g.plane(), g.k / 2, g.k);
    for co in 0..g.c_out {
        let dy = &d_out[co * pl..(co + 1) * pl];
        d_b[co] += dy.iter().copied().sum::<T>();
        for ci in 0..g.c_in {
            let src = &input[ci * pl..(ci + 1) * pl];
            for ky in 0..k {
                let (y0, y1) = g.row_span(ky);
                for kx in 0..k {
                    let wi = ((co * g.c_in + ci) * k + ky) * k + kx;
                    let (x0, x1) = g.col_span(kx);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = y + ky - pad;
                        let go = &dy[y * g.cols + x0..y * g.cols + x1];
                        let s = &src[iy * g.cols + x0 + kx - pad..iy * g.cols + x1 + kx - pad];
                        for (&a, &v) in go.iter().zip(s) {
                            acc += a * v;
                        }
                    }
                    d_w[wi] += acc;
                    if let Some(di) = d_in.as_deref_mut() {
                        let wv = w[wi];
                        let dst = &mut di[ci * pl..(ci + 1) * pl];
                        for y in y0..y1 {
                            let iy = y + ky - pad;
                            let go = &dy[y * g.cols + x0..y * g.cols + x1];
                            let d = &mut dst[iy * g.cols + x0 + kx - pad..iy * g.cols + x1 + kx - pad];
                            for (a, &v) in d.iter_mut().zip(go) {
                                *a += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
}
