//! CLSP checkpoints: magic `CLSP`, u32 version, hyperparameter block, then
//! the parameter tensors in [`TENSOR_NAMES`](super::TENSOR_NAMES) order as
//! little-endian f32. All integers and floats are little-endian.
//!
//! ```text
//! hyper block: u32 in_channels, embed_channels, hidden_channels, kernel,
//!              n_classes, history_len, horizon, batch_size, max_epochs,
//!              patience; f64 step_size, beta1, beta2, eps; u64 seed
//! ```

use std::path::Path;

use super::{ConvLstmHyper, ConvLstmParams, TrainedConvLstm};
use crate::error::{Error, Result};

pub const CLSP_MAGIC: &[u8; 4] = b"CLSP";
pub const CLSP_VERSION: u32 = 1;

pub fn to_bytes(model: &TrainedConvLstm) -> Vec<u8> {
    let h = &model.hyper;
    let mut out = Vec::with_capacity(80 + 4 * model.params.n_params());
    out.extend_from_slice(CLSP_MAGIC);
    out.extend_from_slice(&CLSP_VERSION.to_le_bytes());
    for v in [
        h.in_channels,
        h.embed_channels,
        h.hidden_channels,
        h.kernel,
        h.n_classes,
        h.history_len,
        h.horizon,
        h.batch_size,
        h.max_epochs,
        h.patience,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [h.step_size, h.beta1, h.beta2, h.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.seed.to_le_bytes());
    for t in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self.buf.get(self.pos..end).ok_or_else(|| Error::Corrupt("checkpoint truncated".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedConvLstm> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != CLSP_MAGIC {
        return Err(Error::Format("not a CLSP checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CLSP_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: CLSP_VERSION });
    }
    let mut ints = [0usize; 10];
    for v in ints.iter_mut() {
        *v = r.u32()? as usize;
    }
    let hyper = ConvLstmHyper {
        in_channels: ints[0],
        embed_channels: ints[1],
        hidden_channels: ints[2],
        kernel: ints[3],
        n_classes: ints[4],
        history_len: ints[5],
        horizon: ints[6],
        batch_size: ints[7],
        max_epochs: ints[8],
        patience: ints[9],
        step_size: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
        seed: r.take::<8>().map(u64::from_le_bytes)?,
    };
    hyper.validate().map_err(|e| Error::Corrupt(format!("checkpoint hyperparameters: {e}")))?;
    let mut params = ConvLstmParams::<f32>::zeros(&hyper);
    let expected = r.pos + 4 * params.n_params();
    if bytes.len() != expected {
        return Err(Error::Corrupt(format!("checkpoint is {} bytes, expected {expected}", bytes.len())));
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.take::<4>().map(f32::from_le_bytes)?;
        }
    }
    if !params.all_finite() {
        return Err(Error::Corrupt("checkpoint holds non-finite parameters".into()));
    }
    Ok(TrainedConvLstm { hyper, params })
}

pub fn save(model: &TrainedConvLstm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedConvLstm> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
