//! `SASC` network checkpoints: seed, hyperparameters and raw parameters.
//!
//! ```text
//! "SASC" | version u16 | seed u64 | features u32 | hidden u32 | kappa f64
//! | learning_rate f64 | adam_step u64 | B (2m f64)
//! | 8 parameter tensors | 8 first-moment tensors | 8 second-moment tensors
//! ```
//! Tensor order is `w1, b1, w2, b2, w3, b3, w4, b4`; sizes follow from `m` and `h`.

use std::path::Path;

use super::bytes::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::inr::{AdamState, FourierEncoder, MlpState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SASC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub encoder: FourierEncoder,
    pub net: MlpState,
    pub adam: AdamState,
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let p = Path::new("<memory>");
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    w.u64(c.seed);
    w.u32(to_u32(c.encoder.features(), p, "features")?);
    w.u32(to_u32(c.net.hidden(), p, "hidden")?);
    w.f64(c.encoder.kappa());
    w.f64(c.adam.learning_rate);
    w.u64(c.adam.step);
    w.f64s(c.encoder.b_matrix());
    for t in c.net.tensors() {
        w.f64s(t);
    }
    for t in c.adam.m.iter().chain(&c.adam.v) {
        w.f64s(t);
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let m = r.u32()? as usize;
    let h = r.u32()? as usize;
    let kappa = r.f64()?;
    let lr = r.f64()?;
    let step = r.u64()?;
    let encoder = FourierEncoder::new(r.f64s(2 * m)?, kappa).map_err(|e| Error::format(path, e.to_string()))?;
    let mut net = MlpState::zeros(2 * m, h);
    for t in net.tensors_mut() {
        let vals = r.f64s(t.len())?;
        t.copy_from_slice(&vals);
    }
    let net = MlpState::new(net.layers().to_vec()).map_err(|e| Error::format(path, e.to_string()))?;
    let sizes = net.tensor_sizes();
    let mut adam = AdamState::new(&sizes, lr);
    adam.step = step;
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        let n = t.len();
        *t = r.f64s(n)?;
    }
    r.finish()?;
    Ok(Checkpoint {
        seed,
        encoder,
        net,
        adam,
    })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&read_file(path)?, path)
}

pub fn write_checkpoint(path: impl AsRef<Path>, c: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(c)?)
}
