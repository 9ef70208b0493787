//! Model checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!   magic "AWNT", format version u32,
//!   architecture descriptor (u32 length + JSON),
//!   rng seed u64, training step count u64,
//!   convolution count u32, then per convolution:
//!   out u32, in u32, out*in*9 weight f64, out bias f64.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array4};

use crate::core::{ConvParams, UNetArch, UNetParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AWNT";
const VERSION: u32 = 1;

/// A deserialized checkpoint: parameters plus the provenance counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: UNetParams,
    pub seed: u64,
    pub step: u64,
}

pub fn checkpoint_to_bytes(params: &UNetParams, seed: u64, step: u64) -> Result<Vec<u8>> {
    params.validate()?;
    let arch_json = serde_json::to_vec(&params.arch)
        .map_err(|e| Error::Checkpoint(format!("serializing architecture: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arch_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch_json);
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&(params.convs.len() as u32).to_le_bytes());
    for conv in &params.convs {
        out.extend_from_slice(&(conv.out_channels() as u32).to_le_bytes());
        out.extend_from_slice(&(conv.in_channels() as u32).to_le_bytes());
        for v in conv.weight.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in conv.bias.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let arch_len = r.u32()? as usize;
    let arch: UNetArch = serde_json::from_slice(r.take(arch_len)?)
        .map_err(|e| Error::Checkpoint(format!("parsing architecture: {e}")))?;
    let seed = r.u64()?;
    let step = r.u64()?;
    let n_convs = r.u32()? as usize;
    let mut convs = Vec::with_capacity(n_convs);
    for _ in 0..n_convs {
        let out_ch = r.u32()? as usize;
        let in_ch = r.u32()? as usize;
        let weight = Array4::from_shape_vec((out_ch, in_ch, 3, 3), r.f64s(out_ch * in_ch * 9)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bias = Array1::from_vec(r.f64s(out_ch)?);
        convs.push(ConvParams { weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = UNetParams { arch, convs };
    params.validate()?;
    Ok(Checkpoint { params, seed, step })
}

pub fn save_checkpoint(path: &Path, params: &UNetParams, seed: u64, step: u64) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(params, seed, step)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&fs::read(path)?)
}
