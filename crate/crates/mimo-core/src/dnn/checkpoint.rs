//! Versioned binary model checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic  b"MLPC"
//! u32    format version (currently 1)
//! u32    K, u32 M_R, u32 L, u32 M_T
//! u8     include_channel, u8 input_stage
//! f64    train_snr_db
//! u32    input_width, u32 output_width
//! u32    hidden stage count, then u32 per hidden width
//! f64[]  parameters in canonical order (per affine stage: weights
//!        row-major then biases; then per hidden stage: gamma, beta)
//! f64[]  per hidden stage: running mean, then running variance
//! ```
//!
//! Loads are strict: any truncation, trailing bytes, or inconsistency
//! between the declared widths and the array sizes is a format error.
//! Optimizer state is not serialized; loaded models are inference-ready.

use alloc::format;
use alloc::vec::Vec;

use super::net::{MlpArchitecture, MlpModel, ModelMeta};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MLPC";
const VERSION: u32 = 1;

/// Serialize a model to the checkpoint byte format.
pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let arch = model.arch();
    let meta = model.meta();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, meta.k as u32);
    put_u32(&mut out, meta.m_r as u32);
    put_u32(&mut out, meta.l as u32);
    put_u32(&mut out, meta.m_t as u32);
    out.push(u8::from(meta.include_channel));
    out.push(u8::from(arch.input_stage));
    put_f64(&mut out, meta.train_snr_db);
    put_u32(&mut out, arch.input_width as u32);
    put_u32(&mut out, arch.output_width as u32);
    put_u32(&mut out, arch.hidden_widths.len() as u32);
    for &w in &arch.hidden_widths {
        put_u32(&mut out, w as u32);
    }
    for &p in model.params() {
        put_f64(&mut out, p);
    }
    let (means, vars) = model.running_stats();
    for (mean, var) in means.iter().zip(vars) {
        for &v in mean {
            put_f64(&mut out, v);
        }
        for &v in var {
            put_f64(&mut out, v);
        }
    }
    out
}

/// Parse a checkpoint produced by [`encode_model`].
pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let k = r.u32()? as usize;
    let m_r = r.u32()? as usize;
    let l = r.u32()? as usize;
    let m_t = r.u32()? as usize;
    let include_channel = r.u8()? != 0;
    let input_stage = r.u8()? != 0;
    let train_snr_db = r.f64()?;
    let input_width = r.u32()? as usize;
    let output_width = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > 1024 {
        return Err(Error::Format(format!(
            "implausible hidden stage count {n_hidden}"
        )));
    }
    let mut hidden_widths = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden_widths.push(r.u32()? as usize);
    }
    let meta = ModelMeta {
        k,
        m_r,
        l,
        m_t,
        include_channel,
        train_snr_db,
    };
    let arch = MlpArchitecture {
        input_width,
        input_stage,
        hidden_widths,
        output_width,
    };
    if meta.feature_width() != arch.input_width {
        return Err(Error::Format(format!(
            "declared feature width {} does not match input width {}",
            meta.feature_width(),
            arch.input_width
        )));
    }
    if meta.k != arch.output_width {
        return Err(Error::Format(format!(
            "declared K = {} does not match output width {}",
            meta.k, arch.output_width
        )));
    }
    let total: usize = arch
        .stage_dims()
        .iter()
        .map(|(i, o)| i * o + o)
        .sum::<usize>()
        + 2 * arch.hidden_widths.iter().sum::<usize>();
    let mut params = Vec::with_capacity(total);
    for _ in 0..total {
        params.push(r.f64()?);
    }
    let mut running_mean = Vec::with_capacity(arch.hidden_widths.len());
    let mut running_var = Vec::with_capacity(arch.hidden_widths.len());
    for &w in &arch.hidden_widths {
        let mut mean = Vec::with_capacity(w);
        for _ in 0..w {
            mean.push(r.f64()?);
        }
        let mut var = Vec::with_capacity(w);
        for _ in 0..w {
            let v = r.f64()?;
            if !(v >= 0.0) {
                return Err(Error::Format(format!(
                    "running variance {v} is not nonnegative"
                )));
            }
            var.push(v);
        }
        running_mean.push(mean);
        running_var.push(var);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    MlpModel::restore(arch, meta, params, running_mean, running_var)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
